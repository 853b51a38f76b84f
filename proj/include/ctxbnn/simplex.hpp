#pragma once

#include <cstddef>
#include <vector>

namespace ctxbnn::simplex {

enum class Status { Optimal, IterationLimit, Breakdown };

struct FeasibilityResult {
  Status status = Status::Breakdown;
  /// Optimal phase-one objective: minimal L1 residual ||A x - b||_1 over x >= 0.
  double residual = 0.0;
  std::vector<double> x;
};

/// Phase-one simplex for {x >= 0 : A x = b}. A is row-major rows x cols.
/// Uses Bland's rule, so it terminates on degenerate problems.
FeasibilityResult phase_one(const std::vector<double>& a, std::size_t rows, std::size_t cols,
                            const std::vector<double>& b, std::size_t max_iterations = 10000);

}  // namespace ctxbnn::simplex
