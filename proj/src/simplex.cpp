#include "ctxbnn/simplex.hpp"

#include <cmath>
#include <limits>

namespace ctxbnn::simplex {

namespace {
constexpr double kPivotEps = 1e-12;
}

FeasibilityResult phase_one(const std::vector<double>& a, std::size_t rows, std::size_t cols,
                            const std::vector<double>& b, std::size_t max_iterations) {
  // Tableau columns: [original | artificial | rhs], plus a reduced-cost row.
  const std::size_t width = cols + rows + 1;
  const std::size_t rhs = width - 1;
  std::vector<double> t((rows + 1) * width, 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return t[r * width + c]; };

  for (std::size_t r = 0; r < rows; ++r) {
    const double sign = b[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < cols; ++c) at(r, c) = sign * a[r * cols + c];
    at(r, cols + r) = 1.0;
    at(r, rhs) = sign * b[r];
  }
  // Reduced costs for min sum(artificials) with the artificial basis.
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += at(r, c);
    at(rows, c) = -s;
  }
  double obj = 0.0;
  for (std::size_t r = 0; r < rows; ++r) obj += at(r, rhs);
  at(rows, rhs) = -obj;

  std::vector<std::size_t> basis(rows);
  for (std::size_t r = 0; r < rows; ++r) basis[r] = cols + r;

  FeasibilityResult result;
  std::size_t iter = 0;
  for (;; ++iter) {
    if (iter >= max_iterations) {
      result.status = Status::IterationLimit;
      break;
    }
    // Bland: lowest-index improving column.
    std::size_t enter = width;
    for (std::size_t c = 0; c + 1 < width; ++c) {
      if (at(rows, c) < -kPivotEps) {
        enter = c;
        break;
      }
    }
    if (enter == width) {
      result.status = Status::Optimal;
      break;
    }
    std::size_t leave = rows;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows; ++r) {
      const double coef = at(r, enter);
      if (coef <= kPivotEps) continue;
      const double ratio = at(r, rhs) / coef;
      if (ratio < best - kPivotEps || (std::abs(ratio - best) <= kPivotEps && leave < rows &&
                                       basis[r] < basis[leave])) {
        best = ratio;
        leave = r;
      }
    }
    if (leave == rows) {
      // Unbounded direction cannot occur for a phase-one objective bounded below by 0.
      result.status = Status::Breakdown;
      break;
    }
    const double pivot = at(leave, enter);
    for (std::size_t c = 0; c < width; ++c) at(leave, c) /= pivot;
    for (std::size_t r = 0; r <= rows; ++r) {
      if (r == leave) continue;
      const double factor = at(r, enter);
      if (factor == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c) at(r, c) -= factor * at(leave, c);
    }
    basis[leave] = enter;
  }

  result.x.assign(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (basis[r] < cols) result.x[basis[r]] = std::max(0.0, at(r, rhs));
  }
  double residual = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double ax = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ax += a[r * cols + c] * result.x[c];
    residual += std::abs(ax - b[r]);
  }
  result.residual = residual;
  if (!std::isfinite(residual)) result.status = Status::Breakdown;
  return result;
}

}  // namespace ctxbnn::simplex
