#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctxbnn::ncycle {

enum class ContextualityLabel : int { NonContextual = 0, Contextual = 1 };

inline constexpr double kFeasibilityTol = 1e-9;
inline constexpr std::size_t kMaxVertexCycle = 16;

/// Expectations of an n-cycle scenario: one single-observable mean <B_j> per
/// vertex and one neighbour correlator <B_j B_{j+1}> per edge (indices mod n).
class Behaviour {
 public:
  Behaviour(std::vector<double> singles, std::vector<double> correlators);

  /// All-zero (uniform) behaviour for an n-cycle.
  static Behaviour uniform(std::size_t n);

  /// Parses the flattened order <B_0>..<B_{n-1}>, <B_0B_1>..<B_{n-1}B_0>.
  static Behaviour from_flat(std::span<const double> flat);

  std::size_t n() const noexcept { return singles_.size(); }
  const std::vector<double>& singles() const noexcept { return singles_; }
  const std::vector<double>& correlators() const noexcept { return correlators_; }
  double single(std::size_t j) const { return singles_[j % n()]; }
  double correlator(std::size_t j) const { return correlators_[j % n()]; }

  std::vector<double> flat() const;

  bool operator==(const Behaviour&) const = default;

 private:
  std::vector<double> singles_;
  std::vector<double> correlators_;
};

/// Outcome rows of a context column.
enum class Outcome : std::size_t { PlusPlus = 0, PlusMinus = 1, MinusPlus = 2, MinusMinus = 3 };

/// p_{ij}: probability of outcome row i in context j = (B_j, B_{j+1}).
struct ProbabilityTable {
  std::vector<std::array<double, 4>> columns;

  std::size_t n() const noexcept { return columns.size(); }
  double at(Outcome row, std::size_t context) const {
    return columns[context][static_cast<std::size_t>(row)];
  }
  double min_entry() const;
};

/// Reconstructs the table from expectations; entries may be negative.
ProbabilityTable behaviour_to_table(const Behaviour& b);

bool is_nondisturbing(const Behaviour& b, double tol = kFeasibilityTol);
/// Same check on the flattened form, without building a Behaviour.
bool is_nondisturbing(std::span<const double> flat, double tol = kFeasibilityTol);

/// max over sign vectors gamma with an odd number of -1 entries of
/// sum_j gamma_j <B_j B_{j+1}>, by enumeration.
double max_odd_gamma_sum(const Behaviour& b);

/// Right-hand side of the n-cycle non-contextuality inequalities (3 for n=5).
inline double noncontextual_bound(std::size_t n) { return static_cast<double>(n) - 2.0; }

/// Ground-truth label. Throws InvalidInput if b is not non-disturbing.
ContextualityLabel kcbs_label(const Behaviour& b, double tol = kFeasibilityTol);

/// The 2^n deterministic assignments b in {+-1}^n with c_j = b_j b_{j+1}.
std::vector<Behaviour> noncontextual_vertices(std::size_t n);

/// Independent label by linear feasibility: is b a convex combination of
/// noncontextual_vertices(n)? Returns nullopt when the solve is inconclusive
/// (residual inside the ambiguity band or the solver broke down).
std::optional<ContextualityLabel> lp_membership_oracle(const Behaviour& b,
                                                       double tol = kFeasibilityTol);

std::string to_string(ContextualityLabel label);

/// One behaviour per line: 2n comma-separated reals in flat order, optionally
/// followed by a 0/1 label. Lines starting with '#' are skipped.
struct LabeledBehaviour {
  Behaviour behaviour;
  std::optional<ContextualityLabel> label;
};

std::vector<LabeledBehaviour> read_behaviours(std::istream& in, std::size_t n = 5,
                                              const std::string& source = "<stream>");
void write_behaviour(std::ostream& out, const Behaviour& b,
                     std::optional<ContextualityLabel> label = std::nullopt);

}  // namespace ctxbnn::ncycle
