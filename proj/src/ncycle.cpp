#include "ctxbnn/ncycle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "ctxbnn/csv.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/simplex.hpp"

namespace ctxbnn::ncycle {

Behaviour::Behaviour(std::vector<double> singles, std::vector<double> correlators)
    : singles_(std::move(singles)), correlators_(std::move(correlators)) {
  if (singles_.empty() || singles_.size() != correlators_.size()) {
    throw UsageError("behaviour needs n singles and n correlators with n >= 1");
  }
}

Behaviour Behaviour::uniform(std::size_t n) {
  return Behaviour(std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
}

Behaviour Behaviour::from_flat(std::span<const double> flat) {
  if (flat.empty() || flat.size() % 2 != 0) {
    throw UsageError("flattened behaviour must have 2n entries, got " +
                     std::to_string(flat.size()));
  }
  const std::size_t n = flat.size() / 2;
  return Behaviour({flat.begin(), flat.begin() + n}, {flat.begin() + n, flat.end()});
}

std::vector<double> Behaviour::flat() const {
  std::vector<double> out(singles_);
  out.insert(out.end(), correlators_.begin(), correlators_.end());
  return out;
}

double ProbabilityTable::min_entry() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& col : columns) {
    for (double p : col) m = std::min(m, p);
  }
  return m;
}

ProbabilityTable behaviour_to_table(const Behaviour& b) {
  ProbabilityTable table;
  table.columns.resize(b.n());
  for (std::size_t j = 0; j < b.n(); ++j) {
    const double x = b.single(j);
    const double y = b.single(j + 1);
    const double c = b.correlator(j);
    table.columns[j] = {
        (1.0 + x + y + c) / 4.0,
        (1.0 + x - y - c) / 4.0,
        (1.0 - x + y - c) / 4.0,
        (1.0 - x - y + c) / 4.0,
    };
  }
  return table;
}

bool is_nondisturbing(const Behaviour& b, double tol) {
  return behaviour_to_table(b).min_entry() >= -tol;
}

bool is_nondisturbing(std::span<const double> flat, double tol) {
  if (flat.empty() || flat.size() % 2 != 0) {
    throw UsageError("flattened behaviour must have 2n entries");
  }
  const std::size_t n = flat.size() / 2;
  const double bound = -4.0 * tol;
  for (std::size_t j = 0; j < n; ++j) {
    const double x = flat[j];
    const double y = flat[(j + 1) % n];
    const double c = flat[n + j];
    if (1.0 + x + y + c < bound || 1.0 + x - y - c < bound || 1.0 - x + y - c < bound ||
        1.0 - x - y + c < bound) {
      return false;
    }
  }
  return true;
}

double max_odd_gamma_sum(const Behaviour& b) {
  const std::size_t n = b.n();
  if (n > 30) throw UsageError("cycle too long for sign enumeration");
  double best = -std::numeric_limits<double>::infinity();
  // Bit j set means gamma_j = -1.
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) % 2 == 0) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += ((mask >> j) & 1u) ? -b.correlator(j) : b.correlator(j);
    }
    best = std::max(best, s);
  }
  return best;
}

ContextualityLabel kcbs_label(const Behaviour& b, double tol) {
  if (!is_nondisturbing(b, tol)) {
    throw InvalidInput("behaviour violates non-disturbance; contextuality is undefined");
  }
  return max_odd_gamma_sum(b) <= noncontextual_bound(b.n()) + tol
             ? ContextualityLabel::NonContextual
             : ContextualityLabel::Contextual;
}

std::vector<Behaviour> noncontextual_vertices(std::size_t n) {
  if (n < 3 || n > kMaxVertexCycle) {
    throw UsageError("vertex enumeration supports 3 <= n <= " +
                     std::to_string(kMaxVertexCycle));
  }
  std::vector<Behaviour> out;
  out.reserve(std::size_t{1} << n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<double> s(n), c(n);
    for (std::size_t j = 0; j < n; ++j) s[j] = ((mask >> j) & 1u) ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) c[j] = s[j] * s[(j + 1) % n];
    out.emplace_back(std::move(s), std::move(c));
  }
  return out;
}

std::optional<ContextualityLabel> lp_membership_oracle(const Behaviour& b, double tol) {
  if (!is_nondisturbing(b, tol)) {
    throw InvalidInput("behaviour violates non-disturbance; contextuality is undefined");
  }
  const auto vertices = noncontextual_vertices(b.n());
  const std::size_t dim = 2 * b.n();
  const std::size_t rows = dim + 1;
  const std::size_t cols = vertices.size();

  // Columns are vertices; rows are the 2n coordinates plus sum(lambda) = 1.
  std::vector<double> a(rows * cols);
  for (std::size_t k = 0; k < cols; ++k) {
    const auto v = vertices[k].flat();
    for (std::size_t i = 0; i < dim; ++i) a[i * cols + k] = v[i];
    a[dim * cols + k] = 1.0;
  }
  std::vector<double> rhs = b.flat();
  rhs.push_back(1.0);

  const auto result = simplex::phase_one(a, rows, cols, rhs);
  if (result.status != simplex::Status::Optimal) return std::nullopt;
  // A point violating a facet by delta has L1 residual >= delta, so anything
  // between tol and 100 tol is too close to a facet to call.
  if (result.residual <= tol) return ContextualityLabel::NonContextual;
  if (result.residual >= 100.0 * tol) return ContextualityLabel::Contextual;
  return std::nullopt;
}

std::string to_string(ContextualityLabel label) {
  return label == ContextualityLabel::Contextual ? "contextual" : "noncontextual";
}

std::vector<LabeledBehaviour> read_behaviours(std::istream& in, std::size_t n,
                                              const std::string& source) {
  std::vector<LabeledBehaviour> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = csv::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto fields = csv::split(text);
    if (fields.size() != 2 * n && fields.size() != 2 * n + 1) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(2 * n) + " or " + std::to_string(2 * n + 1) +
                           " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> flat(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) flat[i] = csv::parse_real(fields[i], source, lineno);
    std::optional<ContextualityLabel> label;
    if (fields.size() == 2 * n + 1) {
      const auto v = csv::parse_int(fields.back(), source, lineno);
      if (v != 0 && v != 1) throw ParseError(source, lineno, "label must be 0 or 1");
      label = static_cast<ContextualityLabel>(v);
    }
    out.push_back({Behaviour::from_flat(flat), label});
  }
  return out;
}

void write_behaviour(std::ostream& out, const Behaviour& b,
                     std::optional<ContextualityLabel> label) {
  const auto flat = b.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (i) out << ',';
    out << csv::format_real(flat[i]);
  }
  if (label) out << ',' << static_cast<int>(*label);
  out << '\n';
}

}  // namespace ctxbnn::ncycle
