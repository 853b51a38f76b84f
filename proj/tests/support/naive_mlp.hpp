#pragma once

// Scalar long-double reference for the network loss. It shares no code with
// the library's batched implementation and is only used as a finite-difference
// oracle in tests.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ctxbnn/dataset.hpp"
#include "ctxbnn/mlp.hpp"

namespace ctxbnn::testing {

struct NaiveEval {
  long double loss = 0.0L;
  /// Sign pattern of every hidden pre-activation, used to spot ReLU kinks
  /// between the two finite-difference probes.
  std::vector<std::uint8_t> pattern;
};

inline NaiveEval naive_loss(const mlp::Architecture& arch, std::span<const double> theta,
                            const dataset::LabeledDataset& ds) {
  NaiveEval out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<long double> a(ds.row(i).begin(), ds.row(i).end());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < arch.layer_sizes.size(); ++l) {
      const std::size_t in = a.size();
      const std::size_t width = arch.layer_sizes[l];
      std::vector<long double> z(width);
      for (std::size_t o = 0; o < width; ++o) {
        long double s = theta[offset + in * width + o];
        for (std::size_t k = 0; k < in; ++k) s += theta[offset + o * in + k] * a[k];
        z[o] = s;
      }
      offset += in * width + width;
      if (l + 1 < arch.layer_sizes.size()) {
        for (auto& v : z) {
          out.pattern.push_back(v > 0.0L);
          v = arch.activation == mlp::Activation::Relu ? (v > 0.0L ? v : 0.0L) : std::tanh(v);
        }
      }
      a = std::move(z);
    }
    long double mx = a[0];
    for (auto v : a) mx = std::max(mx, v);
    long double sum = 0.0L;
    for (auto v : a) sum += std::exp(v - mx);
    out.loss += mx + std::log(sum) - a[static_cast<std::size_t>(ds.label(i))];
  }
  return out;
}

inline long double naive_log_posterior(const mlp::Architecture& arch,
                                       std::span<const double> theta,
                                       const dataset::LabeledDataset& ds, double variance) {
  long double sq = 0.0L;
  for (double v : theta) sq += static_cast<long double>(v) * v;
  return -naive_loss(arch, theta, ds).loss - sq / (2.0L * variance);
}

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Central differences of `f` at the given coordinates against `analytic`.
/// Coordinates whose probes straddle a ReLU kink are skipped and counted.
template <typename F>
FdResult compare_with_central_differences(F&& f, std::vector<double> theta,
                                          std::span<const double> analytic,
                                          std::span<const std::size_t> coords, double h = 1e-6) {
  FdResult r;
  for (std::size_t k : coords) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const auto plus = f(theta);
    theta[k] = saved - h;
    const auto minus = f(theta);
    theta[k] = saved;
    if (plus.pattern != minus.pattern) {
      ++r.skipped_kinks;
      continue;
    }
    const long double fd = (plus.loss - minus.loss) / (2.0L * h);
    const double a = analytic[k];
    const double denom =
        std::max({std::abs(static_cast<double>(fd)), std::abs(a), 1e-6});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(static_cast<double>(fd) - a) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace ctxbnn::testing
