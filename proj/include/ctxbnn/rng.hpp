#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace ctxbnn {

/// Seedable generator with a fully specified output stream.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// The distribution layer is implemented here rather than with the <random>
/// distributions, whose algorithms are implementation-defined, so that the
/// same seed gives the same draws with any standard library.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Derive an independent child seed, e.g. one per grid cell.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ctxbnn
