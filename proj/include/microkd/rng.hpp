#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace mkd {

/// splitmix64 step; used both as a generator step and as a finalizer/mixer.
uint64_t splitmix64(uint64_t& state);

/// Deterministic stream of randomness. Every stochastic site owns its own
/// stream derived from (master seed, purpose tag, indices...), so streams
/// never interact and any site can be recomputed in isolation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Uniform integer in [0, n) without modulo bias.
  uint64_t bounded(uint64_t n);

  /// Index sampled from an unnormalized nonnegative weight vector
  /// (inverse CDF walk; last positive-weight index absorbs rounding slack).
  std::size_t sample_discrete(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

/// Derives the seed for one stochastic site. The tag names the site
/// ("shuffle", "sgo_coin", ...); indices pin stage/epoch/batch/sample.
uint64_t derive_seed(uint64_t master, std::string_view tag,
                     std::initializer_list<uint64_t> indices);

inline Rng derive_stream(uint64_t master, std::string_view tag,
                         std::initializer_list<uint64_t> indices) {
  return Rng(derive_seed(master, tag, indices));
}

}  // namespace mkd
