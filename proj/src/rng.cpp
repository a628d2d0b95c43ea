#include "microkd/rng.hpp"

#include "microkd/util.hpp"

namespace mkd {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t Rng::bounded(uint64_t n) {
  if (n == 0) throw ContractError("Rng::bounded called with n == 0");
  uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    uint64_t x = gen_();
    if (x >= threshold) return x % n;
  }
}

std::size_t Rng::sample_discrete(std::span<const double> weights) {
  double total = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw ContractError("negative weight in sample_discrete");
    total += weights[i];
    if (weights[i] > 0.0) last_positive = i;
  }
  if (weights.empty() || total <= 0.0)
    throw ContractError("sample_discrete needs positive total weight");
  double u = next_unit() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc && weights[i] > 0.0) return i;
  }
  return last_positive;
}

uint64_t derive_seed(uint64_t master, std::string_view tag,
                     std::initializer_list<uint64_t> indices) {
  uint64_t state = master ^ fnv1a64(tag);
  uint64_t h = splitmix64(state);
  for (uint64_t idx : indices) {
    state ^= idx + 0x9e3779b97f4a7c15ull;
    h ^= splitmix64(state);
  }
  return h;
}

}  // namespace mkd
