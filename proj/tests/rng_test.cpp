#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "microkd/rng.hpp"

using namespace mkd;

TEST_CASE("derive_seed is deterministic and tag-sensitive") {
  uint64_t a = derive_seed(1, "shuffle", {3, 7});
  CHECK(a == derive_seed(1, "shuffle", {3, 7}));
  CHECK(a != derive_seed(1, "shuffle", {7, 3}));
  CHECK(a != derive_seed(1, "shuffle", {3, 8}));
  CHECK(a != derive_seed(1, "sample", {3, 7}));
  CHECK(a != derive_seed(2, "shuffle", {3, 7}));
  CHECK(derive_seed(5, "x", {}) != derive_seed(5, "x", {0}));
}

TEST_CASE("streams with identical coordinates replay identical draws") {
  Rng a = derive_stream(9, "gen", {1, 2, 3});
  Rng b = derive_stream(9, "gen", {1, 2, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("next_unit lies in [0,1) and has a sane mean") {
  Rng rng(123);
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  // standard error of the mean is 1/sqrt(12 n) ~ 0.0029
  CHECK(std::abs(sum / n - 0.5) < 3.0 * 0.0029);
}

TEST_CASE("bounded draws cover the range without bias") {
  Rng rng(7);
  const int k = 8, n = 16000;
  std::vector<int> hist(k, 0);
  for (int i = 0; i < n; ++i) {
    uint64_t v = rng.bounded(k);
    REQUIRE(v < static_cast<uint64_t>(k));
    ++hist[v];
  }
  // each bucket ~ Binomial(n, 1/k): sd = sqrt(n p (1-p)) ~ 41.8
  const double expect = static_cast<double>(n) / k;
  const double sd = std::sqrt(n * (1.0 / k) * (1.0 - 1.0 / k));
  for (int c : hist) CHECK(std::abs(c - expect) < 5.0 * sd);
}

TEST_CASE("uniform stays inside its interval") {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    double v = rng.uniform(-3.0, 5.0);
    CHECK(v >= -3.0);
    CHECK(v < 5.0);
  }
}

TEST_CASE("sample_discrete follows the weights") {
  Rng rng(9);
  std::vector<double> w = {1.0, 0.0, 3.0};
  const int n = 12000;
  std::vector<int> hist(3, 0);
  for (int i = 0; i < n; ++i) ++hist[rng.sample_discrete(w)];
  CHECK(hist[1] == 0);
  // p0 = 1/4: sd ~ 47.4
  CHECK(std::abs(hist[0] - n * 0.25) < 5.0 * std::sqrt(n * 0.25 * 0.75));
  CHECK(hist[0] + hist[2] == n);
}

TEST_CASE("sample_discrete rejects empty and negative weights") {
  Rng rng(10);
  std::vector<double> empty;
  CHECK_THROWS(rng.sample_discrete(empty));
  std::vector<double> neg = {0.5, -0.1};
  CHECK_THROWS(rng.sample_discrete(neg));
  std::vector<double> zero = {0.0, 0.0};
  CHECK_THROWS(rng.sample_discrete(zero));
}

TEST_CASE("shuffle is a permutation and is seed-stable") {
  Rng a(11), b(11), c(12);
  std::vector<int> va = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> vb = va, vc = va;
  a.shuffle(va);
  b.shuffle(vb);
  c.shuffle(vc);
  CHECK(va == vb);
  CHECK(std::multiset<int>(va.begin(), va.end()) == std::multiset<int>(vc.begin(), vc.end()));
  CHECK(va != vc);  // one specific pair of seeds, frozen as a regression anchor
}

TEST_CASE("splitmix64 advances its state") {
  uint64_t s = 0;
  uint64_t first = splitmix64(s);
  uint64_t second = splitmix64(s);
  CHECK(first != second);
  uint64_t s2 = 0;
  CHECK(splitmix64(s2) == first);
}
