#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "microkd/losses.hpp"
#include "microkd/rng.hpp"
#include "microkd/tinylm.hpp"

using namespace mkd;

namespace {

std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) {
    x = 0.05 + rng.next_unit();  // bounded away from zero
    total += x;
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<double> random_logits(Rng& rng, std::size_t n) {
  std::vector<double> z(n);
  for (double& x : z) x = rng.uniform(-3.0, 3.0);
  return z;
}

}  // namespace

TEST_CASE("frozen two-point oracle values for all six divergences") {
  std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
  CHECK(divergence(DivergenceKind::kld, p, q) ==
        doctest::Approx(0.143841036225890).epsilon(1e-12));
  CHECK(divergence(DivergenceKind::rkl, p, q) ==
        doctest::Approx(0.130812035941137).epsilon(1e-12));
  CHECK(divergence(DivergenceKind::jsd, p, q) ==
        doctest::Approx(0.033822075568605).epsilon(1e-12));
  CHECK(divergence(DivergenceKind::tvd, p, q) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(divergence(DivergenceKind::skl, p, q, 0.1) ==
        doctest::Approx(0.113136722161569).epsilon(1e-12));
  CHECK(divergence(DivergenceKind::srkl, p, q, 0.1) ==
        doctest::Approx(0.107042736410951).epsilon(1e-12));
}

TEST_CASE("skew limits: beta edges reduce skl/srkl to zero or the plain kinds") {
  std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
  // skl at beta=1: r = p, so KL(p||p) = 0; srkl at beta=1: s = q likewise.
  CHECK(divergence(DivergenceKind::skl, p, q, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(divergence(DivergenceKind::srkl, p, q, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  // beta=0 collapses to the unskewed directions.
  CHECK(divergence(DivergenceKind::skl, p, q, 0.0) ==
        doctest::Approx(divergence(DivergenceKind::kld, p, q)).epsilon(1e-13));
  CHECK(divergence(DivergenceKind::srkl, p, q, 0.0) ==
        doctest::Approx(divergence(DivergenceKind::rkl, p, q)).epsilon(1e-13));
}

TEST_CASE("divergence axioms over 1000 random pairs") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 2 + rng.bounded(9);
    std::vector<double> p = random_distribution(rng, n);
    std::vector<double> q = random_distribution(rng, n);
    for (DivergenceKind kind : kAllDivergences) {
      double dpq = divergence(kind, p, q);
      CHECK(dpq >= 0.0);
      CHECK(divergence(kind, p, p) == 0.0);  // bitwise-equal inputs short-circuit
      if (kind == DivergenceKind::jsd || kind == DivergenceKind::tvd) {
        double dqp = divergence(kind, q, p);
        CHECK(dpq == doctest::Approx(dqp).epsilon(1e-12));  // symmetric kinds
      }
    }
    // JSD is bounded by ln 2.
    CHECK(divergence(DivergenceKind::jsd, p, q) <= std::log(2.0) + 1e-12);
    // TVD is bounded by 1.
    CHECK(divergence(DivergenceKind::tvd, p, q) <= 1.0 + 1e-15);
  }
}

TEST_CASE("divergence input validation") {
  std::vector<double> p = {0.5, 0.5}, q3 = {0.2, 0.3, 0.5}, zero = {0.0, 1.0};
  CHECK_THROWS(divergence(DivergenceKind::kld, p, q3));
  CHECK_THROWS(divergence(DivergenceKind::kld, p, zero));
  CHECK_THROWS(divergence(DivergenceKind::kld, zero, p));
  std::vector<double> empty;
  CHECK_THROWS(divergence(DivergenceKind::kld, empty, empty));
  CHECK_THROWS(divergence(DivergenceKind::skl, p, p, -0.1));
  CHECK_THROWS(divergence(DivergenceKind::skl, p, p, 1.1));
}

TEST_CASE("cross entropy of uniform logits over 4 classes is ln 4") {
  std::vector<double> logits = {0.0, 0.0, 0.0, 0.0};
  std::vector<double> grad(4);
  double ce = ce_position(logits, 2, grad);
  CHECK(ce == doctest::Approx(1.386294361119891).epsilon(1e-14));
  CHECK(grad[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(grad[2] == doctest::Approx(-0.75).epsilon(1e-14));
  double sum = grad[0] + grad[1] + grad[2] + grad[3];
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("ce gradient matches finite differences") {
  Rng rng(32);
  const double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 3 + rng.bounded(6);
    std::vector<double> z = random_logits(rng, n);
    int target = static_cast<int>(rng.bounded(n));
    std::vector<double> grad(n);
    ce_position(z, target, grad);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> zp = z, zm = z;
      zp[i] += eps;
      zm[i] -= eps;
      double numeric =
          (ce_position(zp, target, {}) - ce_position(zm, target, {})) / (2.0 * eps);
      CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("kld kd gradient equals the closed form tau*(q - p)") {
  Rng rng(33);
  for (double tau : {1.0, 4.0 / 3.0, 5.0 / 3.0, 2.0}) {
    for (int trial = 0; trial < 25; ++trial) {
      std::size_t n = 3 + rng.bounded(6);
      std::vector<double> zt = random_logits(rng, n), zs = random_logits(rng, n);
      std::vector<double> grad(n), p(n), q(n);
      kd_position(DivergenceKind::kld, zt, zs, tau, grad);
      {
        // independent softmax at temperature tau
        double mt = zt[0], ms = zs[0];
        for (double v : zt) mt = std::max(mt, v);
        for (double v : zs) ms = std::max(ms, v);
        double st = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          p[i] = std::exp((zt[i] - mt) / tau);
          q[i] = std::exp((zs[i] - ms) / tau);
          st += p[i];
          ss += q[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
          p[i] /= st;
          q[i] /= ss;
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        CHECK(std::abs(grad[i] - tau * (q[i] - p[i])) < 1e-10);
    }
  }
}

TEST_CASE("kd gradients match finite differences for every kind and stage tau") {
  Rng rng(34);
  const double eps = 1e-6;
  int instances = 0;
  for (DivergenceKind kind : kAllDivergences) {
    for (double tau : {1.0, 4.0 / 3.0, 5.0 / 3.0, 2.0}) {
      for (int trial = 0; trial < 5; ++trial) {
        std::size_t n = 3 + rng.bounded(6);
        std::vector<double> zt = random_logits(rng, n), zs = random_logits(rng, n);
        std::vector<double> grad(n);
        kd_position(kind, zt, zs, tau, grad);
        ++instances;
        for (std::size_t i = 0; i < n; ++i) {
          if (kind == DivergenceKind::tvd) {
            // skip coordinates near the |p-q| kink where FD is one-sided
            std::vector<double> p(n), q(n);
            {
              double mt = zt[0], ms = zs[0];
              for (double v : zt) mt = std::max(mt, v);
              for (double v : zs) ms = std::max(ms, v);
              double st = 0.0, ss = 0.0;
              for (std::size_t k = 0; k < n; ++k) {
                p[k] = std::exp((zt[k] - mt) / tau);
                q[k] = std::exp((zs[k] - ms) / tau);
                st += p[k];
                ss += q[k];
              }
              for (std::size_t k = 0; k < n; ++k) {
                p[k] /= st;
                q[k] /= ss;
              }
            }
            bool near_kink = false;
            for (std::size_t k = 0; k < n; ++k)
              if (std::abs(p[k] - q[k]) < 1e-3) near_kink = true;
            if (near_kink) continue;
          }
          std::vector<double> zp = zs, zm = zs;
          zp[i] += eps;
          zm[i] -= eps;
          double numeric =
              (kd_position(kind, zt, zp, tau, {}) - kd_position(kind, zt, zm, tau, {})) /
              (2.0 * eps);
          double denom = std::max(1e-8, std::abs(numeric));
          CHECK(std::abs(grad[i] - numeric) / denom < 1e-4);
        }
      }
    }
  }
  CHECK(instances >= 100);
}

TEST_CASE("kd value scales as tau^2 times the divergence of the softened pair") {
  Rng rng(35);
  std::vector<double> zt = random_logits(rng, 6), zs = random_logits(rng, 6);
  const double tau = 2.0;
  std::vector<double> p(6), q(6);
  softmax_temperature(zt, tau, p);
  softmax_temperature(zs, tau, q);
  for (DivergenceKind kind : kAllDivergences) {
    double kd = kd_position(kind, zt, zs, tau, {});
    CHECK(kd == doctest::Approx(tau * tau * divergence(kind, p, q)).epsilon(1e-12));
    CHECK(kd >= 0.0);
  }
}

TEST_CASE("identical logits give exactly zero kd loss and zero gradient") {
  std::vector<double> z = {0.3, -1.2, 2.0, 0.7};
  for (DivergenceKind kind : kAllDivergences) {
    std::vector<double> grad(4, 99.0);
    CHECK(kd_position(kind, z, z, 1.5, grad) == 0.0);
    for (double g : grad) CHECK(g == 0.0);
  }
}

TEST_CASE("sequence losses sum over positions") {
  std::vector<std::vector<double>> zt = {{0.1, 0.2, 0.3}, {1.0, -1.0, 0.0}};
  std::vector<std::vector<double>> zs = {{0.0, 0.0, 0.0}, {0.5, 0.5, -0.5}};
  std::vector<int> targets = {2, 0};
  double ce = ce_loss(zs, targets);
  CHECK(ce == doctest::Approx(ce_position(zs[0], 2, {}) + ce_position(zs[1], 0, {}))
                  .epsilon(1e-15));
  double kd = kd_loss(DivergenceKind::jsd, zt, zs, 1.5);
  CHECK(kd == doctest::Approx(kd_position(DivergenceKind::jsd, zt[0], zs[0], 1.5, {}) +
                              kd_position(DivergenceKind::jsd, zt[1], zs[1], 1.5, {}))
                  .epsilon(1e-15));
  CHECK_THROWS(ce_loss({}, {}));
  std::vector<int> bad = {1};
  CHECK_THROWS(ce_loss(zs, bad));
}

TEST_CASE("total loss is the exact convex combination") {
  LossBreakdown lb = total_loss(0.3, 1.5, 2.0, 4.0, 10);
  CHECK(lb.total == doctest::Approx(0.3 * 2.0 + 0.7 * 4.0).epsilon(1e-12));
  CHECK(lb.alpha == 0.3);
  CHECK(lb.tau == 1.5);
  CHECK(lb.tokens == 10);
  CHECK(total_loss(0.0, 1.0, 123.0, 4.0, 1).total == 4.0);
  CHECK(total_loss(1.0, 1.0, 2.0, 99.0, 1).total == 2.0);
  CHECK_THROWS(total_loss(-0.1, 1.0, 1.0, 1.0, 1));
  CHECK_THROWS(total_loss(1.1, 1.0, 1.0, 1.0, 1));
}
