#include "microkd/losses.hpp"

#include <cmath>
#include <cstring>

#include "microkd/tinylm.hpp"
#include "microkd/util.hpp"

namespace mkd {

const char* divergence_name(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::kld: return "kld";
    case DivergenceKind::rkl: return "rkl";
    case DivergenceKind::jsd: return "jsd";
    case DivergenceKind::tvd: return "tvd";
    case DivergenceKind::skl: return "skl";
    case DivergenceKind::srkl: return "srkl";
  }
  throw ContractError("bad divergence enum");
}

DivergenceKind divergence_from_name(const std::string& name) {
  for (DivergenceKind k : kAllDivergences)
    if (name == divergence_name(k)) return k;
  throw ConfigError("unknown divergence: " + name);
}

namespace {

void check_pair(std::span<const double> p, std::span<const double> q, double beta) {
  if (p.size() != q.size() || p.empty())
    throw std::domain_error("divergence needs equal-length nonempty distributions");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::domain_error("skew beta must be in [0, 1]");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!(p[i] > 0.0) || !(q[i] > 0.0))
      throw std::domain_error("divergence requires strictly positive distributions");
}

double kld_core(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

bool bitwise_equal(std::span<const double> p, std::span<const double> q) {
  return std::memcmp(p.data(), q.data(), sizeof(double) * p.size()) == 0;
}

}  // namespace

double divergence(DivergenceKind kind, std::span<const double> p,
                  std::span<const double> q, double beta) {
  check_pair(p, q, beta);
  if (bitwise_equal(p, q)) return 0.0;  // exact minimum for every kind
  const std::size_t n = p.size();
  switch (kind) {
    case DivergenceKind::kld:
      return kld_core(p, q);
    case DivergenceKind::rkl:
      return kld_core(q, p);
    case DivergenceKind::jsd: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = 0.5 * (p[i] + q[i]);
        s += 0.5 * p[i] * std::log(p[i] / m) + 0.5 * q[i] * std::log(q[i] / m);
      }
      return s;
    }
    case DivergenceKind::tvd: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(p[i] - q[i]);
      return 0.5 * s;
    }
    case DivergenceKind::skl: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        s += p[i] * std::log(p[i] / (beta * p[i] + (1.0 - beta) * q[i]));
      return s;
    }
    case DivergenceKind::srkl: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        s += q[i] * std::log(q[i] / ((1.0 - beta) * p[i] + beta * q[i]));
      return s;
    }
  }
  throw ContractError("bad divergence enum");
}

double ce_position(std::span<const double> logits, int target, std::span<double> grad_out) {
  if (logits.empty()) throw std::domain_error("ce over empty logits");
  if (target < 0 || target >= static_cast<int>(logits.size()))
    throw std::domain_error("ce target out of range");
  std::vector<double> q(logits.size());
  softmax_temperature(logits, 1.0, q);
  double loss = -std::log(q[static_cast<std::size_t>(target)]);
  if (!grad_out.empty()) {
    if (grad_out.size() != logits.size()) throw ContractError("ce grad size mismatch");
    for (std::size_t i = 0; i < q.size(); ++i) grad_out[i] = q[i];
    grad_out[static_cast<std::size_t>(target)] -= 1.0;
  }
  return loss;
}

double ce_loss(const std::vector<std::vector<double>>& logits, std::span<const int> targets) {
  if (targets.empty()) throw std::domain_error("ce_loss over empty target sequence");
  if (logits.size() != targets.size())
    throw std::domain_error("ce_loss logits/targets length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    s += ce_position(logits[i], targets[i], {});
  return s;
}

namespace {

/// Shared tail for kd gradients: grad_j = tau * q_j * (g_j - sum_k q_k g_k),
/// where g is d(D)/d(q) held in grad (in place). Folds in the tau^2 factor
/// and the 1/tau softmax jacobian.
void finish_kd_grad(std::span<const double> q, double tau, std::span<double> grad) {
  double mean = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) mean += q[i] * grad[i];
  for (std::size_t i = 0; i < q.size(); ++i) grad[i] = tau * q[i] * (grad[i] - mean);
}

}  // namespace

double kd_position(DivergenceKind kind, std::span<const double> teacher_logits,
                   std::span<const double> student_logits, double tau,
                   std::span<double> grad_out, double beta) {
  if (teacher_logits.size() != student_logits.size() || teacher_logits.empty())
    throw std::domain_error("kd_position needs equal-length nonempty logits");
  if (!(tau > 0.0)) throw std::domain_error("kd temperature must be > 0");
  const std::size_t n = teacher_logits.size();
  const bool want_grad = !grad_out.empty();
  if (want_grad && grad_out.size() != n) throw ContractError("kd grad size mismatch");

  std::vector<double> p(n), q(n);
  softmax_temperature(teacher_logits, tau, p);
  softmax_temperature(student_logits, tau, q);

  if (bitwise_equal(p, q)) {
    if (want_grad) std::fill(grad_out.begin(), grad_out.end(), 0.0);
    return 0.0;
  }

  double d = divergence(kind, p, q, beta);
  if (want_grad) {
    switch (kind) {
      case DivergenceKind::kld:
        // closed form: tau * (q - p), exact cancellation at q == p
        for (std::size_t i = 0; i < n; ++i) grad_out[i] = tau * (q[i] - p[i]);
        return tau * tau * d;
      case DivergenceKind::rkl:
        for (std::size_t i = 0; i < n; ++i)
          grad_out[i] = std::log(q[i] / p[i]) + 1.0;
        break;
      case DivergenceKind::jsd:
        for (std::size_t i = 0; i < n; ++i)
          grad_out[i] = 0.5 * std::log(q[i] / (0.5 * (p[i] + q[i])));
        break;
      case DivergenceKind::tvd:
        for (std::size_t i = 0; i < n; ++i) {
          double diff = q[i] - p[i];
          grad_out[i] = diff > 0.0 ? 0.5 : (diff < 0.0 ? -0.5 : 0.0);
        }
        break;
      case DivergenceKind::skl:
        for (std::size_t i = 0; i < n; ++i)
          grad_out[i] = -(1.0 - beta) * p[i] / (beta * p[i] + (1.0 - beta) * q[i]);
        break;
      case DivergenceKind::srkl:
        for (std::size_t i = 0; i < n; ++i) {
          double s = (1.0 - beta) * p[i] + beta * q[i];
          grad_out[i] = std::log(q[i] / s) + 1.0 - beta * q[i] / s;
        }
        break;
    }
    finish_kd_grad(q, tau, grad_out);
  }
  return tau * tau * d;
}

double kd_loss(DivergenceKind kind, const std::vector<std::vector<double>>& teacher_logits,
               const std::vector<std::vector<double>>& student_logits, double tau,
               double beta) {
  if (teacher_logits.size() != student_logits.size())
    throw std::domain_error("kd_loss teacher/student length mismatch");
  if (teacher_logits.empty()) throw std::domain_error("kd_loss over empty sequence");
  double s = 0.0;
  for (std::size_t i = 0; i < teacher_logits.size(); ++i)
    s += kd_position(kind, teacher_logits[i], student_logits[i], tau, {}, beta);
  return s;
}

LossBreakdown total_loss(double alpha, double tau, double ce, double kd, int64_t tokens) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("alpha must be in [0, 1]");
  LossBreakdown b;
  b.ce = ce;
  b.kd = kd;
  b.total = alpha * ce + (1.0 - alpha) * kd;
  b.alpha = alpha;
  b.tau = tau;
  b.tokens = tokens;
  return b;
}

}  // namespace mkd
