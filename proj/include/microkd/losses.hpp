#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mkd {

enum class DivergenceKind { kld, rkl, jsd, tvd, skl, srkl };
inline constexpr DivergenceKind kAllDivergences[] = {
    DivergenceKind::kld, DivergenceKind::rkl, DivergenceKind::jsd,
    DivergenceKind::tvd, DivergenceKind::skl, DivergenceKind::srkl};

const char* divergence_name(DivergenceKind k);
DivergenceKind divergence_from_name(const std::string& name);

inline constexpr double kDefaultSkewBeta = 0.1;

/// D(p || q) in nats over full support; p and q must be strictly positive
/// and the same length. beta only affects skl/srkl.
double divergence(DivergenceKind kind, std::span<const double> p,
                  std::span<const double> q, double beta = kDefaultSkewBeta);

/// Cross entropy at one position: -log softmax(logits)[target].
/// grad_out (optional) receives d(loss)/d(logits) = softmax(logits) - onehot.
double ce_position(std::span<const double> logits, int target,
                   std::span<double> grad_out);

/// Sequence cross entropy (teacher forcing): sum over positions of
/// -log softmax(logits_i)[target_i]. Empty targets are a domain error.
double ce_loss(const std::vector<std::vector<double>>& logits,
               std::span<const int> targets);

/// KD term at one position: tau^2 * D(p_tau || q_tau) where p_tau / q_tau are
/// temperature-tau softmaxes of the teacher / student logits.
/// grad_out (optional) receives the exact gradient wrt student logits.
double kd_position(DivergenceKind kind, std::span<const double> teacher_logits,
                   std::span<const double> student_logits, double tau,
                   std::span<double> grad_out, double beta = kDefaultSkewBeta);

/// Sequence KD loss: sum of kd_position over positions.
double kd_loss(DivergenceKind kind, const std::vector<std::vector<double>>& teacher_logits,
               const std::vector<std::vector<double>>& student_logits, double tau,
               double beta = kDefaultSkewBeta);

struct LossBreakdown {
  double ce = 0.0;
  double kd = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double tau = 1.0;
  int64_t tokens = 0;
};

/// total = alpha * ce + (1 - alpha) * kd; alpha must lie in [0, 1].
LossBreakdown total_loss(double alpha, double tau, double ce, double kd, int64_t tokens);

}  // namespace mkd
