#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "microkd/corpus.hpp"
#include "microkd/curriculum.hpp"
#include "microkd/losses.hpp"
#include "microkd/tinylm.hpp"

namespace mkd {

enum class LossObjective { sft, seqkd, kd };
enum class PolicyMode { off_policy, on_policy };

const char* objective_name(LossObjective o);
LossObjective objective_from_name(const std::string& name);
const char* policy_name(PolicyMode p);
PolicyMode policy_from_name(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-2;
  int batch_size = 8;
  int baseline_epochs = 20;
  uint64_t master_seed = 1;

  LossObjective objective = LossObjective::kd;
  DivergenceKind kind = DivergenceKind::kld;
  PolicyMode policy = PolicyMode::off_policy;
  double sgo_mix = 0.5;
  double skew_beta = kDefaultSkewBeta;
  int max_gen_len = 24;
  double baseline_tau = 1.0;  // fixed temperature for non-curriculum KD arms

  int subsets = 4;
  double rrf_k = kDefaultRrfK;
  ScheduleConfig schedule;
  OrderMode order = OrderMode::easy_to_hard;
  RankingMetric metric = RankingMetric::fusion;

  void validate() const;

  /// Fixed alpha used by non-curriculum arms (alpha0 off-policy, 0 on-policy).
  double baseline_alpha() const;
};

/// Teacher logits on ground-truth target positions, computed once; the
/// teacher is frozen so these are pure values shared across runs.
class TeacherCache {
 public:
  TeacherCache(const ModelParams& teacher, std::span<const Sample> samples);
  const std::vector<std::vector<double>>& ground_truth(int64_t id) const;
  const ModelParams& teacher() const { return *teacher_; }

 private:
  const ModelParams* teacher_;
  std::unordered_map<int64_t, std::vector<std::vector<double>>> gt_;
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // global, 1-based, strictly increasing across stages
  double ce = 0.0;      // per-token means over the epoch
  double kd = 0.0;
  double total = 0.0;
  double valid_rouge = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch_index = 0;
  double best_valid = 0.0;
};

struct StageStats {
  double ce = 0.0;
  double kd = 0.0;
  double total = 0.0;
  int64_t tokens = 0;
  int64_t steps = 0;
};

struct TrainResult {
  ModelParams params;  // best checkpoint by validation ROUGE-L
  TrainTrace trace;
  CurriculumPlan plan;
  std::vector<DifficultyRecord> difficulty;  // empty for non-curriculum runs
  int64_t optimizer_steps = 0;
};

int64_t baseline_steps(int train_size, int batch_size, int epochs);
int64_t planned_steps(const CurriculumPlan& plan, int batch_size);

/// Supervised training of a fresh model (used for the teacher).
TrainResult train_teacher(const ModelDims& dims, uint64_t init_seed,
                          std::span<const Sample> train, std::span<const Sample> valid,
                          const TrainConfig& cfg);

/// One curriculum stage over `stage_data`, mutating student and optimizer
/// state in place. Streams derive from (cfg.master_seed, tag, stage_index,
/// epoch, batch, sample id), so a stage is reproducible in isolation.
StageStats kd_train_stage(ModelParams& student, AdamState& optimizer,
                          const TeacherCache& teacher, std::span<const Sample> stage_data,
                          int stage_index, double tau, double alpha, int epochs,
                          const TrainConfig& cfg, std::span<const Sample> valid,
                          TrainTrace* trace = nullptr, int global_epoch_base = 0);

/// Fixed-(tau, alpha) single-stage run: SFT, SeqKD, or plain KD per
/// cfg.objective. `teacher` may be null only for SFT.
TrainResult distill_baseline(const ModelParams& student_init, const TeacherCache* teacher,
                             std::span<const Sample> train, std::span<const Sample> valid,
                             const TrainConfig& cfg);

/// Full curriculum run: difficulty measurement with the initial student,
/// reciprocal-rank fusion, Baby Step stages over cumulative unions with
/// scheduled (tau_i, alpha_i), equal total compute with the matched baseline.
TrainResult distill_pocl(const ModelParams& student_init, const TeacherCache& teacher,
                         std::span<const Sample> train, std::span<const Sample> valid,
                         const TrainConfig& cfg);

/// trace CSV: stage, epoch, ce, kd, total, valid_rouge.
std::string trace_csv(const TrainTrace& trace);

}  // namespace mkd
