#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "microkd/corpus.hpp"
#include "microkd/distill.hpp"
#include "microkd/metrics.hpp"

namespace mkd {

struct ArmSpec {
  std::string name;
  LossObjective objective = LossObjective::kd;
  DivergenceKind kind = DivergenceKind::kld;
  PolicyMode policy = PolicyMode::off_policy;
  bool pocl = false;
  OrderMode order = OrderMode::easy_to_hard;
  RankingMetric metric = RankingMetric::fusion;
  ScheduleConfig schedule;  // tau/alpha endpoints (ablations flip directions)
};

struct ExperimentConfig {
  CorpusSpec corpus;
  std::string corpus_file;  // optional JSONL to load instead of generating

  SplitFractions split;
  uint64_t split_seed = 11;

  uint64_t teacher_init_seed = 101;
  double teacher_learning_rate = 2e-3;
  int teacher_batch_size = 8;
  int teacher_epochs = 100;
  std::string teacher_checkpoint;  // optional: load instead of training

  uint64_t student_init_seed = 202;
  TrainConfig train;  // shared optimization + schedule defaults for arms

  std::vector<uint64_t> train_seeds = {1, 2, 3, 4, 5};
  std::vector<uint64_t> eval_seeds = {10, 20, 30, 40, 50};
  int eval_max_len = 24;
  std::string eval_checkpoint;       // standalone eval: model to score
  std::string eval_split = "test";   // standalone eval: which split to score
  bool single_run_pocl = false;      // standalone distill: curriculum on/off

  std::vector<ArmSpec> arms;  // empty -> default_arms()
  std::vector<std::string> grid_axes;  // subset of {order, tau_direction, alpha_direction, ranking}
  int jobs = 1;

  void validate() const;
};

/// Comparison structure mirroring the main results table: SFT and SeqKD
/// baselines, six off-policy divergences and the on-policy arm, each with
/// its curriculum counterpart.
std::vector<ArmSpec> default_arms(const ExperimentConfig& cfg);

/// Curriculum-design variants of the kld+pocl arm along the requested axes.
std::vector<ArmSpec> ablation_arms(const ExperimentConfig& cfg,
                                   std::span<const std::string> axes);

ExperimentConfig config_from_json(const std::string& json_text);
ExperimentConfig default_config();
std::string config_to_json(const ExperimentConfig& cfg);

struct ArmOutcome {
  std::string name;
  std::vector<uint64_t> seeds;
  std::vector<double> per_seed;  // grand-mean test ROUGE-L per training seed
  double mean = 0.0;
  double stddev = 0.0;
  bool failed = false;
  std::vector<std::string> errors;
};

struct PairDelta {
  std::string base;
  std::string treatment;
  double delta = 0.0;  // treatment mean - base mean
};

struct ComparisonReport {
  std::vector<ArmOutcome> arms;
  std::vector<PairDelta> pairs;
  std::string corpus_hash;
  std::string config_fingerprint;
  double teacher_valid_rouge = 0.0;
  bool all_ok = true;
};

/// Trains the teacher once (or loads it), then every arm x training seed;
/// evaluates each student on the test split; writes the full output tree
/// (manifest.json, teacher.ckpt, arms/<name>/seed<k>/..., report/...).
ComparisonReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

std::string detail_csv(const ComparisonReport& report);
std::string summary_json(const ComparisonReport& report);
std::string table_txt(const ComparisonReport& report);

/// Re-aggregates summary.json and table.txt from report/detail.csv and the
/// manifest's arm list (pure given the detail data).
void rerender_report(const std::string& out_dir);

std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace mkd
