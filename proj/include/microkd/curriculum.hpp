#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "microkd/corpus.hpp"
#include "microkd/tinylm.hpp"

namespace mkd {

enum class RankingMetric { fusion, rouge_only, ce_only };
enum class OrderMode { easy_to_hard, hard_to_easy };

const char* ranking_metric_name(RankingMetric m);
RankingMetric ranking_metric_from_name(const std::string& name);
const char* order_mode_name(OrderMode m);
OrderMode order_mode_from_name(const std::string& name);

inline constexpr double kDefaultRrfK = 60.0;

struct DifficultyRecord {
  int64_t id = 0;
  double rouge_f = 0.0;   // student response vs ground truth
  double ce = 0.0;        // mean per-token student CE on ground truth
  int rank_rl = 0;        // 1 = highest rouge (easiest)
  int rank_ce = 0;        // 1 = lowest ce (easiest)
  double fr_score = 0.0;  // higher = easier
};

/// Probes every sample once with the initial student: one sampled response
/// (temperature 1, stream derived from (master_seed, "difficulty", id)) for
/// the ROUGE leg, teacher-forced CE on the ground truth for the CE leg.
/// Assigns both rank lists (ties broken by ascending id) and the fused
/// reciprocal-rank score sum_r 1/(k + rank_r) over the legs the metric keeps.
std::vector<DifficultyRecord> measure_difficulty(const ModelParams& student,
                                                 std::span<const Sample> train,
                                                 uint64_t master_seed, int max_gen_len,
                                                 RankingMetric metric = RankingMetric::fusion,
                                                 double k = kDefaultRrfK);

/// Assigns both rank lists and the fused score to records whose (id,
/// rouge_f, ce) fields are already filled. rank 1 = easiest on each leg;
/// ties broken by ascending id; fr = sum over kept legs of 1/(k + rank).
void rank_and_fuse(std::vector<DifficultyRecord>& records,
                   RankingMetric metric = RankingMetric::fusion,
                   double k = kDefaultRrfK);

/// Ids sorted easiest first: descending fr_score, ties ascending id.
std::vector<int64_t> fuse_and_sort(std::span<const DifficultyRecord> records);

/// Contiguous split of the sorted ids into n subsets; the first (N mod n)
/// subsets get floor(N/n) + 1 elements.
std::vector<std::vector<int64_t>> partition(std::span<const int64_t> sorted_ids, int n);

/// tau_i = tau0 + (taun - tau0) * (i - 1) / (n - 1); constant tau0 when n = 1.
double temperature_schedule(int i, int n, double tau0, double taun);

/// alpha_i = alpha0 - (alpha0 - alphan) * (i - 1) / (n - 1); constant when n = 1.
double ratio_schedule(int i, int n, double alpha0, double alphan);

/// Per-stage epochs = round(baseline_epochs * 2 / (n + 1)), at least 1.
int stage_epochs(int baseline_epochs, int n);

struct ScheduleConfig {
  double tau0 = 1.0;
  double taun = 2.0;
  double alpha0 = 0.3;
  double alphan = 0.0;
};

struct StagePlan {
  std::vector<int64_t> subset;  // new ids entering at this stage
  double tau = 1.0;
  double alpha = 0.0;
  int epochs = 0;
};

struct CurriculumPlan {
  std::vector<StagePlan> stages;
  OrderMode order = OrderMode::easy_to_hard;
  RankingMetric metric = RankingMetric::fusion;
};

/// Assembles subsets plus per-stage (tau, alpha, epochs). hard_to_easy
/// reverses the subset list of easy_to_hard; on_policy forces alpha = 0.
CurriculumPlan build_plan(std::span<const DifficultyRecord> records, int n,
                          const ScheduleConfig& schedule, OrderMode order,
                          int baseline_epochs, bool on_policy,
                          RankingMetric metric = RankingMetric::fusion);

/// rank CSV: sample_id, rouge_f, ce, rank_rl, rank_ce, fr_score, subset_index.
std::string difficulty_csv(std::span<const DifficultyRecord> records,
                           const CurriculumPlan& plan);

}  // namespace mkd
