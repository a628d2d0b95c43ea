#include "microkd/curriculum.hpp"

#include <algorithm>
#include <cmath>

#include "microkd/losses.hpp"
#include "microkd/metrics.hpp"
#include "microkd/util.hpp"

namespace mkd {

const char* ranking_metric_name(RankingMetric m) {
  switch (m) {
    case RankingMetric::fusion: return "fusion";
    case RankingMetric::rouge_only: return "rouge_only";
    case RankingMetric::ce_only: return "ce_only";
  }
  throw ContractError("bad ranking metric enum");
}

RankingMetric ranking_metric_from_name(const std::string& name) {
  for (RankingMetric m : {RankingMetric::fusion, RankingMetric::rouge_only, RankingMetric::ce_only})
    if (name == ranking_metric_name(m)) return m;
  throw ConfigError("unknown ranking metric: " + name);
}

const char* order_mode_name(OrderMode m) {
  return m == OrderMode::easy_to_hard ? "easy_to_hard" : "hard_to_easy";
}

OrderMode order_mode_from_name(const std::string& name) {
  if (name == "easy_to_hard") return OrderMode::easy_to_hard;
  if (name == "hard_to_easy") return OrderMode::hard_to_easy;
  throw ConfigError("unknown order mode: " + name);
}

namespace {

/// Mean per-token CE of the model on the sample's ground-truth response.
double forced_ce(const ModelParams& params, const Sample& sample, Workspace& ws) {
  std::vector<int> prefix(sample.prompt.begin(), sample.prompt.end());
  std::vector<int> window;
  double total = 0.0;
  for (int target : sample.response) {
    context_window(prefix, params.dims.context, window);
    forward_logits(params, window, ws);
    total += ce_position(ws.logits, target, {});
    prefix.push_back(target);
  }
  return total / static_cast<double>(sample.response.size());
}

/// 1-based ranks under `less` (best first); ties broken by ascending id.
template <typename Less>
void assign_ranks(std::vector<DifficultyRecord>& records, Less less,
                  int DifficultyRecord::* rank_field) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (less(records[a], records[b])) return true;
    if (less(records[b], records[a])) return false;
    return records[a].id < records[b].id;
  });
  for (std::size_t r = 0; r < order.size(); ++r)
    records[order[r]].*rank_field = static_cast<int>(r + 1);
}

}  // namespace

std::vector<DifficultyRecord> measure_difficulty(const ModelParams& student,
                                                 std::span<const Sample> train,
                                                 uint64_t master_seed, int max_gen_len,
                                                 RankingMetric metric, double k) {
  if (train.empty()) throw ConfigError("measure_difficulty over empty train set");
  if (!(k > 0.0)) throw ConfigError("rrf k must be > 0");
  std::vector<DifficultyRecord> records;
  records.reserve(train.size());
  Workspace ws;
  for (const Sample& s : train) {
    DifficultyRecord rec;
    rec.id = s.id;
    Rng rng = derive_stream(master_seed, "difficulty", {static_cast<uint64_t>(s.id)});
    std::vector<int> probe = generate(student, s.prompt, 1.0, max_gen_len, rng);
    rec.rouge_f = rouge_l(probe, s.response).f;
    rec.ce = forced_ce(student, s, ws);
    records.push_back(rec);
  }

  rank_and_fuse(records, metric, k);
  return records;
}

void rank_and_fuse(std::vector<DifficultyRecord>& records, RankingMetric metric, double k) {
  if (!(k > 0.0)) throw ConfigError("rrf k must be > 0");
  assign_ranks(records,
               [](const DifficultyRecord& a, const DifficultyRecord& b) {
                 return a.rouge_f > b.rouge_f;  // high rouge = easy = rank 1
               },
               &DifficultyRecord::rank_rl);
  assign_ranks(records,
               [](const DifficultyRecord& a, const DifficultyRecord& b) {
                 return a.ce < b.ce;  // low ce = easy = rank 1
               },
               &DifficultyRecord::rank_ce);

  for (DifficultyRecord& rec : records) {
    switch (metric) {
      case RankingMetric::fusion:
        rec.fr_score = 1.0 / (k + rec.rank_rl) + 1.0 / (k + rec.rank_ce);
        break;
      case RankingMetric::rouge_only:
        rec.fr_score = 1.0 / (k + rec.rank_rl);
        break;
      case RankingMetric::ce_only:
        rec.fr_score = 1.0 / (k + rec.rank_ce);
        break;
    }
  }
}

std::vector<int64_t> fuse_and_sort(std::span<const DifficultyRecord> records) {
  std::vector<const DifficultyRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const DifficultyRecord& r : records) ptrs.push_back(&r);
  std::sort(ptrs.begin(), ptrs.end(), [](const DifficultyRecord* a, const DifficultyRecord* b) {
    if (a->fr_score != b->fr_score) return a->fr_score > b->fr_score;
    return a->id < b->id;
  });
  std::vector<int64_t> ids;
  ids.reserve(ptrs.size());
  for (const DifficultyRecord* p : ptrs) ids.push_back(p->id);
  return ids;
}

std::vector<std::vector<int64_t>> partition(std::span<const int64_t> sorted_ids, int n) {
  const int N = static_cast<int>(sorted_ids.size());
  if (n < 1) throw ConfigError("subset count must be >= 1");
  if (n > N) throw ConfigError("subset count exceeds sample count");
  std::vector<std::vector<int64_t>> subsets;
  subsets.reserve(static_cast<std::size_t>(n));
  int base = N / n;
  int extra = N % n;
  int cursor = 0;
  for (int i = 0; i < n; ++i) {
    int size = base + (i < extra ? 1 : 0);
    subsets.emplace_back(sorted_ids.begin() + cursor, sorted_ids.begin() + cursor + size);
    cursor += size;
  }
  return subsets;
}

double temperature_schedule(int i, int n, double tau0, double taun) {
  if (n < 1 || i < 1 || i > n) throw ConfigError("schedule index out of range");
  if (!(tau0 > 0.0) || !(taun > 0.0)) throw ConfigError("temperatures must be > 0");
  if (n == 1 || i == 1) return tau0;
  if (i == n) return taun;
  double t = static_cast<double>(i - 1) / static_cast<double>(n - 1);
  return tau0 + (taun - tau0) * t;
}

double ratio_schedule(int i, int n, double alpha0, double alphan) {
  if (n < 1 || i < 1 || i > n) throw ConfigError("schedule index out of range");
  if (!(alpha0 >= 0.0 && alpha0 <= 1.0 && alphan >= 0.0 && alphan <= 1.0))
    throw ConfigError("alpha endpoints must be in [0, 1]");
  if (n == 1 || i == 1) return alpha0;
  if (i == n) return alphan;
  double t = static_cast<double>(i - 1) / static_cast<double>(n - 1);
  return alpha0 - (alpha0 - alphan) * t;
}

int stage_epochs(int baseline_epochs, int n) {
  if (baseline_epochs < 1) throw ConfigError("baseline_epochs must be >= 1");
  if (n < 1) throw ConfigError("subset count must be >= 1");
  long rounded = std::lround(2.0 * baseline_epochs / (n + 1.0));
  return std::max(1, static_cast<int>(rounded));
}

CurriculumPlan build_plan(std::span<const DifficultyRecord> records, int n,
                          const ScheduleConfig& schedule, OrderMode order,
                          int baseline_epochs, bool on_policy, RankingMetric metric) {
  std::vector<int64_t> sorted = fuse_and_sort(records);
  std::vector<std::vector<int64_t>> subsets = partition(sorted, n);
  if (order == OrderMode::hard_to_easy)
    std::reverse(subsets.begin(), subsets.end());
  CurriculumPlan plan;
  plan.order = order;
  plan.metric = metric;
  int epochs = stage_epochs(baseline_epochs, n);
  for (int i = 1; i <= n; ++i) {
    StagePlan stage;
    stage.subset = std::move(subsets[static_cast<std::size_t>(i - 1)]);
    stage.tau = temperature_schedule(i, n, schedule.tau0, schedule.taun);
    stage.alpha = on_policy ? 0.0 : ratio_schedule(i, n, schedule.alpha0, schedule.alphan);
    stage.epochs = epochs;
    plan.stages.push_back(std::move(stage));
  }
  return plan;
}

std::string difficulty_csv(std::span<const DifficultyRecord> records,
                           const CurriculumPlan& plan) {
  std::vector<int> subset_of;
  int64_t max_id = -1;
  for (const DifficultyRecord& r : records) max_id = std::max(max_id, r.id);
  subset_of.assign(static_cast<std::size_t>(max_id + 1), -1);
  for (std::size_t s = 0; s < plan.stages.size(); ++s)
    for (int64_t id : plan.stages[s].subset)
      subset_of[static_cast<std::size_t>(id)] = static_cast<int>(s + 1);

  std::vector<const DifficultyRecord*> ordered;
  ordered.reserve(records.size());
  for (const DifficultyRecord& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const DifficultyRecord* a, const DifficultyRecord* b) { return a->id < b->id; });

  std::string out = "sample_id,rouge_f,ce,rank_rl,rank_ce,fr_score,subset_index\n";
  for (const DifficultyRecord* r : ordered) {
    out += std::to_string(r->id);
    out += ',';
    out += format_double(r->rouge_f);
    out += ',';
    out += format_double(r->ce);
    out += ',';
    out += std::to_string(r->rank_rl);
    out += ',';
    out += std::to_string(r->rank_ce);
    out += ',';
    out += format_double(r->fr_score);
    out += ',';
    out += std::to_string(subset_of[static_cast<std::size_t>(r->id)]);
    out += '\n';
  }
  return out;
}

}  // namespace mkd
