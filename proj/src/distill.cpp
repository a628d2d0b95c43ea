#include "microkd/distill.hpp"

#include <algorithm>
#include <cmath>

#include "microkd/kernels.hpp"
#include "microkd/metrics.hpp"
#include "microkd/util.hpp"

namespace mkd {

const char* objective_name(LossObjective o) {
  switch (o) {
    case LossObjective::sft: return "sft";
    case LossObjective::seqkd: return "seqkd";
    case LossObjective::kd: return "kd";
  }
  throw ContractError("bad objective enum");
}

LossObjective objective_from_name(const std::string& name) {
  if (name == "sft") return LossObjective::sft;
  if (name == "seqkd") return LossObjective::seqkd;
  if (name == "kd") return LossObjective::kd;
  throw ConfigError("unknown objective: " + name);
}

const char* policy_name(PolicyMode p) {
  return p == PolicyMode::off_policy ? "off_policy" : "on_policy";
}

PolicyMode policy_from_name(const std::string& name) {
  if (name == "off_policy") return PolicyMode::off_policy;
  if (name == "on_policy") return PolicyMode::on_policy;
  throw ConfigError("unknown policy mode: " + name);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (baseline_epochs < 1) throw ConfigError("train.baseline_epochs must be >= 1");
  if (!(sgo_mix >= 0.0 && sgo_mix <= 1.0)) throw ConfigError("train.sgo_mix must be in [0, 1]");
  if (!(skew_beta >= 0.0 && skew_beta <= 1.0))
    throw ConfigError("train.skew_beta must be in [0, 1]");
  if (max_gen_len < 1) throw ConfigError("train.max_gen_len must be >= 1");
  if (!(baseline_tau > 0.0)) throw ConfigError("train.baseline_tau must be > 0");
  if (subsets < 1) throw ConfigError("train.subsets must be >= 1");
  if (!(rrf_k > 0.0)) throw ConfigError("train.rrf_k must be > 0");
  if (!(schedule.tau0 > 0.0) || !(schedule.taun > 0.0))
    throw ConfigError("train.tau endpoints must be > 0");
  if (!(schedule.alpha0 >= 0.0 && schedule.alpha0 <= 1.0) ||
      !(schedule.alphan >= 0.0 && schedule.alphan <= 1.0))
    throw ConfigError("train.alpha endpoints must be in [0, 1]");
}

double TrainConfig::baseline_alpha() const {
  return policy == PolicyMode::on_policy ? 0.0 : schedule.alpha0;
}

TeacherCache::TeacherCache(const ModelParams& teacher, std::span<const Sample> samples)
    : teacher_(&teacher) {
  Workspace ws;
  std::vector<int> prefix, window;
  for (const Sample& s : samples) {
    std::vector<std::vector<double>> logits;
    logits.reserve(s.response.size());
    prefix.assign(s.prompt.begin(), s.prompt.end());
    for (int target : s.response) {
      context_window(prefix, teacher.dims.context, window);
      forward_logits(teacher, window, ws);
      logits.push_back(ws.logits);
      prefix.push_back(target);
    }
    gt_.emplace(s.id, std::move(logits));
  }
}

const std::vector<std::vector<double>>& TeacherCache::ground_truth(int64_t id) const {
  auto it = gt_.find(id);
  if (it == gt_.end())
    throw ContractError("teacher cache missing sample " + std::to_string(id));
  return it->second;
}

int64_t baseline_steps(int train_size, int batch_size, int epochs) {
  int64_t per_epoch = (train_size + batch_size - 1) / batch_size;
  return per_epoch * epochs;
}

int64_t planned_steps(const CurriculumPlan& plan, int batch_size) {
  int64_t total = 0;
  std::size_t cumulative = 0;
  for (const StagePlan& stage : plan.stages) {
    cumulative += stage.subset.size();
    int64_t per_epoch =
        (static_cast<int64_t>(cumulative) + batch_size - 1) / batch_size;
    total += per_epoch * stage.epochs;
  }
  return total;
}

namespace {

class Trainer {
 public:
  Trainer(ModelParams student, const TeacherCache* teacher, std::span<const Sample> train,
          std::span<const Sample> valid, const TrainConfig& cfg, LossObjective objective)
      : cfg_(cfg),
        objective_(objective),
        teacher_(teacher),
        train_(train),
        valid_(valid),
        student_(std::move(student)),
        grads_(init_params(student_.dims, 0)),
        optimizer_(AdamState::create(student_.dims, cfg.learning_rate)) {
    grads_.zero();
    for (const Sample& s : train_) by_id_.emplace(s.id, &s);
    if (objective_ != LossObjective::sft && teacher_ == nullptr)
      throw ContractError("teacher required for kd/seqkd objectives");
    if (objective_ == LossObjective::seqkd) build_tgo_targets();
  }

  Trainer(const Trainer&) = delete;

  StageStats run_stage(int stage_index, std::span<const int64_t> ids, double tau,
                       double alpha, int epochs, TrainTrace& trace) {
    StageStats stats;
    std::vector<int64_t> order(ids.begin(), ids.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    if (order.size() != ids.size())
      throw ContractError("duplicate sample ids in stage data");

    for (int e = 1; e <= epochs; ++e) {
      ++global_epoch_;
      std::vector<int64_t> shuffled = order;
      derive_stream(cfg_.master_seed, "shuffle",
                    {static_cast<uint64_t>(stage_index), static_cast<uint64_t>(e)})
          .shuffle(shuffled);
      double epoch_ce = 0.0, epoch_kd = 0.0, epoch_total = 0.0;
      int64_t epoch_tokens = 0;
      const std::size_t B = static_cast<std::size_t>(cfg_.batch_size);
      for (std::size_t start = 0, batch = 0; start < shuffled.size(); start += B, ++batch) {
        std::span<const int64_t> chunk(shuffled.data() + start,
                                       std::min(B, shuffled.size() - start));
        StageStats b = run_batch(stage_index, e, static_cast<int>(batch), chunk, tau, alpha);
        epoch_ce += b.ce;
        epoch_kd += b.kd;
        epoch_total += b.total;
        epoch_tokens += b.tokens;
        stats.ce += b.ce;
        stats.kd += b.kd;
        stats.total += b.total;
        stats.tokens += b.tokens;
        stats.steps += 1;
      }
      EpochRecord rec;
      rec.stage = stage_index;
      rec.epoch = global_epoch_;
      rec.ce = epoch_ce / static_cast<double>(epoch_tokens);
      rec.kd = epoch_kd / static_cast<double>(epoch_tokens);
      rec.total = epoch_total / static_cast<double>(epoch_tokens);
      rec.valid_rouge = validate();
      trace.epochs.push_back(rec);
      bool improved = valid_.empty() ? true : rec.valid_rouge > trace.best_valid;
      if (trace.epochs.size() == 1 || improved) {
        trace.best_valid = rec.valid_rouge;
        trace.best_epoch_index = trace.epochs.size() - 1;
        best_params_ = student_;
      }
      total_steps_ = optimizer_.step;
    }
    return stats;
  }

  TrainResult finish(CurriculumPlan plan, std::vector<DifficultyRecord> difficulty,
                     TrainTrace trace) {
    TrainResult result;
    result.params = best_params_.dims.vocab ? std::move(best_params_) : std::move(student_);
    result.trace = std::move(trace);
    result.plan = std::move(plan);
    result.difficulty = std::move(difficulty);
    result.optimizer_steps = total_steps_;
    return result;
  }

  ModelParams& student() { return student_; }
  AdamState& optimizer() { return optimizer_; }
  void set_global_epoch(int epoch) { global_epoch_ = epoch; }

 private:
  const Sample& sample_for(int64_t id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end())
      throw ContractError("stage data references unknown sample " + std::to_string(id));
    return *it->second;
  }

  void build_tgo_targets() {
    std::vector<int> out;
    for (const Sample& s : train_) {
      Rng rng = derive_stream(cfg_.master_seed, "tgo", {static_cast<uint64_t>(s.id)});
      tgo_.emplace(s.id, generate(teacher_->teacher(), s.prompt, 1.0, cfg_.max_gen_len, rng));
    }
  }

  StageStats run_batch(int stage, int epoch, int batch, std::span<const int64_t> chunk,
                       double tau, double alpha) {
    StageStats stats;
    grads_.zero();
    for (int64_t id : chunk) {
      const Sample& s = sample_for(id);
      const std::vector<int>* target = &s.response;
      bool sampled_target = false;
      if (objective_ == LossObjective::kd && cfg_.policy == PolicyMode::on_policy) {
        double coin = derive_stream(cfg_.master_seed, "sgo_coin",
                                    {static_cast<uint64_t>(stage), static_cast<uint64_t>(epoch),
                                     static_cast<uint64_t>(batch), static_cast<uint64_t>(id)})
                          .next_unit();
        if (coin < cfg_.sgo_mix) {
          Rng gen_rng = derive_stream(cfg_.master_seed, "sgo_gen",
                                      {static_cast<uint64_t>(stage), static_cast<uint64_t>(epoch),
                                       static_cast<uint64_t>(batch), static_cast<uint64_t>(id)});
          sgo_buffer_ = generate(student_, s.prompt, 1.0, cfg_.max_gen_len, gen_rng);
          target = &sgo_buffer_;
          sampled_target = true;
        }
      } else if (objective_ == LossObjective::seqkd) {
        target = &tgo_.at(id);
      }
      accumulate_sequence(s, *target, sampled_target, tau, alpha, stats);
    }
    if (!std::isfinite(stats.total))
      throw TrainError("non-finite batch loss", stage, epoch, batch);
    double inv = 1.0 / static_cast<double>(stats.tokens);
    for (auto block : grads_.blocks()) kern::scal(inv, block.data(), block.size());
    optimizer_step(student_, optimizer_, grads_);
    return stats;
  }

  void accumulate_sequence(const Sample& s, const std::vector<int>& target,
                           bool sampled_target, double tau, double alpha, StageStats& stats) {
    prefix_.assign(s.prompt.begin(), s.prompt.end());
    const std::vector<std::vector<double>>* cached =
        (objective_ == LossObjective::kd && !sampled_target)
            ? &teacher_->ground_truth(s.id)
            : nullptr;
    const int V = student_.dims.vocab;
    ce_grad_.resize(static_cast<std::size_t>(V));
    kd_grad_.resize(static_cast<std::size_t>(V));
    upstream_.resize(static_cast<std::size_t>(V));
    for (std::size_t i = 0; i < target.size(); ++i) {
      context_window(prefix_, student_.dims.context, window_);
      forward_logits(student_, window_, ws_);
      student_logits_ = ws_.logits;
      double ce = ce_position(student_logits_, target[i], ce_grad_);
      double kd = 0.0;
      if (objective_ == LossObjective::kd) {
        if (cached != nullptr) {
          kd = kd_position(cfg_.kind, (*cached)[i], student_logits_, tau, kd_grad_,
                           cfg_.skew_beta);
        } else {
          context_window(prefix_, teacher_->teacher().dims.context, teacher_window_);
          forward_logits(teacher_->teacher(), teacher_window_, teacher_ws_);
          kd = kd_position(cfg_.kind, teacher_ws_.logits, student_logits_, tau, kd_grad_,
                           cfg_.skew_beta);
        }
        for (std::size_t v = 0; v < upstream_.size(); ++v)
          upstream_[v] = alpha * ce_grad_[v] + (1.0 - alpha) * kd_grad_[v];
      } else {
        std::copy(ce_grad_.begin(), ce_grad_.end(), upstream_.begin());
      }
      backprop_prepared(student_, window_, upstream_, ws_, grads_);
      stats.ce += ce;
      stats.kd += kd;
      stats.total += objective_ == LossObjective::kd ? alpha * ce + (1.0 - alpha) * kd : ce;
      stats.tokens += 1;
      prefix_.push_back(target[i]);
    }
  }

  double validate() {
    if (valid_.empty()) return 0.0;
    double sum = 0.0;
    for (const Sample& s : valid_) {
      Rng rng = derive_stream(cfg_.master_seed, "valid", {static_cast<uint64_t>(s.id)});
      std::vector<int> out = generate(student_, s.prompt, 1.0, cfg_.max_gen_len, rng);
      sum += rouge_l(out, s.response).f;
    }
    return sum / static_cast<double>(valid_.size());
  }

  const TrainConfig& cfg_;
  LossObjective objective_;
  const TeacherCache* teacher_;
  std::span<const Sample> train_;
  std::span<const Sample> valid_;
  std::unordered_map<int64_t, const Sample*> by_id_;
  std::unordered_map<int64_t, std::vector<int>> tgo_;

  ModelParams student_;
  ModelParams grads_;
  AdamState optimizer_;
  ModelParams best_params_;
  int global_epoch_ = 0;
  int64_t total_steps_ = 0;

  Workspace ws_, teacher_ws_;
  std::vector<int> prefix_, window_, teacher_window_;
  std::vector<int> sgo_buffer_;
  std::vector<double> ce_grad_, kd_grad_, upstream_, student_logits_;
};

std::vector<int64_t> all_ids(std::span<const Sample> samples) {
  std::vector<int64_t> ids;
  ids.reserve(samples.size());
  for (const Sample& s : samples) ids.push_back(s.id);
  return ids;
}

}  // namespace

TrainResult train_teacher(const ModelDims& dims, uint64_t init_seed,
                          std::span<const Sample> train, std::span<const Sample> valid,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train set must not be empty");
  Trainer trainer(init_params(dims, init_seed), nullptr, train, valid, cfg,
                  LossObjective::sft);
  TrainTrace trace;
  trainer.run_stage(1, all_ids(train), 1.0, 1.0, cfg.baseline_epochs, trace);
  return trainer.finish({}, {}, std::move(trace));
}

StageStats kd_train_stage(ModelParams& student, AdamState& optimizer,
                          const TeacherCache& teacher, std::span<const Sample> stage_data,
                          int stage_index, double tau, double alpha, int epochs,
                          const TrainConfig& cfg, std::span<const Sample> valid,
                          TrainTrace* trace, int global_epoch_base) {
  cfg.validate();
  if (!(tau > 0.0)) throw ConfigError("stage temperature must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("stage alpha must be in [0, 1]");
  Trainer trainer(student, &teacher, stage_data, valid, cfg, LossObjective::kd);
  trainer.optimizer() = optimizer;
  trainer.set_global_epoch(global_epoch_base);
  TrainTrace local;
  TrainTrace& t = trace ? *trace : local;
  StageStats stats =
      trainer.run_stage(stage_index, all_ids(stage_data), tau, alpha, epochs, t);
  student = trainer.student();
  optimizer = trainer.optimizer();
  return stats;
}

TrainResult distill_baseline(const ModelParams& student_init, const TeacherCache* teacher,
                             std::span<const Sample> train, std::span<const Sample> valid,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train set must not be empty");
  Trainer trainer(student_init, teacher, train, valid, cfg, cfg.objective);
  TrainTrace trace;
  double tau = cfg.objective == LossObjective::kd ? cfg.baseline_tau : 1.0;
  double alpha = cfg.objective == LossObjective::kd ? cfg.baseline_alpha() : 1.0;
  trainer.run_stage(1, all_ids(train), tau, alpha, cfg.baseline_epochs, trace);
  return trainer.finish({}, {}, std::move(trace));
}

TrainResult distill_pocl(const ModelParams& student_init, const TeacherCache& teacher,
                         std::span<const Sample> train, std::span<const Sample> valid,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train set must not be empty");
  if (cfg.objective != LossObjective::kd && cfg.objective != LossObjective::seqkd)
    throw ConfigError("curriculum runs need a kd or seqkd objective");

  std::vector<DifficultyRecord> records = measure_difficulty(
      student_init, train, cfg.master_seed, cfg.max_gen_len, cfg.metric, cfg.rrf_k);
  CurriculumPlan plan = build_plan(records, cfg.subsets, cfg.schedule, cfg.order,
                                   cfg.baseline_epochs, cfg.policy == PolicyMode::on_policy,
                                   cfg.metric);

  Trainer trainer(student_init, &teacher, train, valid, cfg, cfg.objective);
  TrainTrace trace;
  std::vector<int64_t> cumulative;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const StagePlan& stage = plan.stages[i];
    cumulative.insert(cumulative.end(), stage.subset.begin(), stage.subset.end());
    trainer.run_stage(static_cast<int>(i + 1), cumulative, stage.tau, stage.alpha,
                      stage.epochs, trace);
  }
  return trainer.finish(std::move(plan), std::move(records), std::move(trace));
}

std::string trace_csv(const TrainTrace& trace) {
  std::string out = "stage,epoch,ce,kd,total,valid_rouge\n";
  for (const EpochRecord& rec : trace.epochs) {
    out += std::to_string(rec.stage);
    out += ',';
    out += std::to_string(rec.epoch);
    out += ',';
    out += format_double(rec.ce);
    out += ',';
    out += format_double(rec.kd);
    out += ',';
    out += format_double(rec.total);
    out += ',';
    out += format_double(rec.valid_rouge);
    out += '\n';
  }
  return out;
}

}  // namespace mkd
