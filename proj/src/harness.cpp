#include "microkd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <thread>

#include <json.hpp>

#include "microkd/kernels.hpp"
#include "microkd/util.hpp"

namespace mkd {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const char* section,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw ConfigError(std::string("unknown config key ") + section + "." + key);
  }
}

json arm_to_json(const ArmSpec& a) {
  json j;
  j["name"] = a.name;
  j["objective"] = objective_name(a.objective);
  j["divergence"] = divergence_name(a.kind);
  j["policy"] = policy_name(a.policy);
  j["pocl"] = a.pocl;
  j["order"] = order_mode_name(a.order);
  j["ranking"] = ranking_metric_name(a.metric);
  j["tau0"] = a.schedule.tau0;
  j["taun"] = a.schedule.taun;
  j["alpha0"] = a.schedule.alpha0;
  j["alphan"] = a.schedule.alphan;
  return j;
}

ArmSpec arm_from_json(const json& j, const ArmSpec& defaults) {
  check_keys(j, "arm",
             {"name", "objective", "divergence", "policy", "pocl", "order", "ranking",
              "tau0", "taun", "alpha0", "alphan"});
  ArmSpec a = defaults;
  if (!j.contains("name")) throw ConfigError("experiment.arms entry missing name");
  a.name = j.at("name").get<std::string>();
  if (j.contains("objective")) a.objective = objective_from_name(j["objective"]);
  if (j.contains("divergence")) a.kind = divergence_from_name(j["divergence"]);
  if (j.contains("policy")) a.policy = policy_from_name(j["policy"]);
  if (j.contains("pocl")) a.pocl = j["pocl"].get<bool>();
  if (j.contains("order")) a.order = order_mode_from_name(j["order"]);
  if (j.contains("ranking")) a.metric = ranking_metric_from_name(j["ranking"]);
  if (j.contains("tau0")) a.schedule.tau0 = j["tau0"].get<double>();
  if (j.contains("taun")) a.schedule.taun = j["taun"].get<double>();
  if (j.contains("alpha0")) a.schedule.alpha0 = j["alpha0"].get<double>();
  if (j.contains("alphan")) a.schedule.alphan = j["alphan"].get<double>();
  return a;
}

}  // namespace

void ExperimentConfig::validate() const {
  corpus.validate(teacher_dims(8).context);
  const double fr[3] = {split.train, split.valid, split.test};
  (void)apportion(corpus.num_samples, fr);
  if (teacher_epochs < 1) throw ConfigError("teacher.epochs must be >= 1");
  if (!(teacher_learning_rate > 0.0)) throw ConfigError("teacher.learning_rate must be > 0");
  if (teacher_batch_size < 1) throw ConfigError("teacher.batch_size must be >= 1");
  train.validate();
  if (train_seeds.empty()) throw ConfigError("experiment.train_seeds must not be empty");
  if (eval_seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (eval_max_len < 1) throw ConfigError("eval.max_gen_len must be >= 1");
  if (eval_split != "train" && eval_split != "valid" && eval_split != "test")
    throw ConfigError("eval.split must be train, valid, or test");
  if (jobs < 1) throw ConfigError("experiment.jobs must be >= 1");
  for (const std::string& axis : grid_axes) {
    if (axis != "order" && axis != "tau_direction" && axis != "alpha_direction" &&
        axis != "ranking")
      throw ConfigError("unknown grid axis: " + axis);
  }
  ModelDims td = teacher_dims(8), sd = student_dims(8);
  if (td.embed < sd.embed || td.hidden < sd.hidden || td.context != sd.context)
    throw ConfigError("teacher preset must dominate student preset");
  std::vector<std::string> names;
  for (const ArmSpec& a : arms) {
    if (a.name.empty()) throw ConfigError("arm name must not be empty");
    names.push_back(a.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw ConfigError("duplicate arm name");
}

std::vector<ArmSpec> default_arms(const ExperimentConfig& cfg) {
  std::vector<ArmSpec> arms;
  ArmSpec base;
  base.schedule = cfg.train.schedule;
  base.order = cfg.train.order;
  base.metric = cfg.train.metric;

  ArmSpec sft = base;
  sft.name = "sft";
  sft.objective = LossObjective::sft;
  arms.push_back(sft);

  ArmSpec seqkd = base;
  seqkd.name = "seqkd";
  seqkd.objective = LossObjective::seqkd;
  arms.push_back(seqkd);

  for (DivergenceKind kind : kAllDivergences) {
    ArmSpec off = base;
    off.objective = LossObjective::kd;
    off.kind = kind;
    off.policy = PolicyMode::off_policy;
    off.name = divergence_name(kind);
    arms.push_back(off);
    ArmSpec pocl = off;
    pocl.pocl = true;
    pocl.name = off.name + "+pocl";
    arms.push_back(pocl);
  }

  ArmSpec gkd = base;
  gkd.objective = LossObjective::kd;
  gkd.kind = DivergenceKind::jsd;
  gkd.policy = PolicyMode::on_policy;
  gkd.name = "gkd";
  arms.push_back(gkd);
  ArmSpec gkd_pocl = gkd;
  gkd_pocl.pocl = true;
  gkd_pocl.name = "gkd+pocl";
  arms.push_back(gkd_pocl);

  return arms;
}

std::vector<ArmSpec> ablation_arms(const ExperimentConfig& cfg,
                                   std::span<const std::string> axes) {
  std::vector<ArmSpec> arms;
  ArmSpec base;
  base.objective = LossObjective::kd;
  base.kind = DivergenceKind::kld;
  base.policy = PolicyMode::off_policy;
  base.schedule = cfg.train.schedule;
  base.order = cfg.train.order;
  base.metric = cfg.train.metric;
  base.name = "kld";
  arms.push_back(base);

  ArmSpec pocl = base;
  pocl.pocl = true;
  pocl.name = "kld+pocl";
  arms.push_back(pocl);

  for (const std::string& axis : axes) {
    if (axis == "order") {
      ArmSpec v = pocl;
      v.order = OrderMode::hard_to_easy;
      v.name = "kld+pocl-h2e";
      arms.push_back(v);
    } else if (axis == "tau_direction") {
      ArmSpec v = pocl;
      std::swap(v.schedule.tau0, v.schedule.taun);
      v.name = "kld+pocl-tau-desc";
      arms.push_back(v);
    } else if (axis == "alpha_direction") {
      ArmSpec v = pocl;
      std::swap(v.schedule.alpha0, v.schedule.alphan);
      v.name = "kld+pocl-alpha-asc";
      arms.push_back(v);
    } else if (axis == "ranking") {
      ArmSpec rl = pocl;
      rl.metric = RankingMetric::rouge_only;
      rl.name = "kld+pocl-rank-rl";
      arms.push_back(rl);
      ArmSpec ce = pocl;
      ce.metric = RankingMetric::ce_only;
      ce.name = "kld+pocl-rank-ce";
      arms.push_back(ce);
    } else {
      throw ConfigError("unknown grid axis: " + axis);
    }
  }
  return arms;
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig config_from_json(const std::string& json_text) {
  json root = json::parse(json_text);
  check_keys(root, "<top>",
             {"corpus", "split", "teacher", "student", "train", "eval", "experiment"});
  ExperimentConfig cfg;

  if (root.contains("corpus")) {
    const json& c = root["corpus"];
    check_keys(c, "corpus",
               {"num_samples", "alphabet_size", "payload_min", "payload_max", "task_mix",
                "seed", "file"});
    if (c.contains("num_samples")) cfg.corpus.num_samples = c["num_samples"].get<int>();
    if (c.contains("alphabet_size")) cfg.corpus.alphabet_size = c["alphabet_size"].get<int>();
    if (c.contains("payload_min")) cfg.corpus.payload_min = c["payload_min"].get<int>();
    if (c.contains("payload_max")) cfg.corpus.payload_max = c["payload_max"].get<int>();
    if (c.contains("task_mix"))
      cfg.corpus.task_mix = c["task_mix"].get<std::map<std::string, double>>();
    if (c.contains("seed")) cfg.corpus.seed = c["seed"].get<uint64_t>();
    if (c.contains("file")) cfg.corpus_file = c["file"].get<std::string>();
  }
  if (root.contains("split")) {
    const json& s = root["split"];
    check_keys(s, "split", {"train", "valid", "test", "seed"});
    if (s.contains("train")) cfg.split.train = s["train"].get<double>();
    if (s.contains("valid")) cfg.split.valid = s["valid"].get<double>();
    if (s.contains("test")) cfg.split.test = s["test"].get<double>();
    if (s.contains("seed")) cfg.split_seed = s["seed"].get<uint64_t>();
  }
  if (root.contains("teacher")) {
    const json& t = root["teacher"];
    check_keys(t, "teacher",
               {"init_seed", "learning_rate", "batch_size", "epochs", "checkpoint"});
    if (t.contains("init_seed")) cfg.teacher_init_seed = t["init_seed"].get<uint64_t>();
    if (t.contains("learning_rate")) cfg.teacher_learning_rate = t["learning_rate"].get<double>();
    if (t.contains("batch_size")) cfg.teacher_batch_size = t["batch_size"].get<int>();
    if (t.contains("epochs")) cfg.teacher_epochs = t["epochs"].get<int>();
    if (t.contains("checkpoint")) cfg.teacher_checkpoint = t["checkpoint"].get<std::string>();
  }
  if (root.contains("student")) {
    const json& s = root["student"];
    check_keys(s, "student", {"init_seed"});
    if (s.contains("init_seed")) cfg.student_init_seed = s["init_seed"].get<uint64_t>();
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    check_keys(t, "train",
               {"learning_rate", "batch_size", "baseline_epochs", "master_seed", "objective",
                "divergence", "policy", "pocl", "sgo_mix", "skew_beta", "max_gen_len",
                "baseline_tau", "subsets", "rrf_k", "tau0", "taun", "alpha0", "alphan",
                "order", "ranking"});
    TrainConfig& tc = cfg.train;
    if (t.contains("learning_rate")) tc.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("batch_size")) tc.batch_size = t["batch_size"].get<int>();
    if (t.contains("baseline_epochs")) tc.baseline_epochs = t["baseline_epochs"].get<int>();
    if (t.contains("master_seed")) tc.master_seed = t["master_seed"].get<uint64_t>();
    if (t.contains("objective")) tc.objective = objective_from_name(t["objective"]);
    if (t.contains("divergence")) tc.kind = divergence_from_name(t["divergence"]);
    if (t.contains("policy")) tc.policy = policy_from_name(t["policy"]);
    if (t.contains("pocl")) cfg.single_run_pocl = t["pocl"].get<bool>();
    if (t.contains("sgo_mix")) tc.sgo_mix = t["sgo_mix"].get<double>();
    if (t.contains("skew_beta")) tc.skew_beta = t["skew_beta"].get<double>();
    if (t.contains("max_gen_len")) tc.max_gen_len = t["max_gen_len"].get<int>();
    if (t.contains("baseline_tau")) tc.baseline_tau = t["baseline_tau"].get<double>();
    if (t.contains("subsets")) tc.subsets = t["subsets"].get<int>();
    if (t.contains("rrf_k")) tc.rrf_k = t["rrf_k"].get<double>();
    if (t.contains("tau0")) tc.schedule.tau0 = t["tau0"].get<double>();
    if (t.contains("taun")) tc.schedule.taun = t["taun"].get<double>();
    if (t.contains("alpha0")) tc.schedule.alpha0 = t["alpha0"].get<double>();
    if (t.contains("alphan")) tc.schedule.alphan = t["alphan"].get<double>();
    if (t.contains("order")) tc.order = order_mode_from_name(t["order"]);
    if (t.contains("ranking")) tc.metric = ranking_metric_from_name(t["ranking"]);
  }
  if (root.contains("eval")) {
    const json& e = root["eval"];
    check_keys(e, "eval", {"seeds", "max_gen_len", "checkpoint", "split"});
    if (e.contains("seeds")) cfg.eval_seeds = e["seeds"].get<std::vector<uint64_t>>();
    if (e.contains("max_gen_len")) cfg.eval_max_len = e["max_gen_len"].get<int>();
    if (e.contains("checkpoint")) cfg.eval_checkpoint = e["checkpoint"].get<std::string>();
    if (e.contains("split")) cfg.eval_split = e["split"].get<std::string>();
  }
  if (root.contains("experiment")) {
    const json& x = root["experiment"];
    check_keys(x, "experiment", {"train_seeds", "jobs", "arms", "grid_axes"});
    if (x.contains("train_seeds"))
      cfg.train_seeds = x["train_seeds"].get<std::vector<uint64_t>>();
    if (x.contains("jobs")) cfg.jobs = x["jobs"].get<int>();
    if (x.contains("grid_axes"))
      cfg.grid_axes = x["grid_axes"].get<std::vector<std::string>>();
    if (x.contains("arms")) {
      ArmSpec defaults;
      defaults.schedule = cfg.train.schedule;
      defaults.order = cfg.train.order;
      defaults.metric = cfg.train.metric;
      for (const json& aj : x["arms"]) cfg.arms.push_back(arm_from_json(aj, defaults));
    }
  }
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json root;
  json& c = root["corpus"];
  c["num_samples"] = cfg.corpus.num_samples;
  c["alphabet_size"] = cfg.corpus.alphabet_size;
  c["payload_min"] = cfg.corpus.payload_min;
  c["payload_max"] = cfg.corpus.payload_max;
  c["task_mix"] = cfg.corpus.task_mix;
  c["seed"] = cfg.corpus.seed;
  if (!cfg.corpus_file.empty()) c["file"] = cfg.corpus_file;
  json& s = root["split"];
  s["train"] = cfg.split.train;
  s["valid"] = cfg.split.valid;
  s["test"] = cfg.split.test;
  s["seed"] = cfg.split_seed;
  json& t = root["teacher"];
  t["init_seed"] = cfg.teacher_init_seed;
  t["learning_rate"] = cfg.teacher_learning_rate;
  t["batch_size"] = cfg.teacher_batch_size;
  t["epochs"] = cfg.teacher_epochs;
  if (!cfg.teacher_checkpoint.empty()) t["checkpoint"] = cfg.teacher_checkpoint;
  root["student"]["init_seed"] = cfg.student_init_seed;
  json& tr = root["train"];
  tr["learning_rate"] = cfg.train.learning_rate;
  tr["batch_size"] = cfg.train.batch_size;
  tr["baseline_epochs"] = cfg.train.baseline_epochs;
  tr["master_seed"] = cfg.train.master_seed;
  tr["objective"] = objective_name(cfg.train.objective);
  tr["divergence"] = divergence_name(cfg.train.kind);
  tr["policy"] = policy_name(cfg.train.policy);
  tr["pocl"] = cfg.single_run_pocl;
  tr["sgo_mix"] = cfg.train.sgo_mix;
  tr["skew_beta"] = cfg.train.skew_beta;
  tr["max_gen_len"] = cfg.train.max_gen_len;
  tr["baseline_tau"] = cfg.train.baseline_tau;
  tr["subsets"] = cfg.train.subsets;
  tr["rrf_k"] = cfg.train.rrf_k;
  tr["tau0"] = cfg.train.schedule.tau0;
  tr["taun"] = cfg.train.schedule.taun;
  tr["alpha0"] = cfg.train.schedule.alpha0;
  tr["alphan"] = cfg.train.schedule.alphan;
  tr["order"] = order_mode_name(cfg.train.order);
  tr["ranking"] = ranking_metric_name(cfg.train.metric);
  json& e = root["eval"];
  e["seeds"] = cfg.eval_seeds;
  e["max_gen_len"] = cfg.eval_max_len;
  if (!cfg.eval_checkpoint.empty()) e["checkpoint"] = cfg.eval_checkpoint;
  e["split"] = cfg.eval_split;
  json& x = root["experiment"];
  x["train_seeds"] = cfg.train_seeds;
  x["jobs"] = cfg.jobs;
  if (!cfg.grid_axes.empty()) x["grid_axes"] = cfg.grid_axes;
  json arms = json::array();
  for (const ArmSpec& a : cfg.arms) arms.push_back(arm_to_json(a));
  x["arms"] = arms;
  return root.dump(2) + "\n";
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  ExperimentConfig canon = cfg;
  canon.jobs = 1;  // execution width does not change what was computed
  return to_hex(fnv1a64(config_to_json(canon)));
}

namespace {

void aggregate(ArmOutcome& arm) {
  arm.mean = mean_of(arm.per_seed);
  arm.stddev = sample_stddev(arm.per_seed);
}

std::vector<PairDelta> pair_up(const std::vector<ArmSpec>& specs,
                               const std::vector<ArmOutcome>& outcomes) {
  std::vector<PairDelta> pairs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!specs[i].pocl) continue;
    for (std::size_t b = 0; b < specs.size(); ++b) {
      if (specs[b].pocl) continue;
      if (specs[b].objective == specs[i].objective && specs[b].kind == specs[i].kind &&
          specs[b].policy == specs[i].policy) {
        if (!outcomes[i].failed && !outcomes[b].failed)
          pairs.push_back({specs[b].name, specs[i].name,
                           outcomes[i].mean - outcomes[b].mean});
        break;
      }
    }
  }
  return pairs;
}

std::string manifest_json(const ExperimentConfig& resolved, const std::string& corpus_hash,
                          double teacher_valid) {
  json m;
  m["config"] = json::parse(config_to_json(resolved));
  m["corpus_hash"] = corpus_hash;
  m["config_fingerprint"] = config_fingerprint(resolved);
  m["decoding"] = "ancestral sampling, temperature 1";
  m["kernel_backend"] = kern::backend_name(kern::active_backend());
  m["teacher_valid_rouge"] = teacher_valid;
  return m.dump(2) + "\n";
}

TrainConfig arm_train_config(const ExperimentConfig& cfg, const ArmSpec& arm,
                             uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.master_seed = seed;
  tc.objective = arm.objective;
  tc.kind = arm.kind;
  tc.policy = arm.policy;
  tc.schedule = arm.schedule;
  tc.order = arm.order;
  tc.metric = arm.metric;
  return tc;
}

double loaded_teacher_valid(const ModelParams& teacher, std::span<const Sample> valid,
                            const TrainConfig& cfg) {
  if (valid.empty()) return 0.0;
  double sum = 0.0;
  for (const Sample& s : valid) {
    Rng rng = derive_stream(cfg.master_seed, "valid", {static_cast<uint64_t>(s.id)});
    std::vector<int> out = generate(teacher, s.prompt, 1.0, cfg.max_gen_len, rng);
    sum += rouge_l(out, s.response).f;
  }
  return sum / static_cast<double>(valid.size());
}

struct TaskResult {
  double rouge = 0.0;
  TrainTrace trace;
  std::string error;
  bool failed = false;
};

}  // namespace

ComparisonReport run_experiment(const ExperimentConfig& cfg_in, const std::string& out_dir) {
  ExperimentConfig cfg = cfg_in;
  if (cfg.arms.empty()) cfg.arms = default_arms(cfg);
  if (!cfg.grid_axes.empty()) {
    std::vector<ArmSpec> extra = ablation_arms(cfg, cfg.grid_axes);
    for (ArmSpec& a : extra) {
      bool exists = false;
      for (const ArmSpec& have : cfg.arms)
        if (have.name == a.name) exists = true;
      if (!exists) cfg.arms.push_back(std::move(a));
    }
  }
  cfg.validate();
  kern::active_backend();  // settle the dispatch table before any worker starts

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Corpus corpus = cfg.corpus_file.empty()
                      ? generate_corpus(cfg.corpus, teacher_dims(8).context)
                      : load_corpus(cfg.corpus_file);
  std::string corpus_text = corpus_to_jsonl(corpus);
  std::string corpus_hash = to_hex(fnv1a64(corpus_text));
  write_file(out_dir + "/corpus.jsonl", corpus_text);
  CorpusSplits splits = split_corpus(corpus, cfg.split, cfg.split_seed);

  const int vocab = corpus.vocab.size();
  ModelDims tdims = teacher_dims(vocab);
  ModelDims sdims = student_dims(vocab);

  ModelParams teacher;
  double teacher_valid = 0.0;
  if (!cfg.teacher_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(cfg.teacher_checkpoint);
    if (ck.params.dims != tdims)
      throw ConfigError("teacher checkpoint dims do not match the corpus preset");
    teacher = std::move(ck.params);
    teacher_valid = loaded_teacher_valid(teacher, splits.valid, cfg.train);
    save_checkpoint(teacher, "teacher", ck.metadata_json, out_dir + "/teacher.ckpt");
  } else {
    TrainConfig tcfg;
    tcfg.objective = LossObjective::sft;
    tcfg.learning_rate = cfg.teacher_learning_rate;
    tcfg.batch_size = cfg.teacher_batch_size;
    tcfg.baseline_epochs = cfg.teacher_epochs;
    tcfg.master_seed = cfg.train.master_seed;
    tcfg.max_gen_len = cfg.train.max_gen_len;
    TrainResult tr = train_teacher(tdims, cfg.teacher_init_seed, splits.train, splits.valid, tcfg);
    teacher = std::move(tr.params);
    teacher_valid = tr.trace.best_valid;
    json meta;
    meta["best_valid_rouge"] = tr.trace.best_valid;
    meta["epochs"] = cfg.teacher_epochs;
    save_checkpoint(teacher, "teacher", meta.dump(), out_dir + "/teacher.ckpt");
    write_file(out_dir + "/teacher_trace.csv", trace_csv(tr.trace));
  }

  write_file(out_dir + "/manifest.json", manifest_json(cfg, corpus_hash, teacher_valid));

  TeacherCache cache(teacher, splits.train);
  std::string fingerprint = config_fingerprint(cfg);

  struct TaskSpec {
    std::size_t arm;
    std::size_t seed_idx;
  };
  std::vector<TaskSpec> tasks;
  for (std::size_t a = 0; a < cfg.arms.size(); ++a)
    for (std::size_t k = 0; k < cfg.train_seeds.size(); ++k) tasks.push_back({a, k});
  std::vector<TaskResult> results(tasks.size());

  auto run_task = [&](std::size_t idx) {
    const TaskSpec& task = tasks[idx];
    const ArmSpec& arm = cfg.arms[task.arm];
    uint64_t seed = cfg.train_seeds[task.seed_idx];
    TaskResult& slot = results[idx];
    try {
      TrainConfig tc = arm_train_config(cfg, arm, seed);
      ModelParams init =
          init_params(sdims, derive_seed(cfg.student_init_seed, "student_init", {seed}));
      TrainResult result =
          arm.pocl ? distill_pocl(init, cache, splits.train, splits.valid, tc)
                   : distill_baseline(init, arm.objective == LossObjective::sft ? nullptr : &cache,
                                      splits.train, splits.valid, tc);
      EvalReport er = evaluate(result.params, splits.test, cfg.eval_seeds, cfg.eval_max_len,
                               fingerprint);
      std::string dir = out_dir + "/arms/" + arm.name + "/seed" + std::to_string(seed);
      json meta;
      meta["arm"] = arm.name;
      meta["train_seed"] = seed;
      meta["best_valid_rouge"] = result.trace.best_valid;
      meta["test_rouge_mean"] = er.mean;
      save_checkpoint(result.params, "student", meta.dump(), dir + "/student.ckpt");
      write_file(dir + "/trace.csv", trace_csv(result.trace));
      write_file(dir + "/eval.csv", eval_report_csv(er));
      write_file(dir + "/eval.json", eval_report_json(er));
      if (arm.pocl)
        write_file(dir + "/rank.csv", difficulty_csv(result.difficulty, result.plan));
      slot.rouge = er.mean;
      slot.trace = std::move(result.trace);
    } catch (const std::exception& ex) {
      slot.failed = true;
      slot.error = std::string(ex.what());
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), tasks.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto loop = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) break;
        run_task(i);
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(loop);
    loop();
    for (std::thread& th : pool) th.join();
  }

  ComparisonReport report;
  report.corpus_hash = corpus_hash;
  report.config_fingerprint = fingerprint;
  report.teacher_valid_rouge = teacher_valid;
  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    ArmOutcome outcome;
    outcome.name = cfg.arms[a].name;
    for (std::size_t k = 0; k < cfg.train_seeds.size(); ++k) {
      const TaskResult& slot = results[a * cfg.train_seeds.size() + k];
      outcome.seeds.push_back(cfg.train_seeds[k]);
      if (slot.failed) {
        outcome.failed = true;
        outcome.errors.push_back("seed " + std::to_string(cfg.train_seeds[k]) + ": " +
                                 slot.error);
      } else {
        outcome.per_seed.push_back(slot.rouge);
      }
    }
    aggregate(outcome);
    if (outcome.failed) report.all_ok = false;
    report.arms.push_back(std::move(outcome));
  }
  report.pairs = pair_up(cfg.arms, report.arms);

  write_file(out_dir + "/report/detail.csv", detail_csv(report));
  write_file(out_dir + "/report/summary.json", summary_json(report));
  write_file(out_dir + "/report/table.txt", table_txt(report));

  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    if (report.arms[a].failed) continue;
    std::string csv = "stage,epoch";
    for (uint64_t seed : cfg.train_seeds) csv += ",seed" + std::to_string(seed);
    csv += ",mean\n";
    const TrainTrace& first = results[a * cfg.train_seeds.size()].trace;
    for (std::size_t e = 0; e < first.epochs.size(); ++e) {
      csv += std::to_string(first.epochs[e].stage);
      csv += ',';
      csv += std::to_string(first.epochs[e].epoch);
      double sum = 0.0;
      for (std::size_t k = 0; k < cfg.train_seeds.size(); ++k) {
        double v = results[a * cfg.train_seeds.size() + k].trace.epochs[e].valid_rouge;
        csv += ',';
        csv += format_double(v);
        sum += v;
      }
      csv += ',';
      csv += format_double(sum / static_cast<double>(cfg.train_seeds.size()));
      csv += '\n';
    }
    write_file(out_dir + "/report/curves/" + cfg.arms[a].name + ".csv", csv);
  }

  return report;
}

std::string detail_csv(const ComparisonReport& report) {
  std::string out = "arm,seed,rouge_f\n";
  for (const ArmOutcome& arm : report.arms) {
    for (std::size_t k = 0; k < arm.per_seed.size(); ++k) {
      out += arm.name;
      out += ',';
      out += std::to_string(arm.seeds[k]);
      out += ',';
      out += format_double(arm.per_seed[k]);
      out += '\n';
    }
  }
  return out;
}

std::string summary_json(const ComparisonReport& report) {
  json j;
  json arms = json::array();
  for (const ArmOutcome& arm : report.arms) {
    json a;
    a["name"] = arm.name;
    a["seeds"] = arm.seeds;
    a["per_seed"] = arm.per_seed;
    a["mean"] = arm.mean;
    a["stddev"] = arm.stddev;
    a["failed"] = arm.failed;
    a["errors"] = arm.errors;
    arms.push_back(a);
  }
  j["arms"] = arms;
  json pairs = json::array();
  for (const PairDelta& p : report.pairs) {
    json pj;
    pj["base"] = p.base;
    pj["treatment"] = p.treatment;
    pj["delta"] = p.delta;
    pairs.push_back(pj);
  }
  j["pairs"] = pairs;
  j["corpus_hash"] = report.corpus_hash;
  j["config_fingerprint"] = report.config_fingerprint;
  j["teacher_valid_rouge"] = report.teacher_valid_rouge;
  j["all_ok"] = report.all_ok;
  return j.dump(2) + "\n";
}

std::string table_txt(const ComparisonReport& report) {
  std::size_t name_width = 4;
  for (const ArmOutcome& arm : report.arms) name_width = std::max(name_width, arm.name.size());
  auto pad = [](std::string s, std::size_t w) {
    while (s.size() < w) s.push_back(' ');
    return s;
  };
  std::string out = pad("arm", name_width) + "  " + pad("test rouge-l", 17) + "  delta vs base\n";
  out += std::string(name_width, '-') + "  " + std::string(17, '-') + "  -------------\n";
  for (const ArmOutcome& arm : report.arms) {
    out += pad(arm.name, name_width);
    out += "  ";
    if (arm.failed) {
      out += pad("FAILED", 17);
      out += "  \n";
      continue;
    }
    out += pad(format_fixed(arm.mean, 4) + " +/- " + format_fixed(arm.stddev, 4), 17);
    out += "  ";
    for (const PairDelta& p : report.pairs) {
      if (p.treatment == arm.name) {
        std::string d = format_fixed(p.delta, 4);
        if (p.delta >= 0.0 && d[0] != '-') d = "+" + d;
        out += d + " vs " + p.base;
        break;
      }
    }
    out += '\n';
  }
  return out;
}

void rerender_report(const std::string& out_dir) {
  json manifest = json::parse(read_file(out_dir + "/manifest.json"));
  ExperimentConfig cfg = config_from_json(manifest.at("config").dump());
  if (cfg.arms.empty()) throw ConfigError("manifest carries no resolved arm list");

  std::string detail = read_file(out_dir + "/report/detail.csv");
  struct Row {
    std::string arm;
    uint64_t seed;
    double rouge;
  };
  std::vector<Row> rows;
  std::size_t pos = detail.find('\n') + 1;  // skip header
  while (pos < detail.size()) {
    std::size_t eol = detail.find('\n', pos);
    if (eol == std::string::npos) eol = detail.size();
    std::string line = detail.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != 3) throw ConfigError("malformed detail.csv row: " + line);
    rows.push_back({fields[0], std::stoull(fields[1]), std::strtod(fields[2].c_str(), nullptr)});
  }

  // Failed seeds have no detail rows; reconstruct error lists from the old summary.
  json old_summary = json::parse(read_file(out_dir + "/report/summary.json"));
  std::map<std::string, json> old_arms;
  for (const json& a : old_summary.at("arms")) old_arms[a.at("name")] = a;

  ComparisonReport report;
  report.corpus_hash = manifest.at("corpus_hash").get<std::string>();
  report.config_fingerprint = manifest.at("config_fingerprint").get<std::string>();
  report.teacher_valid_rouge = manifest.at("teacher_valid_rouge").get<double>();
  for (const ArmSpec& spec : cfg.arms) {
    ArmOutcome outcome;
    outcome.name = spec.name;
    for (const Row& row : rows) {
      if (row.arm == spec.name) {
        outcome.seeds.push_back(row.seed);
        outcome.per_seed.push_back(row.rouge);
      }
    }
    auto it = old_arms.find(spec.name);
    if (it != old_arms.end()) {
      outcome.failed = it->second.at("failed").get<bool>();
      outcome.errors = it->second.at("errors").get<std::vector<std::string>>();
      if (outcome.failed)
        outcome.seeds = it->second.at("seeds").get<std::vector<uint64_t>>();
    }
    aggregate(outcome);
    if (outcome.failed) report.all_ok = false;
    report.arms.push_back(std::move(outcome));
  }
  report.pairs = pair_up(cfg.arms, report.arms);

  write_file(out_dir + "/report/summary.json", summary_json(report));
  write_file(out_dir + "/report/table.txt", table_txt(report));
}

}  // namespace mkd
