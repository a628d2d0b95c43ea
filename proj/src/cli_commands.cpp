#include "microkd/cli_commands.hpp"

#include <cstdio>

#include <json.hpp>

#include "microkd/util.hpp"

namespace mkd::cli {

namespace {

struct Prepared {
  Corpus corpus;
  CorpusSplits splits;
  ModelDims teacher;
  ModelDims student;
};

Prepared prepare(const ExperimentConfig& cfg) {
  Prepared p;
  p.corpus = cfg.corpus_file.empty() ? generate_corpus(cfg.corpus, teacher_dims(8).context)
                                     : load_corpus(cfg.corpus_file);
  p.splits = split_corpus(p.corpus, cfg.split, cfg.split_seed);
  p.teacher = teacher_dims(p.corpus.vocab.size());
  p.student = student_dims(p.corpus.vocab.size());
  return p;
}

ModelParams load_teacher(const ExperimentConfig& cfg, const ModelDims& dims) {
  if (cfg.teacher_checkpoint.empty())
    throw ConfigError("teacher.checkpoint is required for this command");
  Checkpoint ck = load_checkpoint(cfg.teacher_checkpoint);
  if (ck.params.dims != dims)
    throw ConfigError("teacher checkpoint dims do not match the corpus preset");
  return std::move(ck.params);
}

std::span<const Sample> pick_split(const Prepared& p, const std::string& name) {
  if (name == "train") return p.splits.train;
  if (name == "valid") return p.splits.valid;
  return p.splits.test;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) {
    ExperimentConfig cfg = default_config();
    cfg.validate();
    return cfg;
  }
  return config_from_json(read_file(path));
}

int cmd_gen_corpus(const ExperimentConfig& cfg, const std::string& out_path) {
  Corpus corpus = cfg.corpus_file.empty()
                      ? generate_corpus(cfg.corpus, teacher_dims(8).context)
                      : load_corpus(cfg.corpus_file);
  save_corpus(corpus, out_path);
  std::printf("wrote %d samples to %s (hash %s)\n", static_cast<int>(corpus.samples.size()),
              out_path.c_str(), to_hex(fnv1a64(corpus_to_jsonl(corpus))).c_str());
  return 0;
}

int cmd_train_teacher(const ExperimentConfig& cfg, const std::string& out_dir) {
  Prepared p = prepare(cfg);
  TrainConfig tcfg;
  tcfg.objective = LossObjective::sft;
  tcfg.learning_rate = cfg.teacher_learning_rate;
  tcfg.batch_size = cfg.teacher_batch_size;
  tcfg.baseline_epochs = cfg.teacher_epochs;
  tcfg.master_seed = cfg.train.master_seed;
  tcfg.max_gen_len = cfg.train.max_gen_len;
  TrainResult tr =
      train_teacher(p.teacher, cfg.teacher_init_seed, p.splits.train, p.splits.valid, tcfg);
  nlohmann::json meta;
  meta["best_valid_rouge"] = tr.trace.best_valid;
  meta["epochs"] = cfg.teacher_epochs;
  save_checkpoint(tr.params, "teacher", meta.dump(), out_dir + "/teacher.ckpt");
  write_file(out_dir + "/teacher_trace.csv", trace_csv(tr.trace));
  std::printf("teacher best valid rouge-l %s -> %s/teacher.ckpt\n",
              format_fixed(tr.trace.best_valid, 4).c_str(), out_dir.c_str());
  return 0;
}

int cmd_rank(const ExperimentConfig& cfg, const std::string& out_dir) {
  Prepared p = prepare(cfg);
  ModelParams teacher = load_teacher(cfg, p.teacher);
  (void)teacher;  // ranking probes only the student; the teacher checkpoint pins the setup
  ModelParams init = init_params(
      p.student, derive_seed(cfg.student_init_seed, "student_init", {cfg.train.master_seed}));
  std::vector<DifficultyRecord> records =
      measure_difficulty(init, p.splits.train, cfg.train.master_seed, cfg.train.max_gen_len,
                         cfg.train.metric, cfg.train.rrf_k);
  CurriculumPlan plan = build_plan(records, cfg.train.subsets, cfg.train.schedule,
                                   cfg.train.order, cfg.train.baseline_epochs,
                                   cfg.train.policy == PolicyMode::on_policy,
                                   cfg.train.metric);
  write_file(out_dir + "/rank.csv", difficulty_csv(records, plan));
  std::printf("ranked %d samples into %d subsets -> %s/rank.csv\n",
              static_cast<int>(records.size()), static_cast<int>(plan.stages.size()),
              out_dir.c_str());
  return 0;
}

int cmd_distill(const ExperimentConfig& cfg, const std::string& out_dir) {
  Prepared p = prepare(cfg);
  TrainConfig tc = cfg.train;
  ModelParams init = init_params(
      p.student, derive_seed(cfg.student_init_seed, "student_init", {tc.master_seed}));

  TrainResult result;
  if (tc.objective == LossObjective::sft && !cfg.single_run_pocl) {
    result = distill_baseline(init, nullptr, p.splits.train, p.splits.valid, tc);
  } else {
    ModelParams teacher = load_teacher(cfg, p.teacher);
    TeacherCache cache(teacher, p.splits.train);
    result = cfg.single_run_pocl
                 ? distill_pocl(init, cache, p.splits.train, p.splits.valid, tc)
                 : distill_baseline(init, &cache, p.splits.train, p.splits.valid, tc);
    if (cfg.single_run_pocl)
      write_file(out_dir + "/rank.csv", difficulty_csv(result.difficulty, result.plan));
  }

  EvalReport er = evaluate(result.params, p.splits.test, cfg.eval_seeds, cfg.eval_max_len,
                           config_fingerprint(cfg));
  nlohmann::json meta;
  meta["objective"] = objective_name(tc.objective);
  meta["divergence"] = divergence_name(tc.kind);
  meta["policy"] = policy_name(tc.policy);
  meta["pocl"] = cfg.single_run_pocl;
  meta["train_seed"] = tc.master_seed;
  meta["best_valid_rouge"] = result.trace.best_valid;
  meta["test_rouge_mean"] = er.mean;
  save_checkpoint(result.params, "student", meta.dump(), out_dir + "/student.ckpt");
  write_file(out_dir + "/trace.csv", trace_csv(result.trace));
  write_file(out_dir + "/eval.csv", eval_report_csv(er));
  write_file(out_dir + "/eval.json", eval_report_json(er));
  std::printf("best valid rouge-l %s, test rouge-l %s +/- %s -> %s\n",
              format_fixed(result.trace.best_valid, 4).c_str(),
              format_fixed(er.mean, 4).c_str(), format_fixed(er.stddev, 4).c_str(),
              out_dir.c_str());
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.eval_checkpoint.empty())
    throw ConfigError("eval.checkpoint is required for eval");
  Prepared p = prepare(cfg);
  Checkpoint ck = load_checkpoint(cfg.eval_checkpoint);
  if (ck.params.dims.vocab != p.corpus.vocab.size())
    throw ConfigError("checkpoint vocabulary does not match the corpus");
  EvalReport er = evaluate(ck.params, pick_split(p, cfg.eval_split), cfg.eval_seeds,
                           cfg.eval_max_len, config_fingerprint(cfg));
  write_file(out_dir + "/eval.csv", eval_report_csv(er));
  write_file(out_dir + "/eval.json", eval_report_json(er));
  std::printf("%s split rouge-l %s +/- %s over %d seeds -> %s\n", cfg.eval_split.c_str(),
              format_fixed(er.mean, 4).c_str(), format_fixed(er.stddev, 4).c_str(),
              static_cast<int>(er.seeds.size()), out_dir.c_str());
  return 0;
}

int cmd_report(const std::string& out_dir) {
  rerender_report(out_dir);
  std::printf("%s\n", read_file(out_dir + "/report/table.txt").c_str());
  return 0;
}

int cmd_grid(const ExperimentConfig& cfg, const std::string& out_dir) {
  ComparisonReport report = run_experiment(cfg, out_dir);
  std::printf("%s", table_txt(report).c_str());
  if (!report.all_ok) {
    for (const ArmOutcome& arm : report.arms)
      for (const std::string& err : arm.errors)
        std::fprintf(stderr, "arm %s failed: %s\n", arm.name.c_str(), err.c_str());
    return 2;
  }
  return 0;
}

}  // namespace mkd::cli
