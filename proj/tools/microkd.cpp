#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "microkd/cli_commands.hpp"
#include "microkd/kernels.hpp"
#include "microkd/util.hpp"

int main(int argc, char** argv) {
  CLI::App app{"desk-scale knowledge-distillation curriculum engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();

  uint64_t seed_override = 0;
  bool seed_set = false;
  app.add_option_function<uint64_t>(
         "--seed",
         [&](uint64_t v) {
           seed_override = v;
           seed_set = true;
         },
         "override train.master_seed");
  int jobs_override = 0;
  app.add_option("--jobs", jobs_override, "override experiment.jobs");

  std::string corpus_out;
  CLI::App* gen = app.add_subcommand("gen-corpus", "write the corpus as JSONL");
  gen->add_option("--file", corpus_out, "output path (default <out>/corpus.jsonl)");

  app.add_subcommand("train-teacher", "train the teacher and save its checkpoint");
  app.add_subcommand("rank", "measure difficulty and write the fused ranking");
  app.add_subcommand("distill", "run one training arm and evaluate it");
  app.add_subcommand("eval", "score a saved checkpoint on a corpus split");
  app.add_subcommand("report", "re-render report tables from detail.csv");
  app.add_subcommand("grid", "run every arm x seed and write the comparison report");
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("report")) return mkd::cli::cmd_report(out_dir);

    mkd::ExperimentConfig cfg = mkd::cli::load_config(config_path);
    if (seed_set) cfg.train.master_seed = seed_override;
    if (jobs_override > 0) cfg.jobs = jobs_override;
    cfg.validate();

    if (app.got_subcommand("gen-corpus")) {
      std::string path = corpus_out.empty() ? out_dir + "/corpus.jsonl" : corpus_out;
      return mkd::cli::cmd_gen_corpus(cfg, path);
    }
    if (app.got_subcommand("train-teacher")) return mkd::cli::cmd_train_teacher(cfg, out_dir);
    if (app.got_subcommand("rank")) return mkd::cli::cmd_rank(cfg, out_dir);
    if (app.got_subcommand("distill")) return mkd::cli::cmd_distill(cfg, out_dir);
    if (app.got_subcommand("eval")) return mkd::cli::cmd_eval(cfg, out_dir);
    if (app.got_subcommand("grid")) return mkd::cli::cmd_grid(cfg, out_dir);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 1;
}
