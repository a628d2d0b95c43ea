#pragma once

#include <string>

#include "microkd/harness.hpp"

namespace mkd::cli {

/// Reads and validates a JSON config; empty path yields the defaults.
ExperimentConfig load_config(const std::string& path);

int cmd_gen_corpus(const ExperimentConfig& cfg, const std::string& out_path);
int cmd_train_teacher(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_rank(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_distill(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_report(const std::string& out_dir);
int cmd_grid(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace mkd::cli
