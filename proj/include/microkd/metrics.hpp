#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "microkd/corpus.hpp"
#include "microkd/tinylm.hpp"

namespace mkd {

std::size_t lcs_length(std::span<const int> a, std::span<const int> b);

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t lcs = 0;
};

/// ROUGE-L (F with beta = 1) on token id sequences. Trailing EOS and all PAD
/// tokens are stripped before scoring; either side empty after stripping
/// scores 0.
RougeL rouge_l(std::span<const int> candidate, std::span<const int> reference);

struct EvalRow {
  int64_t sample_id = 0;
  uint64_t seed = 0;
  double f = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;          // sorted by (sample_id, seed)
  std::vector<uint64_t> seeds;
  std::vector<double> per_seed_mean;  // aligned with seeds
  double mean = 0.0;                  // mean of per-seed means
  double stddev = 0.0;                // sample sd of per-seed means (0 if 1 seed)
  std::string config_fingerprint;
};

/// One generation pass per seed over the whole dataset; generations at
/// temperature 1 with the per-sample stream derived from (seed, sample id).
EvalReport evaluate(const ModelParams& params, std::span<const Sample> dataset,
                    std::span<const uint64_t> seeds, int max_len,
                    const std::string& config_fingerprint = "");

std::string eval_report_csv(const EvalReport& report);
std::string eval_report_json(const EvalReport& report);

double mean_of(std::span<const double> xs);
double sample_stddev(std::span<const double> xs);

}  // namespace mkd
