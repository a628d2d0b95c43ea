#include "microkd/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "microkd/util.hpp"

namespace mkd {

using nlohmann::json;

std::size_t lcs_length(std::span<const int> a, std::span<const int> b) {
  if (a.empty() || b.empty()) return 0;
  // rolling single-row DP
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;  // row_prev[j-1]
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = (a[i - 1] == b[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

namespace {

std::vector<int> strip_for_scoring(std::span<const int> seq) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (int t : seq)
    if (t != PAD) out.push_back(t);
  if (!out.empty() && out.back() == EOS) out.pop_back();
  return out;
}

}  // namespace

RougeL rouge_l(std::span<const int> candidate, std::span<const int> reference) {
  std::vector<int> cand = strip_for_scoring(candidate);
  std::vector<int> ref = strip_for_scoring(reference);
  RougeL r;
  if (cand.empty() || ref.empty()) return r;
  r.lcs = lcs_length(cand, ref);
  if (r.lcs == 0) return r;
  r.precision = static_cast<double>(r.lcs) / static_cast<double>(cand.size());
  r.recall = static_cast<double>(r.lcs) / static_cast<double>(ref.size());
  r.f = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

EvalReport evaluate(const ModelParams& params, std::span<const Sample> dataset,
                    std::span<const uint64_t> seeds, int max_len,
                    const std::string& config_fingerprint) {
  if (seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (dataset.empty()) throw ConfigError("evaluate over empty dataset");
  EvalReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  report.config_fingerprint = config_fingerprint;

  std::vector<const Sample*> ordered;
  ordered.reserve(dataset.size());
  for (const Sample& s : dataset) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const Sample* a, const Sample* b) { return a->id < b->id; });

  std::vector<double> seed_sums(seeds.size(), 0.0);
  for (const Sample* s : ordered) {
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      Rng rng = derive_stream(seeds[k], "eval", {static_cast<uint64_t>(s->id)});
      std::vector<int> out = generate(params, s->prompt, 1.0, max_len, rng);
      double f = rouge_l(out, s->response).f;
      report.rows.push_back({s->id, seeds[k], f});
      seed_sums[k] += f;
    }
  }
  for (std::size_t k = 0; k < seeds.size(); ++k)
    report.per_seed_mean.push_back(seed_sums[k] / static_cast<double>(dataset.size()));
  report.mean = mean_of(report.per_seed_mean);
  report.stddev = sample_stddev(report.per_seed_mean);
  return report;
}

std::string eval_report_csv(const EvalReport& report) {
  std::string out = "sample_id,seed,rouge_f\n";
  for (const EvalRow& row : report.rows) {
    out += std::to_string(row.sample_id);
    out += ',';
    out += std::to_string(row.seed);
    out += ',';
    out += format_double(row.f);
    out += '\n';
  }
  return out;
}

std::string eval_report_json(const EvalReport& report) {
  json j;
  j["seeds"] = report.seeds;
  j["per_seed_mean"] = report.per_seed_mean;
  j["mean"] = report.mean;
  j["stddev"] = report.stddev;
  j["samples"] = report.rows.size() / report.seeds.size();
  j["config_fingerprint"] = report.config_fingerprint;
  return j.dump(2) + "\n";
}

}  // namespace mkd
