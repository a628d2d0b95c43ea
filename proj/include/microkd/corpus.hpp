#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "microkd/rng.hpp"

namespace mkd {

// Reserved token ids, fixed across every vocabulary.
inline constexpr int PAD = 0;
inline constexpr int BOS = 1;
inline constexpr int SEP = 2;
inline constexpr int EOS = 3;

enum class Task { copy, reverse, sort, last_token, count_distinct };
inline constexpr std::array<Task, 5> kAllTasks = {
    Task::copy, Task::reverse, Task::sort, Task::last_token, Task::count_distinct};

const char* task_name(Task t);
Task task_from_name(const std::string& name);

/// Token table: 4 reserved ids, one marker per task, `alphabet_size` payload
/// letters, `alphabet_size` number tokens for count answers.
class Vocab {
 public:
  static Vocab build(int alphabet_size);
  static Vocab from_symbols(const std::vector<std::string>& symbols);

  int size() const { return static_cast<int>(symbols_.size()); }
  int alphabet_size() const { return alphabet_size_; }
  int task_token(Task t) const;
  int letter(int index) const;        // index in [0, alphabet_size)
  int number(int value) const;        // value in [1, alphabet_size]
  const std::string& symbol(int id) const;

  std::vector<int> encode(std::span<const std::string> symbols) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
  int alphabet_size_ = 0;
};

struct Sample {
  int64_t id = 0;
  Task task = Task::copy;
  std::vector<int> prompt;    // [BOS, task marker, payload..., SEP]
  std::vector<int> response;  // [answer..., EOS]
};

struct CorpusSpec {
  int num_samples = 1000;
  int alphabet_size = 5;
  int payload_min = 2;
  int payload_max = 4;
  std::map<std::string, double> task_mix = {
      {"copy", 1.0}, {"reverse", 1.0}, {"sort", 1.0},
      {"last_token", 1.0}, {"count_distinct", 1.0}};
  uint64_t seed = 7;

  void validate(int context) const;
};

struct Corpus {
  CorpusSpec spec;
  Vocab vocab;
  std::vector<Sample> samples;
};

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct CorpusSplits {
  std::vector<Sample> train;
  std::vector<Sample> valid;
  std::vector<Sample> test;
};

/// Expected answer tokens (without EOS) for a task payload.
std::vector<int> task_answer(Task t, std::span<const int> payload, const Vocab& v);

Corpus generate_corpus(const CorpusSpec& spec, int context_budget);

/// Largest-remainder apportionment of n into parts proportional to fractions;
/// ties broken by earlier part. Every part must come out nonempty.
std::vector<int> apportion(int n, std::span<const double> fractions);

CorpusSplits split_corpus(const Corpus& corpus, const SplitFractions& fractions,
                          uint64_t seed);

/// Canonical JSONL serialization (header line, then one line per sample).
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace mkd
