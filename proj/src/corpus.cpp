#include "microkd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "microkd/util.hpp"

namespace mkd {

using nlohmann::json;

const char* task_name(Task t) {
  switch (t) {
    case Task::copy: return "copy";
    case Task::reverse: return "reverse";
    case Task::sort: return "sort";
    case Task::last_token: return "last_token";
    case Task::count_distinct: return "count_distinct";
  }
  throw ContractError("bad task enum");
}

Task task_from_name(const std::string& name) {
  for (Task t : kAllTasks)
    if (name == task_name(t)) return t;
  throw ConfigError("unknown task: " + name);
}

Vocab Vocab::build(int alphabet_size) {
  if (alphabet_size < 1 || alphabet_size > 26)
    throw ConfigError("corpus.alphabet_size must be in [1, 26]");
  std::vector<std::string> symbols = {"<pad>", "<bos>", "<sep>", "<eos>"};
  for (Task t : kAllTasks) symbols.push_back(std::string("<") + task_name(t) + ">");
  for (int i = 0; i < alphabet_size; ++i) symbols.push_back(std::string(1, char('a' + i)));
  for (int i = 1; i <= alphabet_size; ++i) symbols.push_back(std::to_string(i));
  return from_symbols(symbols);
}

Vocab Vocab::from_symbols(const std::vector<std::string>& symbols) {
  if (symbols.size() < 8) throw ConfigError("vocabulary needs at least 8 symbols");
  static const std::vector<std::string> reserved = {"<pad>", "<bos>", "<sep>", "<eos>"};
  for (int i = 0; i < 4; ++i)
    if (symbols[static_cast<std::size_t>(i)] != reserved[static_cast<std::size_t>(i)])
      throw ConfigError("vocabulary must start with <pad>,<bos>,<sep>,<eos>");
  Vocab v;
  v.symbols_ = symbols;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (!v.index_.emplace(symbols[i], static_cast<int>(i)).second)
      throw ConfigError("duplicate vocabulary symbol: " + symbols[i]);
  }
  int letters = 0;
  while (v.index_.count(std::string(1, char('a' + letters)))) ++letters;
  v.alphabet_size_ = letters;
  return v;
}

int Vocab::task_token(Task t) const {
  auto it = index_.find(std::string("<") + task_name(t) + ">");
  if (it == index_.end()) throw ContractError("vocabulary missing task marker");
  return it->second;
}

int Vocab::letter(int index) const {
  if (index < 0 || index >= alphabet_size_) throw ContractError("letter index out of range");
  auto it = index_.find(std::string(1, char('a' + index)));
  return it->second;
}

int Vocab::number(int value) const {
  if (value < 1 || value > alphabet_size_) throw ContractError("number token out of range");
  auto it = index_.find(std::to_string(value));
  if (it == index_.end()) throw ContractError("vocabulary missing number token");
  return it->second;
}

const std::string& Vocab::symbol(int id) const {
  if (id < 0 || id >= size()) throw TokenError("token id out of range: " + std::to_string(id), 0);
  return symbols_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::span<const std::string> symbols) const {
  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    auto it = index_.find(symbols[i]);
    if (it == index_.end()) throw TokenError("unknown symbol '" + symbols[i] + "'", i);
    ids.push_back(it->second);
  }
  return ids;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= size())
      throw TokenError("token id out of range: " + std::to_string(ids[i]), i);
    out.push_back(symbols_[static_cast<std::size_t>(ids[i])]);
  }
  return out;
}

void CorpusSpec::validate(int context) const {
  if (num_samples < 1) throw ConfigError("corpus.num_samples must be >= 1");
  if (alphabet_size < 1 || alphabet_size > 26)
    throw ConfigError("corpus.alphabet_size must be in [1, 26]");
  if (payload_min < 1) throw ConfigError("corpus.payload_min must be >= 1");
  if (payload_max < payload_min)
    throw ConfigError("corpus.payload_max must be >= corpus.payload_min");
  // Prompt is [BOS, marker, payload, SEP]; it has to fit in one context window.
  if (payload_max > context - 3)
    throw ConfigError("corpus.payload_max exceeds context budget (context - 3)");
  if (task_mix.empty()) throw ConfigError("corpus.task_mix must not be empty");
  double total = 0.0;
  for (const auto& [name, w] : task_mix) {
    task_from_name(name);
    if (w < 0.0) throw ConfigError("corpus.task_mix weight must be >= 0: " + name);
    total += w;
  }
  if (total <= 0.0) throw ConfigError("corpus.task_mix weights must sum to > 0");
}

std::vector<int> task_answer(Task t, std::span<const int> payload, const Vocab& v) {
  std::vector<int> out(payload.begin(), payload.end());
  switch (t) {
    case Task::copy:
      return out;
    case Task::reverse:
      std::reverse(out.begin(), out.end());
      return out;
    case Task::sort:
      std::sort(out.begin(), out.end());
      return out;
    case Task::last_token:
      return {payload.back()};
    case Task::count_distinct: {
      std::set<int> distinct(payload.begin(), payload.end());
      return {v.number(static_cast<int>(distinct.size()))};
    }
  }
  throw ContractError("bad task enum");
}

Corpus generate_corpus(const CorpusSpec& spec, int context_budget) {
  spec.validate(context_budget);
  Corpus corpus;
  corpus.spec = spec;
  corpus.vocab = Vocab::build(spec.alphabet_size);

  std::vector<Task> tasks;
  std::vector<double> weights;
  for (const auto& [name, w] : spec.task_mix) {
    if (w > 0.0) {
      tasks.push_back(task_from_name(name));
      weights.push_back(w);
    }
  }

  corpus.samples.reserve(static_cast<std::size_t>(spec.num_samples));
  for (int64_t id = 0; id < spec.num_samples; ++id) {
    Rng rng = derive_stream(spec.seed, "corpus_sample", {static_cast<uint64_t>(id)});
    Sample s;
    s.id = id;
    s.task = tasks[rng.sample_discrete(weights)];
    int len = spec.payload_min +
              static_cast<int>(rng.bounded(
                  static_cast<uint64_t>(spec.payload_max - spec.payload_min + 1)));
    std::vector<int> payload;
    payload.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i)
      payload.push_back(corpus.vocab.letter(
          static_cast<int>(rng.bounded(static_cast<uint64_t>(spec.alphabet_size)))));
    s.prompt.push_back(BOS);
    s.prompt.push_back(corpus.vocab.task_token(s.task));
    s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
    s.prompt.push_back(SEP);
    s.response = task_answer(s.task, payload, corpus.vocab);
    s.response.push_back(EOS);
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

std::vector<int> apportion(int n, std::span<const double> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  std::vector<int> sizes(fractions.size());
  std::vector<double> remainders(fractions.size());
  int assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    double exact = n * fractions[i];
    sizes[i] = static_cast<int>(exact);
    remainders[i] = exact - sizes[i];
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(fractions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (int k = 0; k < n - assigned; ++k) sizes[order[static_cast<std::size_t>(k)]] += 1;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (sizes[i] == 0) throw ConfigError("split produces an empty part");
  return sizes;
}

CorpusSplits split_corpus(const Corpus& corpus, const SplitFractions& fractions,
                          uint64_t seed) {
  const double fr[3] = {fractions.train, fractions.valid, fractions.test};
  std::vector<int> sizes = apportion(static_cast<int>(corpus.samples.size()), fr);
  std::vector<std::size_t> order(corpus.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = derive_stream(seed, "split", {});
  rng.shuffle(order);
  CorpusSplits splits;
  auto take = [&](std::vector<Sample>& dst, std::size_t begin, int count) {
    for (int k = 0; k < count; ++k)
      dst.push_back(corpus.samples[order[begin + static_cast<std::size_t>(k)]]);
    std::sort(dst.begin(), dst.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
  };
  take(splits.train, 0, sizes[0]);
  take(splits.valid, static_cast<std::size_t>(sizes[0]), sizes[1]);
  take(splits.test, static_cast<std::size_t>(sizes[0] + sizes[1]), sizes[2]);
  return splits;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  json header;
  header["type"] = "header";
  header["vocab"] = corpus.vocab.symbols();
  json spec;
  spec["num_samples"] = corpus.spec.num_samples;
  spec["alphabet_size"] = corpus.spec.alphabet_size;
  spec["payload_min"] = corpus.spec.payload_min;
  spec["payload_max"] = corpus.spec.payload_max;
  spec["task_mix"] = corpus.spec.task_mix;
  spec["seed"] = corpus.spec.seed;
  header["spec"] = spec;
  out += header.dump();
  out += '\n';
  for (const Sample& s : corpus.samples) {
    json line;
    line["id"] = s.id;
    line["task"] = task_name(s.task);
    line["prompt"] = s.prompt;
    line["response"] = s.response;
    out += line.dump();
    out += '\n';
  }
  return out;
}

namespace {

void validate_sample(const Sample& s, int vocab_size) {
  auto check_tokens = [&](const std::vector<int>& seq, const char* what) {
    if (seq.empty()) throw ConfigError(std::string("sample has empty ") + what);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] < 0 || seq[i] >= vocab_size)
        throw TokenError("token id out of range in sample " + std::to_string(s.id), i);
      if (seq[i] == PAD)
        throw ConfigError("PAD inside sample " + std::to_string(s.id));
    }
  };
  check_tokens(s.prompt, "prompt");
  check_tokens(s.response, "response");
  if (s.prompt.front() != BOS || s.prompt.back() != SEP)
    throw ConfigError("prompt must be BOS...SEP in sample " + std::to_string(s.id));
  if (s.response.back() != EOS)
    throw ConfigError("response must end with EOS in sample " + std::to_string(s.id));
}

}  // namespace

Corpus corpus_from_jsonl(const std::string& text) {
  Corpus corpus;
  std::size_t pos = 0;
  bool have_header = false;
  std::set<int64_t> seen_ids;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!have_header) {
      if (!j.contains("type") || j["type"] != "header")
        throw ConfigError("corpus file must start with a header line");
      corpus.vocab = Vocab::from_symbols(j.at("vocab").get<std::vector<std::string>>());
      const json& spec = j.at("spec");
      corpus.spec.num_samples = spec.at("num_samples").get<int>();
      corpus.spec.alphabet_size = spec.at("alphabet_size").get<int>();
      corpus.spec.payload_min = spec.at("payload_min").get<int>();
      corpus.spec.payload_max = spec.at("payload_max").get<int>();
      corpus.spec.task_mix = spec.at("task_mix").get<std::map<std::string, double>>();
      corpus.spec.seed = spec.at("seed").get<uint64_t>();
      have_header = true;
      continue;
    }
    Sample s;
    s.id = j.at("id").get<int64_t>();
    s.task = task_from_name(j.at("task").get<std::string>());
    s.prompt = j.at("prompt").get<std::vector<int>>();
    s.response = j.at("response").get<std::vector<int>>();
    validate_sample(s, corpus.vocab.size());
    if (!seen_ids.insert(s.id).second)
      throw ConfigError("duplicate sample id " + std::to_string(s.id));
    corpus.samples.push_back(std::move(s));
  }
  if (!have_header) throw ConfigError("corpus file is empty");
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  write_file(path, corpus_to_jsonl(corpus));
}

Corpus load_corpus(const std::string& path) {
  return corpus_from_jsonl(read_file(path));
}

}  // namespace mkd
