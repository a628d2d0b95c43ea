#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "microkd/corpus.hpp"
#include "microkd/util.hpp"

using namespace mkd;

namespace {

CorpusSpec small_spec() {
  CorpusSpec spec;
  spec.num_samples = 60;
  spec.alphabet_size = 5;
  spec.payload_min = 2;
  spec.payload_max = 4;
  spec.seed = 3;
  return spec;
}

}  // namespace

TEST_CASE("vocabulary layout: specials, task markers, letters, numbers") {
  Vocab v = Vocab::build(5);
  CHECK(v.size() == 4 + 5 + 5 + 5);
  CHECK(v.symbol(PAD) == "<pad>");
  CHECK(v.symbol(BOS) == "<bos>");
  CHECK(v.symbol(SEP) == "<sep>");
  CHECK(v.symbol(EOS) == "<eos>");
  CHECK(v.symbol(v.task_token(Task::copy)) == "<copy>");
  CHECK(v.symbol(v.task_token(Task::count_distinct)) == "<count_distinct>");
  CHECK(v.symbol(v.letter(0)) == "a");
  CHECK(v.symbol(v.letter(4)) == "e");
  CHECK(v.symbol(v.number(1)) == "1");
  CHECK(v.symbol(v.number(5)) == "5");
  std::vector<std::string> one = {"a"};
  CHECK(v.encode(one) == std::vector<int>{v.letter(0)});
  std::vector<std::string> bad = {"zzz"};
  CHECK_THROWS_AS(v.encode(bad), TokenError);
}

TEST_CASE("task answers are the exact deterministic functions") {
  Vocab v = Vocab::build(5);
  int a = v.letter(0), b = v.letter(1), c = v.letter(2);
  std::vector<int> payload = {c, a, b, a};

  CHECK(task_answer(Task::copy, payload, v) == std::vector<int>{c, a, b, a});
  CHECK(task_answer(Task::reverse, payload, v) == std::vector<int>{a, b, a, c});
  CHECK(task_answer(Task::sort, payload, v) == std::vector<int>{a, a, b, c});
  CHECK(task_answer(Task::last_token, payload, v) == std::vector<int>{a});
  CHECK(task_answer(Task::count_distinct, payload, v) == std::vector<int>{v.number(3)});

  std::vector<int> ones = {a, a};
  CHECK(task_answer(Task::count_distinct, ones, v) == std::vector<int>{v.number(1)});
}

TEST_CASE("apportion: frozen arithmetic for the default and a tiny corpus") {
  const double fr[3] = {0.84, 0.10, 0.06};
  CHECK(apportion(1000, fr) == std::vector<int>{840, 100, 60});
  const double fr2[3] = {0.8, 0.1, 0.1};
  CHECK(apportion(10, fr2) == std::vector<int>{8, 1, 1});
  CHECK(apportion(1000, fr2) == std::vector<int>{800, 100, 100});
}

TEST_CASE("apportion: sums match and largest remainder breaks ties leftward") {
  const double thirds[3] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::vector<int> parts = apportion(10, thirds);
  CHECK(parts[0] + parts[1] + parts[2] == 10);
  CHECK(parts == std::vector<int>{4, 3, 3});
  for (int n = 3; n <= 200; ++n) {
    std::vector<int> p = apportion(n, thirds);
    int total = 0;
    for (int x : p) {
      CHECK(x >= 1);
      total += x;
    }
    CHECK(total == n);
  }
}

TEST_CASE("apportion rejects degenerate inputs") {
  const double bad_sum[2] = {0.5, 0.4};
  CHECK_THROWS_AS(apportion(10, bad_sum), ConfigError);
  const double fr[3] = {0.8, 0.1, 0.1};
  CHECK_THROWS_AS(apportion(2, fr), ConfigError);  // a part would be empty
}

TEST_CASE("generation is deterministic and respects the sample contract") {
  CorpusSpec spec = small_spec();
  Corpus c1 = generate_corpus(spec, 16);
  Corpus c2 = generate_corpus(spec, 16);
  CHECK(corpus_to_jsonl(c1) == corpus_to_jsonl(c2));
  CHECK(static_cast<int>(c1.samples.size()) == spec.num_samples);

  const Vocab& v = c1.vocab;
  for (const Sample& s : c1.samples) {
    REQUIRE(s.prompt.size() >= 4u);
    CHECK(s.prompt.front() == BOS);
    CHECK(s.prompt[1] == v.task_token(s.task));
    CHECK(s.prompt.back() == SEP);
    std::vector<int> payload(s.prompt.begin() + 2, s.prompt.end() - 1);
    CHECK(static_cast<int>(payload.size()) >= spec.payload_min);
    CHECK(static_cast<int>(payload.size()) <= spec.payload_max);
    std::vector<int> expect = task_answer(s.task, payload, v);
    expect.push_back(EOS);
    CHECK(s.response == expect);
  }

  std::set<int64_t> ids;
  for (const Sample& s : c1.samples) ids.insert(s.id);
  CHECK(ids.size() == c1.samples.size());
  CHECK(*ids.begin() == 0);
  CHECK(*ids.rbegin() == spec.num_samples - 1);
}

TEST_CASE("different corpus seeds give different corpora") {
  CorpusSpec spec = small_spec();
  Corpus c1 = generate_corpus(spec, 16);
  spec.seed = 4;
  Corpus c2 = generate_corpus(spec, 16);
  CHECK(corpus_to_jsonl(c1) != corpus_to_jsonl(c2));
}

TEST_CASE("task mix weight zero excludes a task") {
  CorpusSpec spec = small_spec();
  spec.task_mix["sort"] = 0.0;
  Corpus c = generate_corpus(spec, 16);
  for (const Sample& s : c.samples) CHECK(s.task != Task::sort);
}

TEST_CASE("split_corpus partitions by id without overlap and sorts each split") {
  CorpusSpec spec = small_spec();
  Corpus c = generate_corpus(spec, 16);
  SplitFractions fr;
  CorpusSplits sp = split_corpus(c, fr, 11);
  CHECK(sp.train.size() == 48u);
  CHECK(sp.valid.size() == 6u);
  CHECK(sp.test.size() == 6u);

  std::set<int64_t> seen;
  for (const auto* part : {&sp.train, &sp.valid, &sp.test}) {
    CHECK(std::is_sorted(part->begin(), part->end(),
                         [](const Sample& a, const Sample& b) { return a.id < b.id; }));
    for (const Sample& s : *part) CHECK(seen.insert(s.id).second);
  }
  CHECK(seen.size() == c.samples.size());

  CorpusSplits sp2 = split_corpus(c, fr, 11);
  CHECK(sp2.train.size() == sp.train.size());
  for (std::size_t i = 0; i < sp.train.size(); ++i)
    CHECK(sp2.train[i].id == sp.train[i].id);
  CorpusSplits sp3 = split_corpus(c, fr, 12);
  bool any_diff = false;
  for (std::size_t i = 0; i < sp.train.size(); ++i)
    if (sp3.train[i].id != sp.train[i].id) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("jsonl round trip preserves every sample") {
  CorpusSpec spec = small_spec();
  Corpus c = generate_corpus(spec, 16);
  std::string text = corpus_to_jsonl(c);
  Corpus back = corpus_from_jsonl(text);
  CHECK(corpus_to_jsonl(back) == text);
  CHECK(back.samples.size() == c.samples.size());
  CHECK(back.vocab.size() == c.vocab.size());
}

TEST_CASE("jsonl validation rejects corrupted payloads") {
  CorpusSpec spec = small_spec();
  spec.num_samples = 10;
  Corpus c = generate_corpus(spec, 16);
  std::string text = corpus_to_jsonl(c);

  CHECK_THROWS(corpus_from_jsonl("{\"id\":0}\n" + text));

  std::string no_header = text.substr(text.find('\n') + 1);
  CHECK_THROWS(corpus_from_jsonl(no_header));

  std::string pad_token = text;
  std::size_t pos = pad_token.find("\"prompt\":[1,");
  REQUIRE(pos != std::string::npos);
  pad_token.replace(pos, 12, "\"prompt\":[0,");
  CHECK_THROWS(corpus_from_jsonl(pad_token));
}

TEST_CASE("spec validation enforces payload budget against the context") {
  CorpusSpec spec = small_spec();
  spec.payload_max = 14;
  CHECK_THROWS_AS(spec.validate(16), ConfigError);
  CHECK_NOTHROW(spec.validate(17));
  spec.payload_min = 0;
  CHECK_THROWS_AS(spec.validate(17), ConfigError);
  spec = small_spec();
  spec.alphabet_size = 27;
  CHECK_THROWS_AS(spec.validate(16), ConfigError);
  spec = small_spec();
  spec.task_mix["no_such_task"] = 1.0;
  CHECK_THROWS(spec.validate(16));
}
