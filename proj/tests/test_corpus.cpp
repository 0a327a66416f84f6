#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "capora/corpus.hpp"

using namespace capora;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  std::string path = std::string("/tmp/capora_test_") + name;
  std::ofstream out(path);
  out << body;
  return path;
}

std::vector<CaptionRecord> recs_from_counts(
    const std::vector<std::pair<std::string, int>>& counts) {
  // One single-token caption per occurrence; ids don't matter for vocab.
  std::vector<CaptionRecord> recs;
  int n = 0;
  for (const auto& [word, c] : counts)
    for (int i = 0; i < c; ++i) {
      CaptionRecord r;
      r.id = "r" + std::to_string(n++);
      r.split = Split::Train;
      r.text = word;
      r.tokens = {word};
      recs.push_back(r);
    }
  return recs;
}

}  // namespace

TEST_CASE("jsonl loader reads splits and text") {
  std::string path = write_temp(
      "ds.jsonl",
      "{\"id\":\"a\",\"split\":\"train\",\"text\":\"a man runs\"}\n"
      "{\"id\":\"b\",\"split\":\"valid\",\"text\":\"a dog sits\"}\n"
      "{\"id\":\"c\",\"split\":\"test\",\"text\":\"a cat sleeps\"}\n");
  auto recs = load_dataset(path, DatasetFormat::Jsonl);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].id == "a");
  CHECK(recs[0].split == Split::Train);
  CHECK(recs[0].text == "a man runs");
  CHECK(recs[1].split == Split::Valid);
  CHECK(recs[2].split == Split::Test);
}

TEST_CASE("empty dataset file yields empty list") {
  std::string path = write_temp("empty.jsonl", "");
  auto recs = load_dataset(path, DatasetFormat::Jsonl);
  CHECK(recs.empty());
}

TEST_CASE("record missing text field is an error naming the line") {
  std::string path = write_temp(
      "bad.jsonl",
      "{\"id\":\"a\",\"split\":\"train\",\"text\":\"ok\"}\n"
      "{\"id\":\"b\",\"split\":\"train\"}\n");
  try {
    load_dataset(path, DatasetFormat::Jsonl);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("tsv loader infers format from extension") {
  std::string path = write_temp("ds.tsv", "a\ttrain\ta man runs\n");
  auto recs = load_dataset(path);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == "a");
  CHECK(recs[0].text == "a man runs");
}

TEST_CASE("tokenizer fixture cases") {
  std::ifstream in(std::string(FIXTURE_DIR) + "/tokenizer_cases.tsv");
  REQUIRE(in.good());
  std::string line;
  int n_cases = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    std::string input = line.substr(0, tab);
    std::vector<Token> expected = split_ws(line.substr(tab + 1));
    INFO("input: " << input);
    CHECK(tokenize(input) == expected);
    ++n_cases;
  }
  CHECK(n_cases >= 10);
}

TEST_CASE("tokenizer is idempotent on its own output") {
  std::vector<std::string> texts = {
      "A man, who can't stop, runs.",
      "The dog's well-lit house...",
      "\"quoted\" (parens) end!",
      "it's 3:30pm; they'll've gone",
  };
  for (const auto& t : texts) {
    auto once = tokenize(t);
    auto again = tokenize(join(once, " "));
    INFO("text: " << t);
    CHECK(once == again);
  }
}

TEST_CASE("vocab keeps the cap most frequent words plus reserved ids") {
  auto recs = recs_from_counts({{"a", 5}, {"dog", 3}, {"cat", 1}});
  Vocabulary v = build_vocab(recs, 2);
  CHECK(v.size() == 2 + Vocabulary::kReserved);
  CHECK(v.lookup("a") >= Vocabulary::kReserved);
  CHECK(v.lookup("dog") >= Vocabulary::kReserved);
  CHECK(v.lookup("cat") == Vocabulary::kUnk);
  // Reserved ids are pinned.
  CHECK(v.word(Vocabulary::kBos) == "<bos>");
  CHECK(v.word(Vocabulary::kEos) == "<eos>");
  CHECK(v.word(Vocabulary::kUnk) == "<unk>");
}

TEST_CASE("cap larger than distinct words keeps everything") {
  auto recs = recs_from_counts({{"a", 5}, {"dog", 3}, {"cat", 1}});
  Vocabulary v = build_vocab(recs, 100);
  CHECK(v.content_size() == 3);
  CHECK(v.lookup("cat") >= Vocabulary::kReserved);
}

TEST_CASE("frequency ties break lexicographically") {
  auto recs = recs_from_counts({{"dog", 3}, {"cat", 3}});
  Vocabulary v = build_vocab(recs, 1);
  CHECK(v.lookup("cat") >= Vocabulary::kReserved);
  CHECK(v.lookup("dog") == Vocabulary::kUnk);
}

TEST_CASE("vocab construction ignores record order") {
  auto recs = recs_from_counts({{"a", 4}, {"b", 2}, {"c", 7}, {"d", 2}});
  auto shuffled = recs;
  Rng rng(99);
  rng.shuffle(shuffled);
  Vocabulary v1 = build_vocab(recs, 3);
  Vocabulary v2 = build_vocab(shuffled, 3);
  CHECK(v1.word_of == v2.word_of);
}

TEST_CASE("encode wraps with bos/eos and maps oov to unk") {
  auto recs = recs_from_counts({{"man", 2}, {"runs", 2}});
  Vocabulary v = build_vocab(recs, 10);
  auto ids = v.encode({"man", "xylophone", "runs"});
  REQUIRE(ids.size() == 5);
  CHECK(ids.front() == Vocabulary::kBos);
  CHECK(ids[2] == Vocabulary::kUnk);
  CHECK(ids.back() == Vocabulary::kEos);
}

TEST_CASE("jsonl round trip preserves records") {
  std::string path = write_temp(
      "rt.jsonl",
      "{\"id\":\"a\",\"split\":\"train\",\"text\":\"a \\\"man\\\" runs\"}\n");
  auto recs = load_dataset(path);
  tokenize_records(recs);
  std::string out_path = "/tmp/capora_test_rt_out.jsonl";
  write_dataset_jsonl(recs, out_path);
  auto again = load_dataset(out_path);
  REQUIRE(again.size() == 1);
  CHECK(again[0].id == recs[0].id);
  CHECK(again[0].text == recs[0].text);
}
