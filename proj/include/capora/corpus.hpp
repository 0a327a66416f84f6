#ifndef CAPORA_CORPUS_HPP
#define CAPORA_CORPUS_HPP

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "capora/common.hpp"
#include "capora/tagset.hpp"

namespace capora {

using Token = std::string;

enum class Split { Train, Valid, Test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw DataError("unknown split label: " + std::string(s));
}

// One caption as ingested. tokens/gold_tags start empty and are filled by the
// tokenization and tagging passes.
struct CaptionRecord {
  std::string id;
  Split split = Split::Train;
  std::string text;
  std::vector<Token> tokens;
  std::optional<std::vector<PtbTag>> gold_tags;
};

// ---------------------------------------------------------------------------
// Tokenizer: lowercase, split punctuation into single-character tokens, split
// clitics per the rule table below. Idempotent on its own space-joined output;
// the cases fixture under tests/ pins the behaviour.

namespace detail {

// Longest first so n't wins over a hypothetical 't.
inline constexpr std::array<std::string_view, 7> kClitics = {
    "n't", "'re", "'ve", "'ll", "'s", "'d", "'m"};

inline bool is_clitic(std::string_view w) {
  for (auto c : kClitics)
    if (w == c) return true;
  return false;
}

// Hyphens stay in-word; apostrophes are handled by the clitic rules and the
// leading/trailing peel below.
inline bool is_punct_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 128 && std::ispunct(u) && c != '-';
}

inline void split_word(std::string_view w, std::vector<Token>& out) {
  if (w.empty()) return;
  if (is_clitic(w)) {
    out.emplace_back(w);
    return;
  }
  if (w.size() == 1) {
    out.emplace_back(w);
    return;
  }
  if (is_punct_char(w.front())) {
    out.emplace_back(1, w.front());
    split_word(w.substr(1), out);
    return;
  }
  if (is_punct_char(w.back())) {
    split_word(w.substr(0, w.size() - 1), out);
    out.emplace_back(1, w.back());
    return;
  }
  // Internal punctuation splits too, except apostrophes (clitic territory).
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    if (is_punct_char(w[i]) && w[i] != '\'') {
      split_word(w.substr(0, i), out);
      out.emplace_back(1, w[i]);
      split_word(w.substr(i + 1), out);
      return;
    }
  }
  for (auto c : kClitics) {
    if (w.size() > c.size() && w.ends_with(c)) {
      split_word(w.substr(0, w.size() - c.size()), out);
      out.emplace_back(c);
      return;
    }
  }
  out.emplace_back(w);
}

}  // namespace detail

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  for (const std::string& chunk : split_ws(to_lower_ascii(text)))
    detail::split_word(chunk, out);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary with reserved <bos>/<eos>/<unk>. Content words are ranked by
// frequency (descending) with lexicographic tie-break, so construction is
// independent of record order.

struct Vocabulary {
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kReserved = 3;

  std::unordered_map<std::string, int> id_of;
  std::vector<std::string> word_of;

  Vocabulary() : word_of{"<bos>", "<eos>", "<unk>"} {
    id_of = {{"<bos>", kBos}, {"<eos>", kEos}, {"<unk>", kUnk}};
  }

  int size() const { return static_cast<int>(word_of.size()); }
  int content_size() const { return size() - kReserved; }

  int lookup(const std::string& w) const {
    auto it = id_of.find(w);
    return it == id_of.end() ? kUnk : it->second;
  }

  const std::string& word(int id) const { return word_of.at(id); }

  // <bos> w_1 ... w_n <eos>
  std::vector<int> encode(const std::vector<Token>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 2);
    ids.push_back(kBos);
    for (const auto& t : tokens) ids.push_back(lookup(t));
    ids.push_back(kEos);
    return ids;
  }

  // Rebuild from a serialized word list (index order, reserved tokens first).
  static Vocabulary from_word_list(const std::vector<std::string>& words) {
    if (words.size() < kReserved || words[0] != "<bos>" || words[1] != "<eos>" ||
        words[2] != "<unk>")
      throw DataError("word list does not start with the reserved tokens");
    Vocabulary v;
    for (std::size_t i = kReserved; i < words.size(); ++i) {
      if (!v.id_of.emplace(words[i], static_cast<int>(i)).second)
        throw DataError("duplicate word in serialized vocabulary: " + words[i]);
      v.word_of.push_back(words[i]);
    }
    return v;
  }
};

inline Vocabulary build_vocab(const std::vector<CaptionRecord>& records, int cap) {
  if (cap < 1) throw DataError("build_vocab: cap must be >= 1");
  std::map<std::string, long> counts;  // ordered: gives the lexicographic tie-break
  for (const auto& r : records) {
    if (r.split != Split::Train) continue;
    for (const auto& t : r.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [word, n] : items) {
    if (v.content_size() >= cap) break;
    v.id_of.emplace(word, v.size());
    v.word_of.push_back(word);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Dataset ingestion. JSONL: one object per line with id/split/text and an
// optional tags array. TSV: id <tab> split <tab> text.

enum class DatasetFormat { Jsonl, Tsv };

inline std::vector<CaptionRecord> load_dataset(const std::string& path,
                                               DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::vector<CaptionRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    CaptionRecord rec;
    if (format == DatasetFormat::Jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": malformed JSON: " + e.what());
      }
      if (!j.contains("id") || !j.contains("split") || !j.contains("text"))
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": record needs id, split and text fields");
      rec.id = j.at("id").get<std::string>();
      rec.split = parse_split(j.at("split").get<std::string>());
      rec.text = j.at("text").get<std::string>();
      if (j.contains("tags")) {
        rec.gold_tags = j.at("tags").get<std::vector<std::string>>();
      }
    } else {
      auto tab1 = line.find('\t');
      auto tab2 = tab1 == std::string::npos ? std::string::npos
                                            : line.find('\t', tab1 + 1);
      if (tab1 == std::string::npos || tab2 == std::string::npos)
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": expected id<TAB>split<TAB>text");
      rec.id = line.substr(0, tab1);
      rec.split = parse_split(line.substr(tab1 + 1, tab2 - tab1 - 1));
      rec.text = line.substr(tab2 + 1);
    }
    if (!seen_ids.insert(rec.id).second)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": duplicate record id: " + rec.id);
    records.push_back(std::move(rec));
  }
  return records;
}

// Format inferred from the extension: .tsv means TSV, anything else JSONL.
inline std::vector<CaptionRecord> load_dataset(const std::string& path) {
  bool tsv = path.size() > 4 && path.compare(path.size() - 4, 4, ".tsv") == 0;
  return load_dataset(path, tsv ? DatasetFormat::Tsv : DatasetFormat::Jsonl);
}

inline void tokenize_records(std::vector<CaptionRecord>& records) {
  for (auto& r : records) {
    r.tokens = tokenize(r.text);
    if (!r.text.empty() && r.tokens.empty())
      throw DataError("record " + r.id + ": text tokenized to nothing");
    if (r.gold_tags && r.gold_tags->size() != r.tokens.size())
      throw DataError("record " + r.id + ": tags length " +
                      std::to_string(r.gold_tags->size()) + " != tokens length " +
                      std::to_string(r.tokens.size()));
  }
}

inline void write_dataset_jsonl(const std::vector<CaptionRecord>& records,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["split"] = split_name(r.split);
    j["text"] = r.text;
    if (r.gold_tags) j["tags"] = *r.gold_tags;
    out << j.dump() << "\n";
  }
}

}  // namespace capora

#endif  // CAPORA_CORPUS_HPP
