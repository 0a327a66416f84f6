#ifndef CAPORA_TAGGER_HPP
#define CAPORA_TAGGER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "capora/checkpoint.hpp"
#include "capora/common.hpp"
#include "capora/corpus.hpp"
#include "capora/tagset.hpp"

namespace capora {

// Averaged-perceptron tagger with greedy left-to-right decoding. Closed-class
// words that always carried one tag in training bypass the scorer entirely.

struct TaggerModel {
  std::vector<std::string> tags;  // column order of weights
  std::unordered_map<std::string, int> tag_id;
  std::vector<std::string> features;  // row order of weights
  std::unordered_map<std::string, int> feature_id;
  Eigen::MatrixXd weights;  // n_features x n_tags, averaged
  std::unordered_map<std::string, std::string> dictionary;
  int epochs = 0;
  int dict_threshold = 5;
  double heldout_accuracy = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void token_features(const std::vector<Token>& tokens, std::size_t i,
                           const std::string& prev_tag, const std::string& prev2_tag,
                           std::vector<std::string>& out) {
  const std::string& w = tokens[i];
  out.clear();
  out.push_back("bias");
  out.push_back("w=" + w);
  out.push_back("suf3=" + (w.size() > 3 ? w.substr(w.size() - 3) : w));
  out.push_back("pre1=" + w.substr(0, 1));
  bool has_digit = false, has_hyphen = false, has_upper = false;
  for (char ch : w) {
    if (ch >= '0' && ch <= '9') has_digit = true;
    if (ch == '-') has_hyphen = true;
    if (ch >= 'A' && ch <= 'Z') has_upper = true;
  }
  if (has_digit) out.push_back("shape=digit");
  if (has_hyphen) out.push_back("shape=hyphen");
  if (has_upper) out.push_back("shape=caps");
  out.push_back("pw=" + (i > 0 ? tokens[i - 1] : std::string("__bos__")));
  out.push_back("nw=" + (i + 1 < tokens.size() ? tokens[i + 1] : std::string("__eos__")));
  out.push_back("pt=" + prev_tag);
  out.push_back("ppt=" + prev2_tag);
  out.push_back("pt+w=" + prev_tag + "_" + w);
}

// Sparse weight table used during training, with the running-total trick for
// averaging: totals absorb weight * (age) whenever an entry changes.
struct PerceptronTable {
  std::size_t n_tags = 0;
  std::unordered_map<std::string, std::vector<double>> w;
  std::unordered_map<std::string, std::vector<double>> totals;
  std::unordered_map<std::string, std::vector<long>> stamps;
  long clock = 0;

  std::vector<double>& row(std::unordered_map<std::string, std::vector<double>>& m,
                           const std::string& f) {
    auto [it, fresh] = m.try_emplace(f);
    if (fresh) it->second.assign(n_tags, 0.0);
    return it->second;
  }

  void bump(const std::string& f, std::size_t tag, double delta) {
    auto& weights = row(w, f);
    auto& tot = row(totals, f);
    auto [sit, fresh] = stamps.try_emplace(f);
    if (fresh) sit->second.assign(n_tags, 0);
    tot[tag] += static_cast<double>(clock - sit->second[tag]) * weights[tag];
    sit->second[tag] = clock;
    weights[tag] += delta;
  }

  void score(const std::vector<std::string>& feats, std::vector<double>& scores) const {
    std::fill(scores.begin(), scores.end(), 0.0);
    for (const auto& f : feats) {
      auto it = w.find(f);
      if (it == w.end()) continue;
      for (std::size_t t = 0; t < n_tags; ++t) scores[t] += it->second[t];
    }
  }

  // Final averaged weights: settle all entries to the current clock.
  std::unordered_map<std::string, std::vector<double>> averaged() {
    std::unordered_map<std::string, std::vector<double>> avg;
    for (auto& [f, weights] : w) {
      auto& tot = row(totals, f);
      auto sit = stamps.find(f);
      for (std::size_t t = 0; t < n_tags; ++t) {
        tot[t] += static_cast<double>(clock - (sit != stamps.end() ? sit->second[t] : 0)) *
                  weights[t];
        if (sit != stamps.end()) sit->second[t] = clock;
      }
      std::vector<double> out(n_tags);
      for (std::size_t t = 0; t < n_tags; ++t)
        out[t] = clock > 0 ? tot[t] / static_cast<double>(clock) : weights[t];
      avg.emplace(f, std::move(out));
    }
    return avg;
  }
};

}  // namespace detail

inline std::vector<PtbTag> tag_tokens(const TaggerModel& model,
                                      const std::vector<Token>& tokens) {
  std::vector<PtbTag> out;
  out.reserve(tokens.size());
  std::string prev = "__start__", prev2 = "__start2__";
  std::vector<std::string> feats;
  std::vector<double> scores(model.tags.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string tag;
    auto dict_it = model.dictionary.find(tokens[i]);
    if (dict_it != model.dictionary.end()) {
      tag = dict_it->second;
    } else {
      detail::token_features(tokens, i, prev, prev2, feats);
      std::fill(scores.begin(), scores.end(), 0.0);
      for (const auto& f : feats) {
        auto it = model.feature_id.find(f);
        if (it == model.feature_id.end()) continue;
        for (std::size_t t = 0; t < model.tags.size(); ++t)
          scores[t] += model.weights(it->second, static_cast<int>(t));
      }
      std::size_t best = 0;
      for (std::size_t t = 1; t < scores.size(); ++t)
        if (scores[t] > scores[best]) best = t;  // ties keep the lower index
      tag = model.tags[best];
    }
    out.push_back(tag);
    prev2 = prev;
    prev = tag;
  }
  return out;
}

using TaggedSentence = std::pair<std::vector<Token>, std::vector<PtbTag>>;

inline TaggerModel train_tagger(const std::vector<TaggedSentence>& corpus, int epochs,
                                std::uint64_t seed, int dict_threshold = 5) {
  if (corpus.empty()) throw DataError("train_tagger: empty corpus");
  if (epochs < 1) throw UsageError("train_tagger: epochs must be >= 1");
  for (const auto& [tokens, tags] : corpus) {
    if (tokens.size() != tags.size())
      throw DataError("train_tagger: token/tag length mismatch");
    for (const auto& t : tags)
      if (!is_ptb_tag(t)) throw DataError("train_tagger: unknown tag " + t);
  }

  TaggerModel model;
  model.epochs = epochs;
  model.dict_threshold = dict_threshold;
  model.tags.assign(kPtbTagset.begin(), kPtbTagset.end());
  for (std::size_t t = 0; t < model.tags.size(); ++t)
    model.tag_id[model.tags[t]] = static_cast<int>(t);

  // Last tenth held out for the reported accuracy.
  const std::size_t n_holdout = corpus.size() / 10;
  const std::size_t n_train = corpus.size() - n_holdout;

  // Unambiguous-word dictionary over the training part.
  {
    std::unordered_map<std::string, std::unordered_map<std::string, long>> seen;
    for (std::size_t s = 0; s < n_train; ++s)
      for (std::size_t i = 0; i < corpus[s].first.size(); ++i)
        ++seen[corpus[s].first[i]][corpus[s].second[i]];
    for (const auto& [word, tag_counts] : seen) {
      if (tag_counts.size() != 1) continue;
      const auto& [tag, count] = *tag_counts.begin();
      if (count >= dict_threshold) model.dictionary[word] = tag;
    }
  }

  detail::PerceptronTable table;
  table.n_tags = model.tags.size();
  Rng rng(seed);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::string> feats;
  std::vector<double> scores(model.tags.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t s : order) {
      const auto& [tokens, tags] = corpus[s];
      std::string prev = "__start__", prev2 = "__start2__";
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::string predicted;
        auto dict_it = model.dictionary.find(tokens[i]);
        if (dict_it != model.dictionary.end()) {
          predicted = dict_it->second;
        } else {
          detail::token_features(tokens, i, prev, prev2, feats);
          table.score(feats, scores);
          std::size_t best = 0;
          for (std::size_t t = 1; t < scores.size(); ++t)
            if (scores[t] > scores[best]) best = t;
          predicted = model.tags[best];
          ++table.clock;
          if (predicted != tags[i]) {
            std::size_t gold = static_cast<std::size_t>(model.tag_id.at(tags[i]));
            for (const auto& f : feats) {
              table.bump(f, gold, 1.0);
              table.bump(f, best, -1.0);
            }
          }
        }
        prev2 = prev;
        prev = predicted;
      }
    }
  }

  // Freeze averaged weights into dense form, feature rows sorted for
  // serialization stability.
  auto averaged = table.averaged();
  for (const auto& [f, _] : averaged) model.features.push_back(f);
  std::sort(model.features.begin(), model.features.end());
  model.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.features.size()),
                                        static_cast<Eigen::Index>(model.tags.size()));
  for (std::size_t r = 0; r < model.features.size(); ++r) {
    model.feature_id[model.features[r]] = static_cast<int>(r);
    const auto& row = averaged.at(model.features[r]);
    for (std::size_t t = 0; t < model.tags.size(); ++t)
      model.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = row[t];
  }

  if (n_holdout > 0) {
    long correct = 0, total = 0;
    for (std::size_t s = n_train; s < corpus.size(); ++s) {
      auto predicted = tag_tokens(model, corpus[s].first);
      for (std::size_t i = 0; i < predicted.size(); ++i) {
        ++total;
        if (predicted[i] == corpus[s].second[i]) ++correct;
      }
    }
    model.heldout_accuracy =
        total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
  }
  return model;
}

inline std::vector<TaggedSentence> load_pretagged(const std::vector<CaptionRecord>& records) {
  std::vector<TaggedSentence> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.gold_tags)
      throw DataError("record " + r.id + " has no tags");
    if (r.gold_tags->size() != r.tokens.size())
      throw DataError("record " + r.id + " has " + std::to_string(r.tokens.size()) +
                      " tokens but " + std::to_string(r.gold_tags->size()) + " tags");
    out.emplace_back(r.tokens, *r.gold_tags);
  }
  return out;
}

// CoNLL-style token<TAB>tag lines, blank line between sentences.
inline std::vector<TaggedSentence> load_tagged_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tagged corpus: " + path);
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      if (!current.first.empty()) out.push_back(std::move(current)), current = {};
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected token<TAB>tag");
    current.first.push_back(line.substr(0, tab));
    current.second.push_back(line.substr(tab + 1));
  }
  if (!current.first.empty()) out.push_back(std::move(current));
  return out;
}

inline void write_tagged_tsv(const std::vector<TaggedSentence>& sentences,
                             std::ostream& out) {
  for (const auto& [tokens, tags] : sentences) {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      out << tokens[i] << "\t" << tags[i] << "\n";
    out << "\n";
  }
}

inline Checkpoint tagger_to_checkpoint(const TaggerModel& model) {
  Checkpoint ck;
  ck.kind = "tagger";
  ck.meta = {
      {"epochs", std::to_string(model.epochs)},
      {"dict_threshold", std::to_string(model.dict_threshold)},
      {"heldout_accuracy", format_double(model.heldout_accuracy)},
  };
  ck.strings.emplace_back("tags", model.tags);
  ck.strings.emplace_back("features", model.features);
  std::vector<std::string> dict_lines;
  for (const auto& [word, tag] : model.dictionary)
    dict_lines.push_back(word + " " + tag);
  std::sort(dict_lines.begin(), dict_lines.end());
  ck.strings.emplace_back("dict", std::move(dict_lines));
  ck.tensors.emplace_back("weights", model.weights);
  return ck;
}

inline TaggerModel tagger_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "tagger") throw DataError("checkpoint kind is not 'tagger'");
  TaggerModel model;
  model.epochs = std::stoi(ck.require_meta("epochs"));
  model.dict_threshold = std::stoi(ck.require_meta("dict_threshold"));
  model.heldout_accuracy = std::stod(ck.require_meta("heldout_accuracy"));
  model.tags = ck.require_strings("tags");
  for (std::size_t t = 0; t < model.tags.size(); ++t)
    model.tag_id[model.tags[t]] = static_cast<int>(t);
  model.features = ck.require_strings("features");
  for (std::size_t r = 0; r < model.features.size(); ++r)
    model.feature_id[model.features[r]] = static_cast<int>(r);
  for (const auto& line : ck.require_strings("dict")) {
    auto sep = line.find(' ');
    if (sep == std::string::npos) throw DataError("bad dict line in checkpoint: " + line);
    model.dictionary[line.substr(0, sep)] = line.substr(sep + 1);
  }
  model.weights = ck.require_tensor("weights");
  if (model.weights.rows() != static_cast<Eigen::Index>(model.features.size()) ||
      model.weights.cols() != static_cast<Eigen::Index>(model.tags.size()))
    throw DataError("tagger weight shape disagrees with its feature/tag lists");
  return model;
}

}  // namespace capora

#endif  // CAPORA_TAGGER_HPP
