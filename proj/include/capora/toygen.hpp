#ifndef CAPORA_TOYGEN_HPP
#define CAPORA_TOYGEN_HPP

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capora/atomizer.hpp"
#include "capora/common.hpp"
#include "capora/corpus.hpp"

namespace capora {

// Synthetic caption corpus with atom sets known by construction: templates
// whose slots draw inflected forms from a small weighted lexicon, emitted
// with gold tags so the true atoms are exactly what extraction sees.

struct ToyEntity {
  std::string lemma, sg, pl;
  double weight = 1.0;
  bool rare = false;
};
struct ToyAction {
  std::string lemma, base, third, prog, past;
  double weight = 1.0;
  bool rare = false;
};
struct ToyAttribute {
  std::string lemma, pos, comp;
  double weight = 1.0;
  bool rare = false;
};

struct ToyCorpusSpec {
  std::uint64_t seed = 0;
  int n_captions = 0;
  double train_frac = 0.8, valid_frac = 0.1;  // remainder is test
  std::string id_prefix = "toy";
  std::vector<ToyEntity> entities;
  std::vector<ToyAction> actions;
  std::vector<ToyAttribute> attributes;
  std::vector<std::string> templates;  // whitespace-separated literals and slots
};

struct ToyCorpus {
  std::vector<CaptionRecord> records;
  std::vector<AtomSet> truth;  // parallel to records
};

namespace detail {

// Closed-class literals a template may use without declaring them. None of
// these carries an atom-bearing tag, so templates can vary freely in function
// words without touching the atom inventory.
inline const std::map<std::string, PtbTag>& toy_function_tags() {
  static const std::map<std::string, PtbTag> table = {
      {"the", "DT"},   {"a", "DT"},     {"an", "DT"},    {"both", "DT"},
      {"in", "IN"},    {"on", "IN"},    {"near", "IN"},  {"with", "IN"},
      {"by", "IN"},    {"under", "IN"}, {"over", "IN"},  {"at", "IN"},
      {"and", "CC"},   {"or", "CC"},    {"one", "CD"},   {"two", "CD"},
      {"three", "CD"}, {"very", "RB"},  {"quite", "RB"}, {"rather", "RB"},
      {"quickly", "RB"}, {"together", "RB"}, {"outside", "RB"},
      {"again", "RB"}, {"away", "RB"},  {"once", "RB"},  {"more", "RB"},
      {"up", "RB"},    {"down", "RB"},  {"back", "RB"},  {"forth", "RB"},
      {"out", "RB"},   {"so", "RB"},    {"right", "RB"}, {"then", "RB"},
      {"now", "RB"},   {"here", "RB"},  {"there", "RB"}, {"twice", "RB"},
      {".", "."},      {",", ","},
  };
  return table;
}

struct SlotRef {
  AtomCategory category;
  std::string form;  // sg|pl|base|third|prog|past|pos|comp
  bool rare = false;  // draw from the rare side of the lexicon
};

inline SlotRef parse_slot(const std::string& piece, const std::string& tmpl) {
  // piece looks like <ENT>, <ACT:prog>, <ATT:comp>, <ENT:sg:rare>
  std::string body = piece.substr(1, piece.size() - 2);
  std::string head = body, form, flag;
  if (auto colon = body.find(':'); colon != std::string::npos) {
    head = body.substr(0, colon);
    form = body.substr(colon + 1);
    if (auto second = form.find(':'); second != std::string::npos) {
      flag = form.substr(second + 1);
      form = form.substr(0, second);
    }
  }
  SlotRef ref;
  if (!flag.empty() && flag != "rare")
    throw DataError("unknown slot flag '" + flag + "' in template: " + tmpl);
  ref.rare = flag == "rare";
  if (head == "ENT") {
    ref.category = AtomCategory::Entity;
    ref.form = form.empty() ? "sg" : form;
    if (ref.form != "sg" && ref.form != "pl")
      throw DataError("bad entity slot form in template: " + tmpl);
  } else if (head == "ACT") {
    ref.category = AtomCategory::Action;
    ref.form = form.empty() ? "base" : form;
    if (ref.form != "base" && ref.form != "third" && ref.form != "prog" &&
        ref.form != "past")
      throw DataError("bad action slot form in template: " + tmpl);
  } else if (head == "ATT") {
    ref.category = AtomCategory::Attribute;
    ref.form = form.empty() ? "pos" : form;
    if (ref.form != "pos" && ref.form != "comp")
      throw DataError("bad attribute slot form in template: " + tmpl);
  } else {
    throw DataError("unknown slot <" + body + "> in template: " + tmpl);
  }
  return ref;
}

inline PtbTag slot_tag(const SlotRef& ref) {
  if (ref.form == "sg") return "NN";
  if (ref.form == "pl") return "NNS";
  if (ref.form == "base") return "VBP";
  if (ref.form == "third") return "VBZ";
  if (ref.form == "prog") return "VBG";
  if (ref.form == "past") return "VBD";
  if (ref.form == "pos") return "JJ";
  return "JJR";  // comp
}

}  // namespace detail

inline ToyCorpusSpec load_toy_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open toy spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("toy spec " + path + ": " + e.what());
  }
  ToyCorpusSpec spec;
  try {
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.n_captions = j.at("n_captions").get<int>();
    if (j.contains("train_frac")) spec.train_frac = j["train_frac"].get<double>();
    if (j.contains("valid_frac")) spec.valid_frac = j["valid_frac"].get<double>();
    if (j.contains("id_prefix")) spec.id_prefix = j["id_prefix"].get<std::string>();
    for (const auto& e : j.at("entities"))
      spec.entities.push_back({e.at("lemma"), e.at("sg"), e.at("pl"),
                               e.value("weight", 1.0), e.value("rare", false)});
    for (const auto& a : j.at("actions"))
      spec.actions.push_back({a.at("lemma"), a.at("base"), a.at("third"),
                              a.at("prog"), a.at("past"), a.value("weight", 1.0),
                              a.value("rare", false)});
    for (const auto& t : j.at("attributes"))
      spec.attributes.push_back({t.at("lemma"), t.at("pos"), t.at("comp"),
                                 t.value("weight", 1.0), t.value("rare", false)});
    for (const auto& t : j.at("templates"))
      spec.templates.push_back(t.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("toy spec " + path + ": " + e.what());
  }
  return spec;
}

inline ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec) {
  if (spec.n_captions < 0) throw UsageError("n_captions must be >= 0");
  if (spec.n_captions > 0 && spec.templates.empty())
    throw DataError("toy spec has no templates");
  if (spec.train_frac < 0 || spec.valid_frac < 0 ||
      spec.train_frac + spec.valid_frac > 1.0)
    throw DataError("toy split fractions out of range");

  // Pre-split every template once.
  std::vector<std::vector<std::string>> pieces;
  pieces.reserve(spec.templates.size());
  for (const auto& t : spec.templates) {
    auto p = split_ws(t);
    if (p.empty()) throw DataError("empty template in toy spec");
    pieces.push_back(std::move(p));
  }

  const int n_train = static_cast<int>(spec.train_frac * spec.n_captions);
  const int n_valid = static_cast<int>(spec.valid_frac * spec.n_captions);

  ToyCorpus out;
  out.records.reserve(spec.n_captions);
  out.truth.reserve(spec.n_captions);

  for (int i = 0; i < spec.n_captions; ++i) {
    // Independent stream per caption so corpus prefixes are stable.
    Rng rng(derive_seed(spec.seed, "caption:" + std::to_string(i)));
    std::size_t ti = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pieces.size()) - 1));

    // Remaining lexicon indices per (side, category), where side splits the
    // lexicon into its common and rare halves: a slot draws only from its own
    // side. A lemma is used at most once per caption so the true atom set
    // size equals the slot count.
    std::array<std::array<std::vector<std::size_t>, 3>, 2> remaining;
    std::array<std::array<std::vector<double>, 3>, 2> weights;
    auto reset = [&](AtomCategory c, std::size_t n, auto weight_at, auto rare_at) {
      for (std::size_t q = 0; q < n; ++q) {
        int side = rare_at(q) ? 1 : 0;
        remaining[side][static_cast<int>(c)].push_back(q);
        weights[side][static_cast<int>(c)].push_back(weight_at(q));
      }
    };
    reset(AtomCategory::Entity, spec.entities.size(),
          [&](std::size_t q) { return spec.entities[q].weight; },
          [&](std::size_t q) { return spec.entities[q].rare; });
    reset(AtomCategory::Action, spec.actions.size(),
          [&](std::size_t q) { return spec.actions[q].weight; },
          [&](std::size_t q) { return spec.actions[q].rare; });
    reset(AtomCategory::Attribute, spec.attributes.size(),
          [&](std::size_t q) { return spec.attributes[q].weight; },
          [&](std::size_t q) { return spec.attributes[q].rare; });

    CaptionRecord rec;
    rec.id = spec.id_prefix + "-" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%06d", i);
      return std::string(buf);
    }();
    rec.split = i < n_train ? Split::Train
                            : (i < n_train + n_valid ? Split::Valid : Split::Test);
    rec.gold_tags.emplace();

    // First pass: draw one lemma per slot. Drawn lemmas are then sorted
    // within each category so the atom set alone determines the sentence
    // (a caption with two entities always names them in lexicographic
    // order), which keeps exact reconstruction possible from the bag.
    auto lemma_of = [&](AtomCategory c, std::size_t li) -> const std::string& {
      switch (c) {
        case AtomCategory::Entity: return spec.entities[li].lemma;
        case AtomCategory::Action: return spec.actions[li].lemma;
        default: return spec.attributes[li].lemma;
      }
    };
    std::array<std::vector<std::size_t>, 3> picks;
    for (const auto& piece : pieces[ti]) {
      if (piece.size() >= 2 && piece.front() == '<' && piece.back() == '>') {
        auto ref = detail::parse_slot(piece, spec.templates[ti]);
        const int side = ref.rare ? 1 : 0;
        auto& idx = remaining[side][static_cast<int>(ref.category)];
        auto& w = weights[side][static_cast<int>(ref.category)];
        if (idx.empty())
          throw DataError("template needs more " +
                          std::string(ref.rare ? "rare " : "common ") +
                          category_name(ref.category) +
                          " lemmas than the lexicon holds: " + spec.templates[ti]);
        std::size_t pick = rng.weighted_choice(w);
        picks[static_cast<int>(ref.category)].push_back(idx[pick]);
        idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(pick));
        w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick));
      }
    }
    for (int c = 0; c < 3; ++c) {
      auto cat = static_cast<AtomCategory>(c);
      std::sort(picks[c].begin(), picks[c].end(),
                [&](std::size_t a, std::size_t b) {
                  return lemma_of(cat, a) < lemma_of(cat, b);
                });
    }

    std::array<std::size_t, 3> cursor{0, 0, 0};
    for (const auto& piece : pieces[ti]) {
      if (piece.size() >= 2 && piece.front() == '<' && piece.back() == '>') {
        auto ref = detail::parse_slot(piece, spec.templates[ti]);
        std::size_t li =
            picks[static_cast<int>(ref.category)][cursor[static_cast<int>(ref.category)]++];
        std::string surface;
        switch (ref.category) {
          case AtomCategory::Entity:
            surface = ref.form == "sg" ? spec.entities[li].sg : spec.entities[li].pl;
            break;
          case AtomCategory::Action:
            surface = ref.form == "base"    ? spec.actions[li].base
                      : ref.form == "third" ? spec.actions[li].third
                      : ref.form == "prog"  ? spec.actions[li].prog
                                            : spec.actions[li].past;
            break;
          case AtomCategory::Attribute:
            surface = ref.form == "pos" ? spec.attributes[li].pos
                                        : spec.attributes[li].comp;
            break;
        }
        rec.tokens.push_back(surface);
        rec.gold_tags->push_back(detail::slot_tag(ref));
      } else {
        const auto& fn = detail::toy_function_tags();
        auto it = fn.find(piece);
        if (it == fn.end())
          throw DataError("template literal '" + piece +
                          "' has no builtin tag: " + spec.templates[ti]);
        rec.tokens.push_back(piece);
        rec.gold_tags->push_back(it->second);
      }
    }
    rec.text = join(rec.tokens, " ");
    out.truth.push_back(extract_atoms(rec.tokens, *rec.gold_tags));
    out.records.push_back(std::move(rec));
  }
  return out;
}

// JSONL emission including the gold tags and the true atom set; readers that
// only know id/split/text/tags ignore the extra field.
inline void write_toy_jsonl(const ToyCorpus& corpus, std::ostream& out) {
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    nlohmann::json j;
    j["id"] = r.id;
    j["split"] = split_name(r.split);
    j["text"] = r.text;
    j["tags"] = *r.gold_tags;
    auto& atoms = j["atoms"] = nlohmann::json::array();
    for (const auto& a : corpus.truth[i])
      atoms.push_back({{"lemma", a.lemma}, {"category", category_name(a.category)}});
    out << j.dump() << "\n";
  }
}

}  // namespace capora

#endif  // CAPORA_TOYGEN_HPP
