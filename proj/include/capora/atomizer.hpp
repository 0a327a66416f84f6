#ifndef CAPORA_ATOMIZER_HPP
#define CAPORA_ATOMIZER_HPP

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "capora/common.hpp"
#include "capora/tagset.hpp"

namespace capora {

enum class AtomCategory { Entity, Action, Attribute };

inline constexpr std::array<AtomCategory, 3> kAllCategories = {
    AtomCategory::Entity, AtomCategory::Action, AtomCategory::Attribute};

inline std::string category_name(AtomCategory c) {
  switch (c) {
    case AtomCategory::Entity: return "entity";
    case AtomCategory::Action: return "action";
    case AtomCategory::Attribute: return "attribute";
  }
  return "?";
}

inline AtomCategory parse_category(std::string_view s) {
  if (s == "entity") return AtomCategory::Entity;
  if (s == "action") return AtomCategory::Action;
  if (s == "attribute") return AtomCategory::Attribute;
  throw DataError("unknown atom category: " + std::string(s));
}

// A lemmatized word plus its category. Ordering is (category, lemma) so sets
// and maps iterate deterministically.
struct Atom {
  std::string lemma;
  AtomCategory category = AtomCategory::Entity;

  friend bool operator==(const Atom& a, const Atom& b) {
    return a.category == b.category && a.lemma == b.lemma;
  }
  friend bool operator<(const Atom& a, const Atom& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.lemma < b.lemma;
  }
  std::string str() const { return lemma + ":" + category_name(category); }
};

using AtomSet = std::set<Atom>;

// Word-level tag -> atom category. Tags outside the three lists yield nothing.
inline std::optional<AtomCategory> categorize_tag(const PtbTag& tag) {
  if (tag == "NN" || tag == "NNP" || tag == "NNPS" || tag == "NNS" || tag == "PRP")
    return AtomCategory::Entity;
  if (tag == "VB" || tag == "VBD" || tag == "VBG" || tag == "VBN" ||
      tag == "VBP" || tag == "VBZ")
    return AtomCategory::Action;
  if (tag == "JJ" || tag == "JJR" || tag == "JJS") return AtomCategory::Attribute;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Lemmatizer: an exception table consulted first, then category-specific
// suffix rules with consonant undoubling and silent-e restoration. Unchanged
// input when no rule fires. Idempotent over the fixture vocabulary.

namespace detail {

inline bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// Undoubling applies to consonants that English doubles before -ing/-ed/-er;
// l, s and z stay doubled (falling, missing, buzzing).
inline bool undoubles(char c) {
  switch (c) {
    case 'b': case 'd': case 'g': case 'k': case 'm':
    case 'n': case 'p': case 'r': case 't':
      return true;
    default:
      return false;
  }
}

// Stem fixups shared by the verb and adjective rules after a suffix strip.
inline std::string fix_stem(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
      undoubles(stem[n - 1])) {
    stem.pop_back();  // running -> runn -> run
    return stem;
  }
  // CVC ending suggests a dropped silent e: mak(e), smil(e), larg(e).
  if (n >= 3 && !is_vowel(stem[n - 1]) && stem[n - 1] != 'w' &&
      stem[n - 1] != 'x' && stem[n - 1] != 'y' && is_vowel(stem[n - 2]) &&
      !is_vowel(stem[n - 3])) {
    stem += 'e';
  }
  return stem;
}

struct ExceptionKey {
  AtomCategory category;
  std::string word;
  friend bool operator<(const ExceptionKey& a, const ExceptionKey& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.word < b.word;
  }
};

inline const std::map<ExceptionKey, std::string>& lemma_exceptions() {
  using C = AtomCategory;
  static const std::map<ExceptionKey, std::string> table = {
      // nouns
      {{C::Entity, "men"}, "man"},
      {{C::Entity, "women"}, "woman"},
      {{C::Entity, "children"}, "child"},
      {{C::Entity, "people"}, "person"},
      {{C::Entity, "feet"}, "foot"},
      {{C::Entity, "teeth"}, "tooth"},
      {{C::Entity, "mice"}, "mouse"},
      {{C::Entity, "geese"}, "goose"},
      {{C::Entity, "leaves"}, "leaf"},
      {{C::Entity, "knives"}, "knife"},
      {{C::Entity, "wolves"}, "wolf"},
      {{C::Entity, "buses"}, "bus"},
      {{C::Entity, "glasses"}, "glass"},
      {{C::Entity, "dishes"}, "dish"},
      // verbs
      {{C::Action, "is"}, "be"},
      {{C::Action, "are"}, "be"},
      {{C::Action, "am"}, "be"},
      {{C::Action, "was"}, "be"},
      {{C::Action, "were"}, "be"},
      {{C::Action, "been"}, "be"},
      {{C::Action, "has"}, "have"},
      {{C::Action, "had"}, "have"},
      {{C::Action, "does"}, "do"},
      {{C::Action, "did"}, "do"},
      {{C::Action, "done"}, "do"},
      {{C::Action, "goes"}, "go"},
      {{C::Action, "went"}, "go"},
      {{C::Action, "gone"}, "go"},
      {{C::Action, "ran"}, "run"},
      {{C::Action, "sat"}, "sit"},
      {{C::Action, "stood"}, "stand"},
      {{C::Action, "ate"}, "eat"},
      {{C::Action, "eaten"}, "eat"},
      {{C::Action, "saw"}, "see"},
      {{C::Action, "seen"}, "see"},
      {{C::Action, "took"}, "take"},
      {{C::Action, "taken"}, "take"},
      {{C::Action, "gave"}, "give"},
      {{C::Action, "given"}, "give"},
      {{C::Action, "held"}, "hold"},
      {{C::Action, "made"}, "make"},
      {{C::Action, "said"}, "say"},
      {{C::Action, "got"}, "get"},
      {{C::Action, "slept"}, "sleep"},
      {{C::Action, "rode"}, "ride"},
      {{C::Action, "ridden"}, "ride"},
      {{C::Action, "flew"}, "fly"},
      {{C::Action, "flown"}, "fly"},
      {{C::Action, "adding"}, "add"},
      {{C::Action, "added"}, "add"},
      // adjectives
      {{C::Attribute, "better"}, "good"},
      {{C::Attribute, "best"}, "good"},
      {{C::Attribute, "worse"}, "bad"},
      {{C::Attribute, "worst"}, "bad"},
  };
  return table;
}

inline std::string lemmatize_noun(const std::string& w) {
  const std::size_t n = w.size();
  if (n >= 4 && w.ends_with("ies")) return w.substr(0, n - 3) + "y";
  if (n >= 4 && (w.ends_with("xes") || w.ends_with("zes") || w.ends_with("ses") ||
                 w.ends_with("ches") || w.ends_with("shes")))
    return w.substr(0, n - 2);
  if (n >= 3 && w.ends_with("s") && !w.ends_with("ss") && !w.ends_with("us") &&
      !w.ends_with("is"))
    return w.substr(0, n - 1);
  return w;
}

inline std::string lemmatize_verb(const std::string& w) {
  const std::size_t n = w.size();
  if (n >= 5 && w.ends_with("ing")) return fix_stem(w.substr(0, n - 3));
  if (n >= 4 && w.ends_with("ied")) return w.substr(0, n - 3) + "y";
  if (n >= 4 && w.ends_with("ed")) return fix_stem(w.substr(0, n - 2));
  if (n >= 4 && w.ends_with("ies")) return w.substr(0, n - 3) + "y";
  if (n >= 4 && (w.ends_with("xes") || w.ends_with("zes") || w.ends_with("ses") ||
                 w.ends_with("ches") || w.ends_with("shes") || w.ends_with("oes")))
    return w.substr(0, n - 2);
  if (n >= 3 && w.ends_with("s") && !w.ends_with("ss")) return w.substr(0, n - 1);
  return w;
}

inline std::string lemmatize_adjective(const std::string& w) {
  const std::size_t n = w.size();
  if (n >= 5 && w.ends_with("iest")) return w.substr(0, n - 4) + "y";
  if (n >= 4 && w.ends_with("ier")) return w.substr(0, n - 3) + "y";
  if (n >= 5 && w.ends_with("est")) return fix_stem(w.substr(0, n - 3));
  if (n >= 4 && w.ends_with("er")) return fix_stem(w.substr(0, n - 2));
  return w;
}

}  // namespace detail

inline std::string lemmatize(const std::string& word, AtomCategory category) {
  const auto& exc = detail::lemma_exceptions();
  auto it = exc.find({category, word});
  if (it != exc.end()) return it->second;
  switch (category) {
    case AtomCategory::Entity: return detail::lemmatize_noun(word);
    case AtomCategory::Action: return detail::lemmatize_verb(word);
    case AtomCategory::Attribute: return detail::lemmatize_adjective(word);
  }
  return word;
}

// Category-agnostic stemming used by the metric's stem-match stage: try the
// exception table in category order, then verb, noun, adjective rules; the
// first transformation wins.
inline std::string lemmatize_any(const std::string& word) {
  for (AtomCategory c : kAllCategories) {
    const auto& exc = detail::lemma_exceptions();
    auto it = exc.find({c, word});
    if (it != exc.end()) return it->second;
  }
  std::string v = detail::lemmatize_verb(word);
  if (v != word) return v;
  std::string n = detail::lemmatize_noun(word);
  if (n != word) return n;
  return detail::lemmatize_adjective(word);
}

// ---------------------------------------------------------------------------
// Atom extraction and frequency accounting.

inline AtomSet extract_atoms(const std::vector<std::string>& tokens,
                             const std::vector<PtbTag>& tags) {
  if (tokens.size() != tags.size())
    throw DataError("extract_atoms: tokens/tags length mismatch (" +
                    std::to_string(tokens.size()) + " vs " +
                    std::to_string(tags.size()) + ")");
  AtomSet atoms;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto cat = categorize_tag(tags[i]);
    if (!cat) continue;
    atoms.insert(Atom{lemmatize(tokens[i], *cat), *cat});
  }
  return atoms;
}

// Caption-level document frequency over the training split: an atom counts
// once per caption containing it.
struct FrequencyTable {
  std::map<Atom, long> counts;
  std::array<std::vector<Atom>, 3> by_category;  // count desc, lemma asc
  std::vector<Atom> merged;                      // same order across categories

  long count(const Atom& a) const {
    auto it = counts.find(a);
    return it == counts.end() ? 0 : it->second;
  }
  const std::vector<Atom>& category_list(AtomCategory c) const {
    return by_category[static_cast<int>(c)];
  }
};

inline FrequencyTable build_frequency_table(const std::vector<AtomSet>& caption_atoms) {
  FrequencyTable table;
  for (const auto& atoms : caption_atoms)
    for (const auto& a : atoms) ++table.counts[a];
  auto freq_order = [&table](const Atom& a, const Atom& b) {
    long ca = table.counts.at(a), cb = table.counts.at(b);
    if (ca != cb) return ca > cb;
    if (a.lemma != b.lemma) return a.lemma < b.lemma;
    return a.category < b.category;
  };
  for (const auto& [atom, n] : table.counts) {
    table.by_category[static_cast<int>(atom.category)].push_back(atom);
    table.merged.push_back(atom);
  }
  for (auto& list : table.by_category)
    std::sort(list.begin(), list.end(), freq_order);
  std::sort(table.merged.begin(), table.merged.end(), freq_order);
  return table;
}

// ---------------------------------------------------------------------------
// Top-k selection. Three modes: one category; "combined", which takes k from
// each category and concatenates (3k atoms total); and "global", which takes
// the first k of the merged frequency ranking regardless of category.

struct TopKList {
  std::vector<Atom> atoms;
  std::string mode;  // entity|action|attribute|combined|global
  int k = 0;
  bool truncated = false;  // k exceeded what the table holds

  bool contains(const Atom& a) const {
    return std::find(atoms.begin(), atoms.end(), a) != atoms.end();
  }
  std::string label() const { return mode + ":" + std::to_string(k); }
};

inline TopKList select_top_k(const FrequencyTable& table, int k,
                             std::optional<AtomCategory> category) {
  if (k < 0) throw UsageError("select_top_k: k must be >= 0");
  TopKList out;
  out.k = k;
  if (category) {
    out.mode = category_name(*category);
    const auto& list = table.category_list(*category);
    int take = std::min<int>(k, static_cast<int>(list.size()));
    out.truncated = take < k;
    out.atoms.assign(list.begin(), list.begin() + take);
  } else {
    out.mode = "combined";
    for (AtomCategory c : kAllCategories) {
      const auto& list = table.category_list(c);
      int take = std::min<int>(k, static_cast<int>(list.size()));
      if (take < k) out.truncated = true;
      out.atoms.insert(out.atoms.end(), list.begin(), list.begin() + take);
    }
  }
  return out;
}

inline TopKList select_top_k_global(const FrequencyTable& table, int k) {
  if (k < 0) throw UsageError("select_top_k_global: k must be >= 0");
  TopKList out;
  out.k = k;
  out.mode = "global";
  int take = std::min<int>(k, static_cast<int>(table.merged.size()));
  out.truncated = take < k;
  out.atoms.assign(table.merged.begin(), table.merged.begin() + take);
  return out;
}

// ---------------------------------------------------------------------------
// Per-caption conditioning bags.

struct AtomBag {
  std::vector<Atom> atoms;  // sorted, duplicate-free; may be empty ("NA")
  std::string k_source;     // label of the top-k list it was filtered against

  bool contains(const Atom& a) const {
    return std::binary_search(atoms.begin(), atoms.end(), a);
  }
  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
};

// The caption's own atoms intersected with the global top-k list.
inline AtomBag caption_bag(const AtomSet& caption_atoms, const TopKList& topk) {
  AtomBag bag;
  bag.k_source = topk.label();
  for (const auto& a : caption_atoms)
    if (topk.contains(a)) bag.atoms.push_back(a);
  std::sort(bag.atoms.begin(), bag.atoms.end());
  return bag;
}

// ---------------------------------------------------------------------------
// Bag corruption for the accuracy-vs-quantity experiment. Exactly
// round(r*|bag|) members, chosen uniformly under the seed, are swapped for
// distinct same-category atoms from the pool.

struct NoiseSpec {
  double r = 0.0;
  std::uint64_t seed = 0;
  std::array<std::vector<Atom>, 3> pool;  // per category, disjoint from top-k

  const std::vector<Atom>& pool_for(AtomCategory c) const {
    return pool[static_cast<int>(c)];
  }
};

// Pool construction used by the sweeps: every table atom of each category that
// did not make the top-k list.
inline NoiseSpec make_noise_spec(const FrequencyTable& table, const TopKList& topk,
                                 double r, std::uint64_t seed) {
  if (r < 0.0 || r > 1.0) throw UsageError("noise rate r must lie in [0,1]");
  NoiseSpec spec;
  spec.r = r;
  spec.seed = seed;
  for (const auto& atom : table.merged)
    if (!topk.contains(atom))
      spec.pool[static_cast<int>(atom.category)].push_back(atom);
  return spec;
}

inline AtomBag corrupt_bag(const AtomBag& bag, const NoiseSpec& spec) {
  if (spec.r < 0.0 || spec.r > 1.0) throw UsageError("noise rate r must lie in [0,1]");
  const std::size_t n = bag.size();
  const std::size_t m =
      static_cast<std::size_t>(round_half_up(spec.r * static_cast<double>(n)));
  AtomBag out = bag;
  if (m == 0) return out;

  Rng rng(spec.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> victims(order.begin(), order.begin() + m);
  std::sort(victims.begin(), victims.end());  // replace in bag order

  std::array<std::vector<Atom>, 3> avail = spec.pool;
  for (std::size_t idx : victims) {
    auto cat = bag.atoms[idx].category;
    auto& pool = avail[static_cast<int>(cat)];
    if (pool.empty())
      throw DataError("corrupt_bag: pool exhausted for category " +
                      category_name(cat));
    std::size_t pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
    out.atoms[idx] = pool[pick];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(out.atoms.begin(), out.atoms.end());
  return out;
}

}  // namespace capora

#endif  // CAPORA_ATOMIZER_HPP
