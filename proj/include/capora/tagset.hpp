#ifndef CAPORA_TAGSET_HPP
#define CAPORA_TAGSET_HPP

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

namespace capora {

// The closed Penn Treebank word-level tagset, plus the punctuation tags the
// treebank uses. Kept in one place; a fixture copy under tests/ pins it.
inline constexpr std::array<std::string_view, 45> kPtbTagset = {
    "CC",  "CD",  "DT",   "EX",   "FW",  "IN",   "JJ",  "JJR", "JJS",
    "LS",  "MD",  "NN",   "NNP",  "NNPS", "NNS", "PDT", "POS", "PRP",
    "PRP$", "RB", "RBR",  "RBS",  "RP",  "SYM",  "TO",  "UH",  "VB",
    "VBD", "VBG", "VBN",  "VBP",  "VBZ", "WDT",  "WP",  "WP$", "WRB",
    ".",   ",",   ":",    "(",    ")",   "``",   "''",  "$",   "#"};

inline bool is_ptb_tag(std::string_view tag) {
  return std::find(kPtbTagset.begin(), kPtbTagset.end(), tag) != kPtbTagset.end();
}

using PtbTag = std::string;

}  // namespace capora

#endif  // CAPORA_TAGSET_HPP
