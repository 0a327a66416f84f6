#ifndef CAPORA_METRICS_HPP
#define CAPORA_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "capora/atomizer.hpp"
#include "capora/common.hpp"
#include "capora/corpus.hpp"

namespace capora {

struct EvalInstance {
  std::vector<Token> candidate;
  std::vector<std::vector<Token>> references;  // nonempty
};

struct ScoreReport {
  std::array<double, 4> bleu{};  // bleu[n-1] = BLEU-n
  double cider = 0.0;
  double meteor_lite = 0.0;
  std::vector<double> cider_per_instance;
  std::vector<double> meteor_per_instance;
};

namespace detail {

using NgramCounts = std::map<std::vector<Token>, long>;

inline NgramCounts count_ngrams(const std::vector<Token>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() >= n)
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
      ++counts[std::vector<Token>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Corpus-level BLEU-1..4: modified n-gram precision with per-reference
// clipping, geometric mean, brevity penalty from closest-reference lengths
// (length ties resolved toward the shorter reference). No smoothing: a zero
// clipped count at any order zeroes that order's score.

inline std::array<double, 4> bleu(const std::vector<EvalInstance>& instances) {
  if (instances.empty()) throw DataError("bleu: no instances");
  std::array<double, 4> matches{}, totals{};
  long cand_len = 0, ref_len = 0;

  for (const auto& inst : instances) {
    if (inst.references.empty()) throw DataError("bleu: instance without references");
    cand_len += static_cast<long>(inst.candidate.size());
    long best_ref = static_cast<long>(inst.references[0].size());
    for (const auto& ref : inst.references) {
      long len = static_cast<long>(ref.size());
      long diff = std::abs(len - static_cast<long>(inst.candidate.size()));
      long best_diff = std::abs(best_ref - static_cast<long>(inst.candidate.size()));
      if (diff < best_diff || (diff == best_diff && len < best_ref)) best_ref = len;
    }
    ref_len += best_ref;

    for (std::size_t n = 1; n <= 4; ++n) {
      auto cand_counts = detail::count_ngrams(inst.candidate, n);
      detail::NgramCounts clip;
      for (const auto& ref : inst.references) {
        auto ref_counts = detail::count_ngrams(ref, n);
        for (const auto& [gram, count] : ref_counts) {
          auto it = clip.find(gram);
          if (it == clip.end())
            clip.emplace(gram, count);
          else
            it->second = std::max(it->second, count);
        }
      }
      for (const auto& [gram, count] : cand_counts) {
        totals[n - 1] += static_cast<double>(count);
        auto it = clip.find(gram);
        if (it != clip.end())
          matches[n - 1] += static_cast<double>(std::min(count, it->second));
      }
    }
  }

  const double bp =
      cand_len == 0
          ? 0.0
          : (cand_len >= ref_len
                 ? 1.0
                 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)));

  std::array<double, 4> out{};
  for (std::size_t n = 1; n <= 4; ++n) {
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t m = 1; m <= n; ++m) {
      if (matches[m - 1] <= 0.0 || totals[m - 1] <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(matches[m - 1] / totals[m - 1]) / static_cast<double>(n);
    }
    out[n - 1] = zero ? 0.0 : bp * std::exp(log_sum);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CIDEr: per-order (1..4) TF-IDF n-gram vectors, cosine against each
// reference, mean over references, mean over orders, times ten. Document
// frequency counts instances whose reference set contains the n-gram; a
// vector with zero norm contributes cosine 0. Under cosine the per-sentence
// term-frequency normalization cancels, so raw counts are used directly.

inline std::vector<double> cider_per_instance(const std::vector<EvalInstance>& instances) {
  const std::size_t N = instances.size();
  std::array<std::map<std::vector<Token>, long>, 4> df;
  for (const auto& inst : instances) {
    if (inst.references.empty()) throw DataError("cider: instance without references");
    for (std::size_t n = 1; n <= 4; ++n) {
      detail::NgramCounts in_any;
      for (const auto& ref : inst.references)
        for (const auto& [gram, count] : detail::count_ngrams(ref, n)) in_any[gram] = 1;
      for (const auto& [gram, one] : in_any) ++df[n - 1][gram];
    }
  }
  auto idf = [&](std::size_t n, const std::vector<Token>& gram) {
    auto it = df[n - 1].find(gram);
    long d = it == df[n - 1].end() ? 0 : it->second;
    return std::log(static_cast<double>(N)) -
           std::log(std::max(1.0, static_cast<double>(d)));
  };

  std::vector<double> scores;
  scores.reserve(N);
  for (const auto& inst : instances) {
    double order_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      auto cand_counts = detail::count_ngrams(inst.candidate, n);
      std::map<std::vector<Token>, double> cand_vec;
      double cand_norm2 = 0.0;
      for (const auto& [gram, count] : cand_counts) {
        double v = static_cast<double>(count) * idf(n, gram);
        cand_vec[gram] = v;
        cand_norm2 += v * v;
      }
      double ref_sum = 0.0;
      for (const auto& ref : inst.references) {
        auto ref_counts = detail::count_ngrams(ref, n);
        double dot = 0.0, ref_norm2 = 0.0;
        for (const auto& [gram, count] : ref_counts) {
          double v = static_cast<double>(count) * idf(n, gram);
          ref_norm2 += v * v;
          auto it = cand_vec.find(gram);
          if (it != cand_vec.end()) dot += it->second * v;
        }
        double denom = std::sqrt(cand_norm2) * std::sqrt(ref_norm2);
        ref_sum += denom > 0.0 ? dot / denom : 0.0;
      }
      order_sum += ref_sum / static_cast<double>(inst.references.size());
    }
    scores.push_back(10.0 * order_sum / 4.0);
  }
  return scores;
}

inline double cider(const std::vector<EvalInstance>& instances) {
  if (instances.empty()) throw DataError("cider: no instances");
  auto scores = cider_per_instance(instances);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------
// METEOR-lite: exact-match alignment stage, then a stem-match stage over the
// leftovers; F = PR/(0.9P + 0.1R); chunk penalty 0.5 (chunks/matches)^3; the
// best reference is kept per instance; instance scores average to the corpus
// score.

namespace detail {

struct Alignment {
  std::vector<int> ref_of;  // per candidate position; -1 unmatched
  int matches = 0;
};

template <class Pred>
void align_stage(const std::vector<Token>& cand, const std::vector<Token>& ref,
                 Alignment& alignment, std::vector<bool>& ref_used, Pred match) {
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (alignment.ref_of[i] >= 0) continue;
    int prev = i > 0 ? alignment.ref_of[i - 1] : -1;
    int chosen = -1;
    // Prefer continuing the previous match's chunk.
    if (prev >= 0 && static_cast<std::size_t>(prev + 1) < ref.size() &&
        !ref_used[static_cast<std::size_t>(prev + 1)] &&
        match(cand[i], ref[static_cast<std::size_t>(prev + 1)]))
      chosen = prev + 1;
    if (chosen < 0)
      for (std::size_t j = 0; j < ref.size(); ++j)
        if (!ref_used[j] && match(cand[i], ref[j])) {
          chosen = static_cast<int>(j);
          break;
        }
    if (chosen >= 0) {
      alignment.ref_of[i] = chosen;
      ref_used[static_cast<std::size_t>(chosen)] = true;
      ++alignment.matches;
    }
  }
}

inline double meteor_one(const std::vector<Token>& cand, const std::vector<Token>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  Alignment alignment;
  alignment.ref_of.assign(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  align_stage(cand, ref, alignment, ref_used,
              [](const Token& a, const Token& b) { return a == b; });
  align_stage(cand, ref, alignment, ref_used, [](const Token& a, const Token& b) {
    return lemmatize_any(a) == lemmatize_any(b);
  });
  if (alignment.matches == 0) return 0.0;

  const double m = alignment.matches;
  const double precision = m / static_cast<double>(cand.size());
  const double recall = m / static_cast<double>(ref.size());
  const double f = precision * recall / (0.9 * precision + 0.1 * recall);

  int chunks = 0;
  int prev_cand = -2, prev_ref = -2;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (alignment.ref_of[i] < 0) continue;
    if (static_cast<int>(i) != prev_cand + 1 || alignment.ref_of[i] != prev_ref + 1)
      ++chunks;
    prev_cand = static_cast<int>(i);
    prev_ref = alignment.ref_of[i];
  }
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
  return f * (1.0 - penalty);
}

}  // namespace detail

inline std::vector<double> meteor_lite_per_instance(
    const std::vector<EvalInstance>& instances) {
  std::vector<double> scores;
  scores.reserve(instances.size());
  for (const auto& inst : instances) {
    if (inst.references.empty()) throw DataError("meteor: instance without references");
    double best = 0.0;
    for (const auto& ref : inst.references)
      best = std::max(best, detail::meteor_one(inst.candidate, ref));
    scores.push_back(best);
  }
  return scores;
}

inline double meteor_lite(const std::vector<EvalInstance>& instances) {
  if (instances.empty()) throw DataError("meteor: no instances");
  auto scores = meteor_lite_per_instance(instances);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

inline ScoreReport score_all(const std::vector<EvalInstance>& instances) {
  if (instances.empty()) throw DataError("score_all: no instances");
  ScoreReport report;
  report.bleu = bleu(instances);
  report.cider_per_instance = cider_per_instance(instances);
  report.meteor_per_instance = meteor_lite_per_instance(instances);
  double csum = 0.0, msum = 0.0;
  for (double v : report.cider_per_instance) csum += v;
  for (double v : report.meteor_per_instance) msum += v;
  report.cider = csum / static_cast<double>(instances.size());
  report.meteor_lite = msum / static_cast<double>(instances.size());
  return report;
}

}  // namespace capora

#endif  // CAPORA_METRICS_HPP
