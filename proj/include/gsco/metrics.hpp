#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsco/error.hpp"

namespace gsco {

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

// Per-class confusion counts over a label-subset dataset.
struct ConfusionCounts {
  std::vector<std::size_t> tp, fp, fn, tn;

  explicit ConfusionCounts(std::size_t num_classes)
      : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0), tn(num_classes, 0) {}
  std::size_t num_classes() const { return tp.size(); }
};

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

enum class F1Mode { Macro, Micro };

// Fraction of samples whose single predicted label equals the target.
inline double accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> pred) {
  if (truth.size() != pred.size()) {
    throw ShapeError("accuracy: " + std::to_string(truth.size()) + " targets vs " +
                     std::to_string(pred.size()) + " predictions");
  }
  if (truth.empty()) {
    throw EmptyInputError("accuracy: no samples");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == pred[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

// Counts each class independently, which covers single-label and multilabel
// datasets alike (a single-label sample is the singleton subset).
inline ConfusionCounts confusion_counts(std::span<const std::vector<std::size_t>> truth,
                                        std::span<const std::vector<std::size_t>> pred,
                                        std::size_t num_classes) {
  if (truth.size() != pred.size()) {
    throw ShapeError("confusion_counts: " + std::to_string(truth.size()) + " targets vs " +
                     std::to_string(pred.size()) + " predictions");
  }
  ConfusionCounts counts(num_classes);
  std::vector<char> in_truth(num_classes), in_pred(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::fill(in_truth.begin(), in_truth.end(), 0);
    std::fill(in_pred.begin(), in_pred.end(), 0);
    for (std::size_t c : truth[i]) in_truth.at(c) = 1;
    for (std::size_t c : pred[i]) in_pred.at(c) = 1;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (in_truth[c] && in_pred[c]) ++counts.tp[c];
      else if (!in_truth[c] && in_pred[c]) ++counts.fp[c];
      else if (in_truth[c] && !in_pred[c]) ++counts.fn[c];
      else ++counts.tn[c];
    }
  }
  return counts;
}

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); zero denominators give 0.
inline PrfScores per_class_prf(const ConfusionCounts& counts, std::size_t cls) {
  const double tp = static_cast<double>(counts.tp.at(cls));
  const double fp = static_cast<double>(counts.fp.at(cls));
  const double fn = static_cast<double>(counts.fn.at(cls));
  PrfScores s;
  s.precision = (tp + fp > 0.0) ? tp / (tp + fp) : 0.0;
  s.recall = (tp + fn > 0.0) ? tp / (tp + fn) : 0.0;
  s.f1 = (s.precision + s.recall > 0.0) ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
  return s;
}

// Macro: unweighted mean of per-class F1 over every class in the vocabulary.
// Micro: F1 of globally pooled counts, computed as 2TP/(2TP+FP+FN) so that
// the single-label case reduces to accuracy exactly.
inline double aggregate_f1(std::span<const std::vector<std::size_t>> truth,
                           std::span<const std::vector<std::size_t>> pred,
                           std::size_t num_classes, F1Mode mode) {
  ConfusionCounts counts = confusion_counts(truth, pred, num_classes);
  if (mode == F1Mode::Macro) {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      sum += per_class_prf(counts, c).f1;
    }
    return num_classes > 0 ? sum / static_cast<double>(num_classes) : 0.0;
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    tp += counts.tp[c];
    fp += counts.fp[c];
    fn += counts.fn[c];
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
}

// ---------------------------------------------------------------------------
// Token-level scoring (VQA and report generation)
// ---------------------------------------------------------------------------

// Lowercase, replace every non-alphanumeric character by a space, split on
// whitespace runs. Locale-free by construction.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    bool alnum = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
    if (alnum) {
      current.push_back(ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch + 0x20) : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace detail {

inline std::map<std::string, std::size_t> token_counts(std::span<const std::string> tokens) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : tokens) ++counts[t];
  return counts;
}

// Multiset overlap: sum over tokens of min(count_pred, count_ref).
inline std::size_t multiset_overlap(std::span<const std::string> pred,
                                    std::span<const std::string> ref) {
  auto pc = token_counts(pred);
  auto rc = token_counts(ref);
  std::size_t matched = 0;
  for (const auto& [token, count] : pc) {
    auto it = rc.find(token);
    if (it != rc.end()) matched += std::min(count, it->second);
  }
  return matched;
}

// Token-level longest common subsequence length.
inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

}  // namespace detail

inline PrfScores token_overlap_scores(std::span<const std::string> pred_tokens,
                                      std::span<const std::string> ref_tokens) {
  const std::size_t matched = detail::multiset_overlap(pred_tokens, ref_tokens);
  PrfScores s;
  s.precision = pred_tokens.empty() ? 0.0
                                    : static_cast<double>(matched) /
                                          static_cast<double>(pred_tokens.size());
  s.recall = ref_tokens.empty() ? 0.0
                                : static_cast<double>(matched) /
                                      static_cast<double>(ref_tokens.size());
  s.f1 = (s.precision + s.recall > 0.0) ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
  return s;
}

struct VqaScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool closed_correct = false;  // recall >= 0.5
  bool open_correct = false;    // recall >= 0.75
  bool correct = false;         // the flag matching the question type
};

// Token-recall thresholds are inclusive: 0.5 for close-ended questions,
// 0.75 for open-ended ones.
inline VqaScore score_vqa_item(std::string_view pred_text, std::string_view ref_text,
                               bool closed) {
  auto pred = tokenize(pred_text);
  auto ref = tokenize(ref_text);
  PrfScores overlap = token_overlap_scores(pred, ref);
  VqaScore score;
  score.precision = overlap.precision;
  score.recall = overlap.recall;
  score.f1 = overlap.f1;
  score.closed_correct = score.recall >= 0.5;
  score.open_correct = score.recall >= 0.75;
  score.correct = closed ? score.closed_correct : score.open_correct;
  return score;
}

// Shared breakdown for the n-gram scores.
struct NlgBreakdown {
  double bp = 0.0;          // brevity penalty (bleu1)
  double p1 = 0.0;          // clipped unigram precision (bleu1)
  std::size_t c = 0;        // candidate token count
  std::size_t r = 0;        // reference token count
  std::size_t lcs_len = 0;  // token LCS length (rouge_l)
  double f_lcs = 0.0;       // LCS F-measure (rouge_l)
};

// BLEU-1: BP * p1 with clipped unigram counts. BP = 1 when c > r, else
// exp(1 - r/c). Empty candidates and zero-overlap candidates score 0.
inline std::pair<double, NlgBreakdown> bleu1(std::string_view pred_text,
                                             std::string_view ref_text) {
  auto pred = tokenize(pred_text);
  auto ref = tokenize(ref_text);
  NlgBreakdown b;
  b.c = pred.size();
  b.r = ref.size();
  if (pred.empty()) {
    return {0.0, b};
  }
  const std::size_t clipped = detail::multiset_overlap(pred, ref);
  b.p1 = static_cast<double>(clipped) / static_cast<double>(pred.size());
  b.bp = b.c > b.r ? 1.0
                   : std::exp(1.0 - static_cast<double>(b.r) / static_cast<double>(b.c));
  const double score = b.p1 > 0.0 ? b.bp * b.p1 : 0.0;
  return {score, b};
}

// Recall-oriented unigram overlap: |overlap| / |reference unigrams|.
inline double rouge1(std::string_view pred_text, std::string_view ref_text) {
  auto pred = tokenize(pred_text);
  auto ref = tokenize(ref_text);
  if (ref.empty()) return 0.0;
  return static_cast<double>(detail::multiset_overlap(pred, ref)) /
         static_cast<double>(ref.size());
}

// F-measure of the token-level longest common subsequence.
inline std::pair<double, NlgBreakdown> rouge_l(std::string_view pred_text,
                                               std::string_view ref_text) {
  auto pred = tokenize(pred_text);
  auto ref = tokenize(ref_text);
  NlgBreakdown b;
  b.c = pred.size();
  b.r = ref.size();
  b.lcs_len = detail::lcs_length(pred, ref);
  const double p = pred.empty() ? 0.0
                                : static_cast<double>(b.lcs_len) /
                                      static_cast<double>(pred.size());
  const double r = ref.empty() ? 0.0
                               : static_cast<double>(b.lcs_len) /
                                     static_cast<double>(ref.size());
  b.f_lcs = (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  return {b.f_lcs, b};
}

// Mean over gold sentences of the best hypothesis precision against each.
// For the usual one-vs-one call this is plain unigram precision.
inline double meteor_lite(std::span<const std::string> gold_texts,
                          std::span<const std::string> hyp_texts) {
  if (gold_texts.empty()) {
    throw EmptyInputError("meteor_lite: gold set is empty");
  }
  std::vector<std::vector<std::string>> hyp_tokens;
  hyp_tokens.reserve(hyp_texts.size());
  for (const auto& h : hyp_texts) hyp_tokens.push_back(tokenize(h));

  double sum = 0.0;
  for (const auto& g : gold_texts) {
    auto gold = tokenize(g);
    double best = 0.0;
    for (const auto& hyp : hyp_tokens) {
      best = std::max(best, token_overlap_scores(hyp, gold).precision);
    }
    sum += best;
  }
  return sum / static_cast<double>(gold_texts.size());
}

// ---------------------------------------------------------------------------
// Bootstrap confidence intervals
// ---------------------------------------------------------------------------

struct BootstrapResult {
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Empirical quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Percentile bootstrap: B resamples with replacement, 95% interval from the
// 2.5th/97.5th empirical percentiles. Each replicate's RNG stream is derived
// from (seed, replicate index), so results do not depend on scheduling and
// repeat exactly for a given seed.
template <typename Rec, typename Stat>
BootstrapResult bootstrap_ci(std::span<const Rec> records, Stat&& statistic, std::size_t B,
                             std::uint64_t seed) {
  if (records.empty()) {
    throw EmptyInputError("bootstrap_ci: no records");
  }
  if (B < 1) {
    throw ValidationError("bootstrap_ci: B must be >= 1");
  }
  BootstrapResult result;
  result.point = statistic(records);

  const std::size_t n = records.size();
  std::vector<double> stats(B);
  std::vector<Rec> resample(n);
  for (std::size_t b = 0; b < B; ++b) {
    std::uint64_t state = seed ^ (0xA0761D6478BD642Full * (b + 1));
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = records[detail::splitmix64(state) % n];
    }
    stats[b] = statistic(std::span<const Rec>(resample));
  }
  std::sort(stats.begin(), stats.end());
  result.ci_low = detail::quantile_sorted(stats, 0.025);
  result.ci_high = detail::quantile_sorted(stats, 0.975);
  return result;
}

}  // namespace gsco
