#pragma once

// Task metrics: accuracy, F-beta (macro or micro over labels), ROUGE-L on
// tokens, soft-F1 for span extraction, rc-F1 for reading comprehension and the
// normalized log-deviation score for sentencing terms. Every score lies in
// [0, 1] and a perfect prediction scores 1.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexforge/corpus.hpp"
#include "lexforge/text.hpp"

namespace lexforge {

enum class MetricKind { kAccuracy, kMacroF1, kF05, kSoftF1, kRcF1, kRougeL, kNLD };

inline constexpr std::array<MetricKind, 7> kAllMetricKinds = {MetricKind::kAccuracy, MetricKind::kMacroF1,
                                                              MetricKind::kF05,      MetricKind::kSoftF1,
                                                              MetricKind::kRcF1,     MetricKind::kRougeL,
                                                              MetricKind::kNLD};

inline std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::kAccuracy: return "Accuracy";
    case MetricKind::kMacroF1: return "MacroF1";
    case MetricKind::kF05: return "F05";
    case MetricKind::kSoftF1: return "SoftF1";
    case MetricKind::kRcF1: return "RcF1";
    case MetricKind::kRougeL: return "RougeL";
    case MetricKind::kNLD: return "NLD";
  }
  return "";
}

inline std::optional<MetricKind> parse_metric_kind(std::string_view s) {
  std::string folded;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (folded == "accuracy" || folded == "acc") return MetricKind::kAccuracy;
  if (folded == "macrof1" || folded == "f1") return MetricKind::kMacroF1;
  if (folded == "f05" || folded == "f0.5") return MetricKind::kF05;
  if (folded == "softf1") return MetricKind::kSoftF1;
  if (folded == "rcf1") return MetricKind::kRcF1;
  if (folded == "rougel") return MetricKind::kRougeL;
  if (folded == "nld") return MetricKind::kNLD;
  return std::nullopt;
}

class ShapeMismatch : public InvalidArgument {
 public:
  explicit ShapeMismatch(MetricKind kind, const std::string& detail = "")
      : InvalidArgument("input shape does not match metric " + std::string(to_string(kind)) +
                        (detail.empty() ? "" : ": " + detail)) {}
};

class MetricOutOfRange : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

using Tokens = std::vector<std::string>;
using SpanSet = std::vector<Tokens>;

// ---------------------------------------------------------------------------
// Classification

inline double accuracy(std::span<const std::string> preds, std::span<const std::string> golds) {
  if (preds.size() != golds.size()) throw LengthMismatch(preds.size(), golds.size());
  if (preds.empty()) throw InvalidArgument("accuracy of empty lists is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

inline double f_beta(double precision, double recall, double beta = 1.0) {
  if (!(precision >= 0.0 && precision <= 1.0) || !(recall >= 0.0 && recall <= 1.0)) {
    throw MetricOutOfRange("precision and recall must be in [0,1]");
  }
  if (!(beta > 0.0)) throw MetricOutOfRange("beta must be positive");
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

enum class Averaging { kMacro, kMicro };

// F-beta over a label vocabulary for multi-label predictions. Macro averages
// the per-label scores over every label seen in preds or golds; micro pools
// the counts.
inline double label_f_beta(std::span<const std::set<std::string>> preds, std::span<const std::set<std::string>> golds,
                           double beta = 1.0, Averaging averaging = Averaging::kMacro) {
  if (preds.size() != golds.size()) throw LengthMismatch(preds.size(), golds.size());
  if (preds.empty()) throw InvalidArgument("F-score of empty lists is undefined");
  struct Counts { std::uint64_t tp = 0, fp = 0, fn = 0; };
  std::map<std::string, Counts> per_label;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (const auto& l : preds[i]) (golds[i].count(l) ? per_label[l].tp : per_label[l].fp)++;
    for (const auto& l : golds[i]) {
      if (!preds[i].count(l)) per_label[l].fn++;
    }
  }
  if (per_label.empty()) return 1.0;  // nothing predicted, nothing expected
  auto score = [&](const Counts& c) {
    const double p = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return f_beta(p, r, beta);
  };
  if (averaging == Averaging::kMicro) {
    Counts total;
    for (const auto& [_, c] : per_label) total.tp += c.tp, total.fp += c.fp, total.fn += c.fn;
    return score(total);
  }
  double sum = 0.0;
  for (const auto& [_, c] : per_label) sum += score(c);
  return sum / static_cast<double>(per_label.size());
}

inline double macro_f1(std::span<const std::string> preds, std::span<const std::string> golds) {
  std::vector<std::set<std::string>> p, g;
  for (const auto& s : preds) p.push_back({s});
  for (const auto& s : golds) g.push_back({s});
  return label_f_beta(p, g, 1.0, Averaging::kMacro);
}

// ---------------------------------------------------------------------------
// Token overlap

// Multiset (bag-of-tokens) F1.
inline double bag_f1(std::span<const std::string> pred, std::span<const std::string> gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::unordered_map<std::string_view, std::int64_t> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Balanced LCS F-measure; zero when either side is empty.
inline double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

inline double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = segment_tokens(candidate);
  const auto r = segment_tokens(reference);
  return rouge_l(std::span<const std::string>(c), std::span<const std::string>(r));
}

enum class SpanMatching { kGreedy, kOptimal };

namespace detail {

// Maximum-weight assignment on an n x m weight matrix (Hungarian method on the
// negated, square-padded matrix). Returns the best total weight.
inline double max_weight_assignment(const std::vector<std::vector<double>>& w) {
  const std::size_t rows = w.size();
  const std::size_t cols = rows == 0 ? 0 : w[0].size();
  const std::size_t n = std::max(rows, cols);
  if (n == 0) return 0.0;
  auto cost = [&](std::size_t i, std::size_t j) { return (i < rows && j < cols) ? -w[i][j] : 0.0; };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) u[p[j]] += delta, v[j] -= delta;
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) total -= cost(p[j] - 1, j - 1);
  }
  return total;
}

}  // namespace detail

// Soft span F1: pairs of (gold, pred) spans are scored by token-bag F1 and
// matched one-to-one; soft-F1 = 2 x matched mass / (|pred| + |gold|).
inline double soft_f1(const SpanSet& pred, const SpanSet& gold, SpanMatching matching = SpanMatching::kGreedy) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::vector<std::vector<double>> w(gold.size(), std::vector<double>(pred.size()));
  for (std::size_t g = 0; g < gold.size(); ++g) {
    for (std::size_t p = 0; p < pred.size(); ++p) w[g][p] = bag_f1(pred[p], gold[g]);
  }
  double mass = 0.0;
  if (matching == SpanMatching::kOptimal) {
    mass = detail::max_weight_assignment(w);
  } else {
    struct Cand { double f; std::size_t g, p; };
    std::vector<Cand> cands;
    for (std::size_t g = 0; g < gold.size(); ++g) {
      for (std::size_t p = 0; p < pred.size(); ++p) {
        if (w[g][p] > 0.0) cands.push_back({w[g][p], g, p});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.f > b.f; });
    std::vector<bool> g_used(gold.size(), false), p_used(pred.size(), false);
    for (const auto& c : cands) {
      if (g_used[c.g] || p_used[c.p]) continue;
      g_used[c.g] = p_used[c.p] = true;
      mass += c.f;
    }
  }
  return std::clamp(2.0 * mass / static_cast<double>(pred.size() + gold.size()), 0.0, 1.0);
}

class NoGold : public InvalidArgument {
 public:
  NoGold() : InvalidArgument("rc_f1 needs at least one gold answer") {}
};

inline double rc_f1(std::span<const std::string> pred, std::span<const Tokens> golds) {
  if (golds.empty()) throw NoGold();
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, bag_f1(pred, g));
  return best;
}

// 1 - min(1, |ln(pred+1) - ln(gold+1)| / ln(max_term+1)).
inline double nld(double pred_term, double gold_term, double max_term) {
  if (!(max_term > 0.0) || !std::isfinite(max_term)) throw MetricOutOfRange("max_term must be positive and finite");
  if (!(pred_term >= 0.0 && pred_term <= max_term) || !(gold_term >= 0.0 && gold_term <= max_term)) {
    throw MetricOutOfRange("terms must lie in [0, max_term]");
  }
  const double dev = std::fabs(std::log1p(pred_term) - std::log1p(gold_term)) / std::log1p(max_term);
  return 1.0 - std::min(1.0, dev);
}

// ---------------------------------------------------------------------------
// Dispatch over JSON-shaped examples

struct MetricOptions {
  Averaging averaging = Averaging::kMacro;
  SpanMatching span_matching = SpanMatching::kGreedy;
  // Sentencing terms are in months; 300 months is the longest fixed term.
  double nld_max_term = 300.0;
};

namespace detail {

inline std::string label_of(const json& v, MetricKind kind) {
  if (v.is_string()) return std::string(trim(v.get<std::string>()));
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw ShapeMismatch(kind, "expected a label");
}

inline std::set<std::string> label_set(const json& v, MetricKind kind) {
  std::set<std::string> out;
  if (v.is_array()) {
    for (const auto& x : v) out.insert(label_of(x, kind));
  } else {
    out.insert(label_of(v, kind));
  }
  return out;
}

inline Tokens tokens_of(const json& v, MetricKind kind) {
  if (v.is_string()) return segment_tokens(v.get<std::string>());
  if (v.is_array()) {
    Tokens t;
    for (const auto& x : v) {
      if (!x.is_string()) throw ShapeMismatch(kind, "token arrays must hold strings");
      t.push_back(x.get<std::string>());
    }
    return t;
  }
  throw ShapeMismatch(kind, "expected text or a token array");
}

inline SpanSet span_set(const json& v, MetricKind kind) {
  if (!v.is_array()) throw ShapeMismatch(kind, "expected an array of spans");
  SpanSet out;
  for (const auto& s : v) {
    auto t = tokens_of(s, kind);
    if (t.empty()) throw ShapeMismatch(kind, "spans must contain at least one token");
    out.push_back(std::move(t));
  }
  return out;
}

inline double number_of(const json& v, MetricKind kind) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      const auto s = v.get<std::string>();
      const double d = std::stod(s, &used);
      if (trim(std::string_view(s).substr(used)).empty()) return d;
    } catch (const std::exception&) {
    }
  }
  throw ShapeMismatch(kind, "expected a number");
}

}  // namespace detail

// Per-example score. For the label-set kinds this is the example's own
// F-beta; corpus_score() applies the label averaging across examples.
inline double score(MetricKind kind, const json& pred, const json& gold, const MetricOptions& opts = {}) {
  switch (kind) {
    case MetricKind::kAccuracy:
      return detail::label_of(pred, kind) == detail::label_of(gold, kind) ? 1.0 : 0.0;
    case MetricKind::kMacroF1:
    case MetricKind::kF05: {
      const std::vector<std::set<std::string>> p{detail::label_set(pred, kind)};
      const std::vector<std::set<std::string>> g{detail::label_set(gold, kind)};
      return label_f_beta(p, g, kind == MetricKind::kF05 ? 0.5 : 1.0, Averaging::kMicro);
    }
    case MetricKind::kSoftF1:
      return soft_f1(detail::span_set(pred, kind), detail::span_set(gold, kind), opts.span_matching);
    case MetricKind::kRcF1: {
      const auto p = detail::tokens_of(pred, kind);
      // A gold string is one answer; a gold array lists alternative answers,
      // each given as text or as a token array.
      std::vector<Tokens> golds;
      if (gold.is_array()) {
        for (const auto& g : gold) golds.push_back(detail::tokens_of(g, kind));
      } else {
        golds.push_back(detail::tokens_of(gold, kind));
      }
      return rc_f1(p, golds);
    }
    case MetricKind::kRougeL: {
      const auto c = detail::tokens_of(pred, kind);
      const auto r = detail::tokens_of(gold, kind);
      return rouge_l(std::span<const std::string>(c), std::span<const std::string>(r));
    }
    case MetricKind::kNLD:
      return nld(detail::number_of(pred, kind), detail::number_of(gold, kind), opts.nld_max_term);
  }
  throw ShapeMismatch(kind);
}

struct ScoredExample {
  json pred;
  json gold;
};

// Corpus-level score: label-averaged F-beta for MacroF1/F05, the mean
// per-example score otherwise.
inline double corpus_score(MetricKind kind, std::span<const ScoredExample> examples, const MetricOptions& opts = {}) {
  if (examples.empty()) throw InvalidArgument("no examples to score");
  if (kind == MetricKind::kMacroF1 || kind == MetricKind::kF05) {
    std::vector<std::set<std::string>> p, g;
    for (const auto& e : examples) {
      p.push_back(detail::label_set(e.pred, kind));
      g.push_back(detail::label_set(e.gold, kind));
    }
    return label_f_beta(p, g, kind == MetricKind::kF05 ? 0.5 : 1.0, opts.averaging);
  }
  double sum = 0.0;
  for (const auto& e : examples) sum += score(kind, e.pred, e.gold, opts);
  return sum / static_cast<double>(examples.size());
}

}  // namespace lexforge
