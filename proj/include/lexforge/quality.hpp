#pragma once

// LLM-judged quality scoring on a cumulative 0-5 rubric, keep-threshold
// filtering, and agreement statistics between a scorer and reference labels.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexforge/corpus.hpp"
#include "lexforge/inference.hpp"
#include "lexforge/random.hpp"

namespace lexforge {

class EmptyText : public InvalidArgument {
 public:
  EmptyText() : InvalidArgument("text must be non-empty") {}
};

class ScoreParseError : public Error {
 public:
  using Error::Error;
};

class ScoreOutOfRange : public ScoreParseError {
 public:
  explicit ScoreOutOfRange(long long value)
      : ScoreParseError("score out of range [0,5]: " + std::to_string(value)), value_(value) {}
  long long value() const noexcept { return value_; }

 private:
  long long value_;
};

class ScoreUnparseable : public ScoreParseError {
 public:
  ScoreUnparseable() : ScoreParseError("no integer score found in response") {}
};

class UnscoredDocument : public Error {
 public:
  explicit UnscoredDocument(const std::string& id) : Error("document has no score: " + id) {}
};

inline constexpr std::string_view kScoringRubricHead =
    "The following is a text fragment. Please evaluate whether it has high natural language value and whether "
    "it is suitable for training LLMs, according to the cumulative 5-point scoring criteria below.\n"
    "\n"
    "Complete the sections \"Scoring Rationale\" and \"Score\".\n"
    "\n"
    "Scoring Criteria\n"
    "\n"
    "- If the content contains only meaningless or private information (e.g., random code, HTTP links, copyright "
    "notices, personal identifiable information, or binary encodings of images), assign 0 points.\n"
    "- If the fragment provides some basic information, even if it includes advertisements or promotional "
    "content, add 1 point.\n"
    "- If the writing style is fluent, semantically coherent, free of repetition and grammatical errors, add 1 "
    "point.\n"
    "- If the fragment presents relatively complete semantic content, is written fluently, and focuses on a "
    "single coherent topic rather than a collage of unrelated segments, add 1 point.\n"
    "- If the fragment has clear educational or literary value, or provides meaningful viewpoints that "
    "facilitate learning, with clear and coherent writing (e.g., textbook- or tutorial-like content with minimal "
    "redundancy), add 1 point.\n"
    "- If the fragment demonstrates outstanding educational value or extremely high information density, "
    "offering deep, comprehensive insights with explicit reasoning and no irrelevant content, add 1 point.\n"
    "\n"
    "Text Fragment\n"
    "\n";

inline constexpr std::string_view kScoringRubricTail =
    "\n"
    "\n"
    "Scoring Rationale\n"
    "\n"
    "Briefly explain the rationale for the score (no more than 50 words).\n"
    "\n"
    "Score\n"
    "\n"
    "Provide the score in a fixed format as a single integer from 0 to 5. Do not output any additional content.";

inline std::string build_scoring_prompt(std::string_view text) {
  if (trim(text).empty()) throw EmptyText();
  std::string prompt;
  prompt.reserve(kScoringRubricHead.size() + text.size() + kScoringRubricTail.size());
  prompt.append(kScoringRubricHead).append(text).append(kScoringRubricTail);
  return prompt;
}

// Recovers the text fragment from a prompt built by build_scoring_prompt.
inline std::optional<std::string_view> scoring_prompt_text(std::string_view prompt) {
  if (!prompt.starts_with(kScoringRubricHead) || !prompt.ends_with(kScoringRubricTail)) return std::nullopt;
  prompt.remove_prefix(kScoringRubricHead.size());
  prompt.remove_suffix(kScoringRubricTail.size());
  return prompt;
}

// Returns the last standalone integer in the response. Digits glued to
// letters, decimals ("3.5") and the denominator of "4/5" are not standalone.
inline int parse_score_response(std::string_view response) {
  const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  const auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::optional<long long> last;
  std::size_t i = 0;
  while (i < response.size()) {
    if (!is_digit(response[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < response.size() && is_digit(response[j])) ++j;
    bool standalone = true;
    bool negative = false;
    if (i > 0) {
      const char before = response[i - 1];
      if (is_word(before)) standalone = false;
      if (before == '.' && i > 1 && is_digit(response[i - 2])) standalone = false;
      if (before == '/' && i > 1 && is_digit(response[i - 2])) standalone = false;
      if (before == '-' && (i == 1 || !is_word(response[i - 2]))) negative = true;
    }
    if (j < response.size()) {
      const char after = response[j];
      if (is_word(after)) standalone = false;
      if (after == '.' && j + 1 < response.size() && is_digit(response[j + 1])) standalone = false;
    }
    if (standalone) {
      long long value = 0;
      for (std::size_t k = i; k < j; ++k) {
        value = value > (std::numeric_limits<long long>::max() - 9) / 10 ? std::numeric_limits<long long>::max()
                                                                           : value * 10 + (response[k] - '0');
      }
      last = negative ? -value : value;
    }
    i = j;
  }
  if (!last) throw ScoreUnparseable();
  if (*last < 0 || *last > 5) throw ScoreOutOfRange(*last);
  return static_cast<int>(*last);
}

struct ScoreRecord {
  std::string doc_id;
  int score = 0;
  std::optional<std::string> rationale;
};

struct ScoringOptions {
  std::optional<std::size_t> sample_n;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_tokens = 128;
  // Extra requests when a response does not parse.
  int parse_retries = 1;
};

// Seeded choice of n indices out of total, returned in ascending order.
inline std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n >= total) return idx;
  Rng rng(derive_seed(seed, "score-sample"));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(total - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Text before the final score line, trimmed and capped at 50 words.
inline std::optional<std::string> extract_rationale(std::string_view response) {
  std::string_view body = trim(response);
  const auto last_nl = body.find_last_of('\n');
  if (last_nl == std::string_view::npos) return std::nullopt;
  body = trim(body.substr(0, last_nl));
  for (std::string_view header : {"Score", "**Score**", "Score:"}) {
    if (body.ends_with(header)) body = trim(body.substr(0, body.size() - header.size()));
  }
  for (std::string_view header : {"Scoring Rationale", "**Scoring Rationale**", "Scoring Rationale:"}) {
    if (body.starts_with(header)) body = trim(body.substr(header.size()));
  }
  if (body.empty()) return std::nullopt;
  std::string out;
  std::size_t words = 0;
  bool in_word = false;
  for (char c : body) {
    const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_word && ++words > 50) break;
    in_word = !ws;
    out.push_back(c);
  }
  return std::string(trim(out));
}

// Scores every document (or a seeded sample of sample_n of them, emitted in
// input order). Documents whose score cannot be obtained carry score_error.
inline std::vector<Document> score_corpus(std::span<const Document> docs, const InferenceClient& client,
                                          const ScoringOptions& opts = {}) {
  const auto selected = opts.sample_n ? sample_indices(docs.size(), *opts.sample_n, opts.seed)
                                      : sample_indices(docs.size(), docs.size(), opts.seed);
  std::vector<Document> out;
  out.reserve(selected.size());
  std::vector<ChatRequest> reqs;
  std::vector<std::size_t> pending;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    Document doc = docs[selected[k]];
    doc.score.reset();
    doc.rationale.reset();
    doc.score_error.reset();
    if (trim(doc.text).empty()) {
      doc.score_error = "empty text";
    } else {
      ChatRequest req = user_request(build_scoring_prompt(doc.text));
      req.model = client.config().model;
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      reqs.push_back(std::move(req));
      pending.push_back(k);
    }
    out.push_back(std::move(doc));
  }

  for (int round = 0; round <= opts.parse_retries && !pending.empty(); ++round) {
    const auto results = client.batch_complete(reqs);
    std::vector<ChatRequest> retry_reqs;
    std::vector<std::size_t> retry_pending;
    for (std::size_t r = 0; r < results.size(); ++r) {
      Document& doc = out[pending[r]];
      if (!results[r].ok()) {
        doc.score_error = "endpoint: " + results[r].error;
        continue;
      }
      try {
        doc.score = parse_score_response(results[r].response->content);
        doc.rationale = extract_rationale(results[r].response->content);
        doc.score_error.reset();
      } catch (const ScoreParseError& e) {
        doc.score_error = std::string("parse: ") + e.what();
        retry_reqs.push_back(reqs[r]);
        retry_pending.push_back(pending[r]);
      }
    }
    reqs = std::move(retry_reqs);
    pending = std::move(retry_pending);
  }
  return out;
}

inline std::vector<Document> threshold_filter(std::span<const Document> scored, int tau) {
  std::vector<Document> kept;
  for (const auto& doc : scored) {
    if (!doc.score) throw UnscoredDocument(doc.id);
    if (*doc.score >= tau) kept.push_back(doc);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Agreement statistics

struct ScorerAgreement {
  // Empty when either list is constant and the rank correlation is undefined.
  std::optional<double> spearman_rho;
  double mae = 0.0;
  double adjacent_accuracy = 0.0;
  double exact_accuracy = 0.0;
};

// 1-based ranks; tied values share the mean of the ranks they span.
template <typename T>
std::vector<double> average_ranks(std::span<const T> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && !(values[order[i]] < values[order[j + 1]])) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

template <typename T>
std::optional<double> spearman(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
  if (a.empty()) throw InvalidArgument("spearman of empty lists");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

inline ScorerAgreement scorer_agreement(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) throw LengthMismatch(preds.size(), golds.size());
  if (preds.empty()) throw InvalidArgument("scorer_agreement needs at least one pair");
  ScorerAgreement out;
  out.spearman_rho = spearman(preds, golds);
  std::size_t adjacent = 0, exact = 0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int d = std::abs(preds[i] - golds[i]);
    abs_sum += d;
    if (d <= 1) ++adjacent;
    if (d == 0) ++exact;
  }
  const double n = static_cast<double>(preds.size());
  out.mae = abs_sum / n;
  out.adjacent_accuracy = static_cast<double>(adjacent) / n;
  out.exact_accuracy = static_cast<double>(exact) / n;
  return out;
}

inline ordered_json to_json(const ScorerAgreement& a) {
  ordered_json j;
  j["spearman_rho"] = a.spearman_rho ? ordered_json(*a.spearman_rho) : ordered_json(nullptr);
  j["mae"] = a.mae;
  j["adjacent_accuracy"] = a.adjacent_accuracy;
  j["exact_accuracy"] = a.exact_accuracy;
  return j;
}

}  // namespace lexforge
