#pragma once

// Ratio-controlled down-sampling of per-source corpora to token budgets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lexforge/corpus.hpp"
#include "lexforge/random.hpp"

namespace lexforge {

class BudgetExceedsAvailability : public InvalidArgument {
 public:
  explicit BudgetExceedsAvailability(const std::string& source)
      : InvalidArgument("budget exceeds available tokens for " + source), source_(source) {}
  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
};

class UnknownSource : public InvalidArgument {
 public:
  explicit UnknownSource(const std::string& what) : InvalidArgument("unknown source: " + what) {}
};

struct SourcePlan {
  std::string key;  // "<lang>/<corpus_type>"
  Lang lang = Lang::kZh;
  bool domain = false;
  std::uint64_t available_tokens = 0;
  std::uint64_t budget_tokens = 0;
  double sampling_fraction = 0.0;
};

struct SamplingPlan {
  std::vector<SourcePlan> sources;
  std::uint64_t seed = 0;

  const SourcePlan* find(const std::string& key) const {
    for (const auto& s : sources) {
      if (s.key == key) return &s;
    }
    return nullptr;
  }
};

using Budgets = std::map<std::string, std::uint64_t>;

// Budgets default to each entry's sampled_tokens. Every budget must be
// positive and no larger than the entry's total_tokens.
inline SamplingPlan plan_sampling(const CorpusManifest& manifest, const Budgets& budgets = {},
                                  std::uint64_t seed = 0) {
  SamplingPlan plan;
  plan.seed = seed;
  for (const auto& [key, _] : budgets) {
    const bool known = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                   [&](const ManifestEntry& e) { return e.key() == key; });
    if (!known) throw UnknownSource(key);
  }
  for (const auto& e : manifest.entries) {
    SourcePlan s;
    s.key = e.key();
    s.lang = e.lang;
    s.domain = e.domain;
    if (!e.total_tokens) throw InvalidArgument("manifest entry " + s.key + " lacks total_tokens");
    s.available_tokens = *e.total_tokens;
    if (auto it = budgets.find(s.key); it != budgets.end()) {
      s.budget_tokens = it->second;
    } else if (e.sampled_tokens) {
      s.budget_tokens = *e.sampled_tokens;
    } else {
      throw InvalidArgument("no budget for " + s.key);
    }
    if (s.budget_tokens > s.available_tokens) throw BudgetExceedsAvailability(s.key);
    if (s.budget_tokens == 0) throw InvalidArgument("budget must be positive for " + s.key);
    s.sampling_fraction = static_cast<double>(s.budget_tokens) / static_cast<double>(s.available_tokens);
    plan.sources.push_back(std::move(s));
  }
  return plan;
}

struct RatioTargets {
  std::pair<double, double> zh_en{0.7, 0.3};
  std::pair<double, double> domain_general{0.6, 0.4};
  double tolerance = 0.02;
};

inline void validate(const RatioTargets& t) {
  auto pair_ok = [](const std::pair<double, double>& p) {
    return p.first >= 0 && p.second >= 0 && std::fabs(p.first + p.second - 1.0) < 1e-9;
  };
  if (!pair_ok(t.zh_en) || !pair_ok(t.domain_general)) throw InvalidArgument("ratio target pairs must sum to 1");
  if (!(t.tolerance >= 0)) throw InvalidArgument("tolerance must be >= 0");
}

struct RatioCheck {
  double zh_share = 0.0;
  double domain_share = 0.0;
  bool zh_en_pass = false;
  bool domain_general_pass = false;

  bool pass() const { return zh_en_pass && domain_general_pass; }
};

inline RatioCheck check_ratios(const SamplingPlan& plan, const RatioTargets& targets) {
  validate(targets);
  std::uint64_t total = 0, zh = 0, domain = 0;
  for (const auto& s : plan.sources) {
    total += s.budget_tokens;
    if (s.lang == Lang::kZh) zh += s.budget_tokens;
    if (s.domain) domain += s.budget_tokens;
  }
  RatioCheck r;
  if (total == 0) return r;
  r.zh_share = static_cast<double>(zh) / static_cast<double>(total);
  r.domain_share = static_cast<double>(domain) / static_cast<double>(total);
  r.zh_en_pass = std::fabs(r.zh_share - targets.zh_en.first) <= targets.tolerance;
  r.domain_general_pass = std::fabs(r.domain_share - targets.domain_general.first) <= targets.tolerance;
  return r;
}

struct SourceSamplingStats {
  std::string key;
  std::uint64_t stream_tokens = 0;
  std::uint64_t target_tokens = 0;
  std::uint64_t sampled_tokens = 0;
  std::uint64_t sampled_documents = 0;
};

struct SamplingResult {
  std::vector<Document> docs;
  std::vector<SourceSamplingStats> stats;
};

inline std::string document_key(const Document& doc) {
  return std::string(to_string(doc.lang)) + "/" + std::string(to_string(doc.source));
}

// Token-weighted down-sampling. Within each source, documents are visited in
// a seeded pseudo-random order keyed on (seed, source, id) and taken until the
// source's target (fraction x stream tokens) is reached; the document that
// crosses the target is kept only if that lands closer to it. Output keeps
// input order. Documents are never split.
inline SamplingResult execute_sampling(std::span<const Document> docs, const SamplingPlan& plan) {
  std::map<std::string, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto key = document_key(docs[i]);
    if (!plan.find(key)) throw UnknownSource(key + " (document " + docs[i].id + ")");
    by_source[key].push_back(i);
  }

  std::vector<bool> keep(docs.size(), false);
  SamplingResult result;
  for (const auto& s : plan.sources) {
    SourceSamplingStats st;
    st.key = s.key;
    auto it = by_source.find(s.key);
    if (it == by_source.end()) {
      result.stats.push_back(st);
      continue;
    }
    auto& members = it->second;
    for (auto i : members) st.stream_tokens += docs[i].token_count;
    if (s.sampling_fraction >= 1.0) {
      st.target_tokens = st.stream_tokens;
      for (auto i : members) keep[i] = true;
      st.sampled_tokens = st.stream_tokens;
      st.sampled_documents = members.size();
      result.stats.push_back(st);
      continue;
    }
    st.target_tokens = static_cast<std::uint64_t>(std::llround(s.sampling_fraction * static_cast<double>(st.stream_tokens)));
    const std::uint64_t source_seed = derive_seed(plan.seed, s.key);
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    order.reserve(members.size());
    for (auto i : members) order.emplace_back(splitmix64(source_seed ^ fnv1a64(docs[i].id)), i);
    std::sort(order.begin(), order.end());
    for (const auto& [_, i] : order) {
      if (st.sampled_tokens >= st.target_tokens) break;
      const std::uint64_t t = docs[i].token_count;
      if (st.sampled_tokens + t > st.target_tokens) {
        const std::uint64_t over = st.sampled_tokens + t - st.target_tokens;
        const std::uint64_t under = st.target_tokens - st.sampled_tokens;
        if (over < under) {
          keep[i] = true;
          st.sampled_tokens += t;
          ++st.sampled_documents;
        }
        break;
      }
      keep[i] = true;
      st.sampled_tokens += t;
      ++st.sampled_documents;
    }
    result.stats.push_back(st);
  }
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (keep[i]) result.docs.push_back(docs[i]);
  }
  return result;
}

struct MixCheck {
  double general_share = 0.0;
  double domain_share = 0.0;
  bool pass = false;
};

// Compares the general:domain sample split against a target general share.
inline MixCheck check_post_training_mix(const CorpusManifest& manifest, double general_target = 0.7,
                                        double tolerance = 0.05) {
  std::uint64_t total = 0, domain = 0;
  for (const auto& e : manifest.entries) {
    total += e.n_documents;
    if (e.domain) domain += e.n_documents;
  }
  MixCheck c;
  if (total == 0) return c;
  c.domain_share = static_cast<double>(domain) / static_cast<double>(total);
  c.general_share = 1.0 - c.domain_share;
  c.pass = std::fabs(c.general_share - general_target) <= tolerance;
  return c;
}

inline ordered_json to_json(const SamplingPlan& plan) {
  ordered_json j;
  j["seed"] = plan.seed;
  j["sources"] = ordered_json::array();
  for (const auto& s : plan.sources) {
    ordered_json js;
    js["key"] = s.key;
    js["lang"] = to_string(s.lang);
    js["domain"] = s.domain;
    js["available_tokens"] = s.available_tokens;
    js["budget_tokens"] = s.budget_tokens;
    js["sampling_fraction"] = s.sampling_fraction;
    j["sources"].push_back(std::move(js));
  }
  return j;
}

inline SamplingPlan sampling_plan_from_json(const json& j) {
  SamplingPlan plan;
  plan.seed = j.value("seed", std::uint64_t{0});
  for (const auto& js : detail::require(j, "sources")) {
    SourcePlan s;
    s.key = detail::require_string(js, "key");
    const auto lang = parse_lang(detail::require_string(js, "lang"));
    if (!lang) throw InvalidArgument("unknown lang in plan");
    s.lang = *lang;
    s.domain = js.value("domain", false);
    s.available_tokens = detail::require(js, "available_tokens").get<std::uint64_t>();
    s.budget_tokens = detail::require(js, "budget_tokens").get<std::uint64_t>();
    if (s.budget_tokens == 0 || s.budget_tokens > s.available_tokens) throw BudgetExceedsAvailability(s.key);
    s.sampling_fraction = static_cast<double>(s.budget_tokens) / static_cast<double>(s.available_tokens);
    plan.sources.push_back(std::move(s));
  }
  return plan;
}

inline ordered_json to_json(const RatioCheck& r, const RatioTargets& t) {
  ordered_json j;
  j["zh_share"] = r.zh_share;
  j["domain_share"] = r.domain_share;
  j["targets"] = {{"zh", t.zh_en.first}, {"domain", t.domain_general.first}, {"tolerance", t.tolerance}};
  j["zh_en_pass"] = r.zh_en_pass;
  j["domain_general_pass"] = r.domain_general_pass;
  j["pass"] = r.pass();
  return j;
}

}  // namespace lexforge
