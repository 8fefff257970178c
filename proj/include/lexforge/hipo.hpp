#pragma once

// Hard-sample-aware iterative preference optimization: mining of unresolved
// queries, preference-pair construction from golden answers and weak
// generations, and exact evaluation of the DPO and DPO+NLL objectives from
// sequence log-probabilities supplied by the caller.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lexforge/corpus.hpp"
#include "lexforge/inference.hpp"
#include "lexforge/metrics.hpp"

namespace lexforge {

struct Generation {
  std::string text;
  double score = 0.0;
};

struct EvalOutcome {
  std::string query_id;
  MetricKind metric_kind = MetricKind::kAccuracy;
  double score = 0.0;
  std::vector<Generation> generations;
};

// Queries scoring strictly below tau.
inline std::set<std::string> mine_hard_samples(std::span<const EvalOutcome> outcomes, double tau) {
  std::set<std::string> hard;
  for (const auto& o : outcomes) {
    if (o.score < tau) hard.insert(o.query_id);
  }
  return hard;
}

class NoGenerations : public InvalidArgument {
 public:
  explicit NoGenerations(const std::string& id) : InvalidArgument("outcome has no generations: " + id) {}
};

// chosen = golden answer; rejected = the lowest-scoring generation whose text
// differs from the golden answer (first occurrence wins ties). Empty when
// every generation reproduces the golden answer.
inline std::optional<PreferencePair> build_preference_pair(const InstructionSample& sample, const EvalOutcome& outcome) {
  if (outcome.generations.empty()) throw NoGenerations(outcome.query_id);
  const auto golden = trim(sample.golden_answer);
  const Generation* worst = nullptr;
  for (const auto& g : outcome.generations) {
    if (trim(g.text) == golden || trim(g.text).empty()) continue;
    if (worst == nullptr || g.score < worst->score) worst = &g;
  }
  if (worst == nullptr) return std::nullopt;
  return make_preference_pair(sample.query, sample.golden_answer, worst->text);
}

// ---------------------------------------------------------------------------
// Objectives

struct LogProbQuad {
  double policy_logp_chosen = 0.0;
  double policy_logp_rejected = 0.0;
  double ref_logp_chosen = 0.0;
  double ref_logp_rejected = 0.0;
  std::uint64_t chosen_token_count = 1;
};

class NonFinite : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline void validate(const LogProbQuad& q) {
  for (double v : {q.policy_logp_chosen, q.policy_logp_rejected, q.ref_logp_chosen, q.ref_logp_rejected}) {
    if (!std::isfinite(v)) throw NonFinite("log-probabilities must be finite");
    if (v > 0.0) throw InvalidArgument("sequence log-probabilities must be <= 0");
  }
  if (q.chosen_token_count == 0) throw InvalidArgument("chosen_token_count must be >= 1");
}

// h = (log pi(y_w) - log ref(y_w)) - (log pi(y_l) - log ref(y_l)).
inline double preference_margin(const LogProbQuad& q) {
  return (q.policy_logp_chosen - q.ref_logp_chosen) - (q.policy_logp_rejected - q.ref_logp_rejected);
}

// log(1 + e^x) without overflow or loss of precision for large |x|.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log sigmoid(beta h) = softplus(-beta h).
inline double dpo_loss(const LogProbQuad& q, double beta) {
  validate(q);
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive and finite");
  return softplus(-beta * preference_margin(q));
}

struct DpoGradient {
  double policy_logp_chosen;
  double policy_logp_rejected;
  double ref_logp_chosen;
  double ref_logp_rejected;
};

// d loss / d policy_logp_chosen = -beta sigmoid(-beta h); the other partials
// follow from the sign each term carries in h.
inline DpoGradient dpo_loss_gradient(const LogProbQuad& q, double beta) {
  validate(q);
  const double g = -beta * sigmoid(-beta * preference_margin(q));
  return {g, -g, -g, g};
}

enum class NllNormalization { kMeanPerToken, kSum };

struct HipoConfig {
  double beta = 0.1;
  double nll_lambda = 0.1;
  // Hard-sample threshold; 1.0 suits exact-match metrics, 0.8 continuous ones.
  double hard_threshold = 0.8;
  NllNormalization nll = NllNormalization::kMeanPerToken;
};

inline void validate(const HipoConfig& c) {
  if (!(c.beta > 0.0)) throw InvalidArgument("beta must be > 0");
  if (!(c.nll_lambda >= 0.0)) throw InvalidArgument("nll_lambda must be >= 0");
  if (!(c.hard_threshold >= 0.0 && c.hard_threshold <= 1.0)) throw InvalidArgument("hard_threshold must be in [0,1]");
}

inline double default_hard_threshold(MetricKind kind) {
  return kind == MetricKind::kAccuracy ? 1.0 : 0.8;
}

inline double chosen_nll(const LogProbQuad& q, NllNormalization norm) {
  return norm == NllNormalization::kSum ? -q.policy_logp_chosen
                                        : -q.policy_logp_chosen / static_cast<double>(q.chosen_token_count);
}

inline double hipo_loss(const LogProbQuad& q, const HipoConfig& cfg) {
  validate(cfg);
  const double dpo = dpo_loss(q, cfg.beta);
  if (cfg.nll_lambda == 0.0) return dpo;
  return cfg.nll_lambda * chosen_nll(q, cfg.nll) + dpo;
}

// ---------------------------------------------------------------------------
// Iteration state

struct HipoState {
  std::uint64_t iteration = 0;
  std::set<std::string> active;
  std::set<std::string> resolved;
  // Policy that serves as reference in the next round: the one produced by the
  // previous iteration.
  std::string reference_policy = "initial";
};

inline HipoState initial_state(std::span<const std::string> query_ids) {
  HipoState s;
  s.active.insert(query_ids.begin(), query_ids.end());
  return s;
}

class MissingOutcome : public InvalidArgument {
 public:
  explicit MissingOutcome(const std::string& id) : InvalidArgument("no outcome for active query " + id), id_(id) {}
  const std::string& query_id() const noexcept { return id_; }

 private:
  std::string id_;
};

inline HipoState advance_iteration(const HipoState& state, std::span<const EvalOutcome> outcomes, double tau) {
  std::map<std::string, double> score_of;
  for (const auto& o : outcomes) score_of[o.query_id] = o.score;
  HipoState next = state;
  for (const auto& id : state.active) {
    const auto it = score_of.find(id);
    if (it == score_of.end()) throw MissingOutcome(id);
    if (it->second >= tau) {
      next.active.erase(id);
      next.resolved.insert(id);
    }
  }
  next.iteration = state.iteration + 1;
  next.reference_policy = "iteration-" + std::to_string(state.iteration);
  return next;
}

// ---------------------------------------------------------------------------
// Driver

enum class OutcomeAggregate { kMean, kMin };

struct HipoRunOptions {
  HipoConfig hipo;
  MetricKind metric = MetricKind::kAccuracy;
  MetricOptions metric_options;
  std::size_t generations_per_query = 4;
  double temperature = 0.7;
  int max_tokens = 512;
  OutcomeAggregate aggregate = OutcomeAggregate::kMean;
};

struct HipoRound {
  std::vector<EvalOutcome> outcomes;
  std::set<std::string> hard;
  std::vector<PreferencePair> pairs;
  HipoState next_state;
  std::size_t failed_generations = 0;
};

// Generates for every active query, scores generations against the golden
// answer, mines hard samples and builds their preference pairs, then advances
// the state. Generation calls share the client's in-flight bound; failed calls
// are dropped and counted, and a query whose calls all fail scores 0.
inline HipoRound run_hipo_round(const HipoState& state, std::span<const InstructionSample> samples,
                                const InferenceClient& client, const HipoRunOptions& opts) {
  validate(opts.hipo);
  if (opts.generations_per_query == 0) throw InvalidArgument("generations_per_query must be >= 1");
  std::map<std::string, const InstructionSample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;

  std::vector<const InstructionSample*> active;
  for (const auto& id : state.active) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw MissingOutcome(id);
    active.push_back(it->second);
  }

  std::vector<ChatRequest> reqs;
  for (const auto* s : active) {
    for (std::size_t k = 0; k < opts.generations_per_query; ++k) {
      ChatRequest req = user_request(s->query);
      req.model = client.config().model;
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      req.seed = state.iteration * opts.generations_per_query + k;
      reqs.push_back(std::move(req));
    }
  }
  const auto results = client.batch_complete(reqs);

  HipoRound round;
  for (std::size_t q = 0; q < active.size(); ++q) {
    EvalOutcome o;
    o.query_id = active[q]->id;
    o.metric_kind = opts.metric;
    for (std::size_t k = 0; k < opts.generations_per_query; ++k) {
      const auto& r = results[q * opts.generations_per_query + k];
      if (!r.ok()) {
        ++round.failed_generations;
        continue;
      }
      double s = 0.0;
      try {
        s = score(opts.metric, json(r.response->content), json(active[q]->golden_answer), opts.metric_options);
      } catch (const InvalidArgument&) {
        s = 0.0;
      }
      o.generations.push_back({r.response->content, s});
    }
    if (!o.generations.empty()) {
      double agg = opts.aggregate == OutcomeAggregate::kMin ? std::numeric_limits<double>::infinity() : 0.0;
      for (const auto& g : o.generations) {
        agg = opts.aggregate == OutcomeAggregate::kMin ? std::min(agg, g.score) : agg + g.score;
      }
      o.score = opts.aggregate == OutcomeAggregate::kMin ? agg : agg / static_cast<double>(o.generations.size());
    }
    round.outcomes.push_back(std::move(o));
  }

  round.hard = mine_hard_samples(round.outcomes, opts.hipo.hard_threshold);
  for (const auto& o : round.outcomes) {
    if (!round.hard.count(o.query_id) || o.generations.empty()) continue;
    if (auto pair = build_preference_pair(*by_id.at(o.query_id), o)) round.pairs.push_back(std::move(*pair));
  }
  round.next_state = advance_iteration(state, round.outcomes, opts.hipo.hard_threshold);
  return round;
}

// ---------------------------------------------------------------------------
// JSON

inline ordered_json to_json(const HipoState& s) {
  ordered_json j;
  j["iteration"] = s.iteration;
  j["reference_policy"] = s.reference_policy;
  j["active"] = s.active;
  j["resolved"] = s.resolved;
  return j;
}

inline HipoState hipo_state_from_json(const json& j) {
  HipoState s;
  s.iteration = j.value("iteration", std::uint64_t{0});
  s.reference_policy = j.value("reference_policy", s.reference_policy);
  s.active = j.value("active", std::set<std::string>{});
  s.resolved = j.value("resolved", std::set<std::string>{});
  for (const auto& id : s.active) {
    if (s.resolved.count(id)) throw InvalidArgument("query both active and resolved: " + id);
  }
  return s;
}

inline LogProbQuad log_prob_quad_from_json(const json& j) {
  LogProbQuad q;
  q.policy_logp_chosen = detail::require(j, "policy_logp_chosen").get<double>();
  q.policy_logp_rejected = detail::require(j, "policy_logp_rejected").get<double>();
  q.ref_logp_chosen = detail::require(j, "ref_logp_chosen").get<double>();
  q.ref_logp_rejected = detail::require(j, "ref_logp_rejected").get<double>();
  q.chosen_token_count = j.value("chosen_token_count", std::uint64_t{1});
  validate(q);
  return q;
}

inline ordered_json to_json(const EvalOutcome& o) {
  ordered_json j;
  j["query_id"] = o.query_id;
  j["metric"] = to_string(o.metric_kind);
  j["score"] = o.score;
  j["generations"] = ordered_json::array();
  for (const auto& g : o.generations) j["generations"].push_back({{"text", g.text}, {"score", g.score}});
  return j;
}

inline EvalOutcome eval_outcome_from_json(const json& j) {
  EvalOutcome o;
  o.query_id = detail::require_string(j, "query_id");
  if (auto it = j.find("metric"); it != j.end()) {
    const auto k = parse_metric_kind(it->get<std::string>());
    if (!k) throw InvalidArgument("unknown metric");
    o.metric_kind = *k;
  }
  o.score = detail::require(j, "score").get<double>();
  if (!(o.score >= 0.0 && o.score <= 1.0)) throw InvalidArgument("outcome score must be in [0,1]");
  if (auto it = j.find("generations"); it != j.end()) {
    for (const auto& g : *it) o.generations.push_back({detail::require_string(g, "text"), g.value("score", 0.0)});
  }
  return o;
}

}  // namespace lexforge
