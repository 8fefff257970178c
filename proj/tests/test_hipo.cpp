#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "lexforge/hipo.hpp"
#include "lexforge/mock.hpp"
#include "test_support.hpp"

using namespace lexforge;

namespace {

EvalOutcome outcome(std::string id, double score, std::vector<Generation> gens = {}) {
  return {std::move(id), MetricKind::kAccuracy, score, std::move(gens)};
}

LogProbQuad random_quad(gen::Gen& g) {
  return {g.real(-60, -1), g.real(-60, -1), g.real(-60, -1), g.real(-60, -1),
          static_cast<std::uint64_t>(g.integer(1, 200))};
}

std::vector<InstructionSample> mc_samples(std::size_t n) {
  std::vector<InstructionSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"q" + std::to_string(i), "Question " + std::to_string(i) + ": which option applies?",
                   std::string(1, "ABCD"[i % 4]), std::nullopt, std::nullopt});
  }
  return out;
}

}  // namespace

TEST(Mining, Examples) {
  const std::vector<EvalOutcome> o = {outcome("a", 1.0), outcome("b", 0.4), outcome("c", 0.8)};
  EXPECT_EQ(mine_hard_samples(o, 0.8), (std::set<std::string>{"b"}));
  const std::vector<EvalOutcome> perfect = {outcome("a", 1.0), outcome("b", 1.0)};
  EXPECT_TRUE(mine_hard_samples(perfect, 0.8).empty());
  const std::vector<EvalOutcome> exact = {outcome("a", 1.0), outcome("b", 0.99), outcome("c", 0.0)};
  EXPECT_EQ(mine_hard_samples(exact, 1.0), (std::set<std::string>{"b", "c"}));
  EXPECT_DOUBLE_EQ(default_hard_threshold(MetricKind::kAccuracy), 1.0);
  EXPECT_DOUBLE_EQ(default_hard_threshold(MetricKind::kRougeL), 0.8);
}

TEST(Pairs, Examples) {
  const InstructionSample s{"q", "Which?", "A", std::nullopt, std::nullopt};
  const auto p = build_preference_pair(s, outcome("q", 0.5, {{"A", 1.0}, {"B", 0.0}}));
  ASSERT_TRUE(p);
  EXPECT_EQ(p->chosen, "A");
  EXPECT_EQ(p->rejected, "B");
  EXPECT_EQ(p->query, "Which?");
  EXPECT_FALSE(build_preference_pair(s, outcome("q", 1.0, {{"A", 1.0}, {" A ", 1.0}})));
  EXPECT_EQ(build_preference_pair(s, outcome("q", 0.0, {{"B", 0.3}, {"C", 0.1}}))->rejected, "C");
  EXPECT_EQ(build_preference_pair(s, outcome("q", 0.0, {{"B", 0.1}, {"C", 0.1}}))->rejected, "B");  // first wins ties
  EXPECT_THROW(build_preference_pair(s, outcome("q", 0.0)), NoGenerations);
}

TEST(Dpo, Examples) {
  EXPECT_NEAR(dpo_loss({-5, -7, -5, -7, 1}, 0.1), std::log(2.0), 1e-15);
  const LogProbQuad q{-2, -6, -4, -4, 1};
  EXPECT_DOUBLE_EQ(preference_margin(q), 4.0);
  EXPECT_NEAR(dpo_loss(q, 0.25), -std::log(oracle::sigmoid_naive(1.0)), 1e-15);
  EXPECT_NEAR(dpo_loss(q, 0.25), 0.313262, 1e-6);
  const LogProbQuad swapped{-6, -2, -4, -4, 1};
  EXPECT_NEAR(dpo_loss(swapped, 0.25), 1.313262, 1e-6);
}

TEST(Dpo, RejectsBadInput) {
  EXPECT_THROW(dpo_loss({NAN, -1, -1, -1, 1}, 0.1), NonFinite);
  EXPECT_THROW(dpo_loss({-INFINITY, -1, -1, -1, 1}, 0.1), NonFinite);
  EXPECT_THROW(dpo_loss({0.5, -1, -1, -1, 1}, 0.1), InvalidArgument);
  EXPECT_THROW(dpo_loss({-1, -1, -1, -1, 0}, 0.1), InvalidArgument);
  EXPECT_THROW(dpo_loss({-1, -1, -1, -1, 1}, 0.0), InvalidArgument);
}

TEST(Dpo, StableAtExtremeMargins) {
  // beta h = +-1000.
  const LogProbQuad big{-1, -2001, -1001, -1, 1};
  EXPECT_DOUBLE_EQ(preference_margin(big), 3000.0);
  const double tiny = dpo_loss(big, 1.0 / 3.0);
  // exp(-1000) is below double range, so the loss rounds to exactly zero.
  EXPECT_TRUE(std::isfinite(tiny));
  EXPECT_GE(tiny, 0.0);
  EXPECT_LT(tiny, 1e-300);
  const LogProbQuad neg{-2001, -1, -1, -1001, 1};
  EXPECT_NEAR(dpo_loss(neg, 1.0 / 3.0), 1000.0, 1e-9);
}

TEST(Dpo, PropertiesAtRandomQuads) {
  gen::Gen g(1);
  for (int i = 0; i < 2000; ++i) {
    const auto q = random_quad(g);
    const double beta = g.real(0.01, 2.0);
    const double h = preference_margin(q);
    const double loss = dpo_loss(q, beta);
    EXPECT_GT(loss, 0.0);
    const LogProbQuad mirrored{q.policy_logp_rejected, q.policy_logp_chosen, q.ref_logp_rejected, q.ref_logp_chosen,
                               q.chosen_token_count};
    EXPECT_NEAR(dpo_loss(mirrored, beta) - loss, beta * h, 1e-9 * std::max(1.0, std::fabs(beta * h)));
    if (std::fabs(beta * h) < 30) {
      EXPECT_NEAR(loss, -std::log(oracle::sigmoid_naive(beta * h)), 1e-12);
    }
    // Strictly decreasing in h: raise the chosen policy log-prob.
    LogProbQuad better = q;
    better.policy_logp_chosen = std::min(0.0, q.policy_logp_chosen + 0.5);
    if (better.policy_logp_chosen > q.policy_logp_chosen && std::fabs(beta * h) < 30) {
      EXPECT_LT(dpo_loss(better, beta), loss);
    }
  }
}

TEST(Dpo, GradientMatchesFiniteDifferences) {
  gen::Gen g(2);
  const double eps = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const auto q = random_quad(g);
    const double beta = g.real(0.05, 1.0);
    const auto grad = dpo_loss_gradient(q, beta);
    const double analytic[4] = {grad.policy_logp_chosen, grad.policy_logp_rejected, grad.ref_logp_chosen,
                                grad.ref_logp_rejected};
    for (int k = 0; k < 4; ++k) {
      auto plus = q, minus = q;
      double* fp[4] = {&plus.policy_logp_chosen, &plus.policy_logp_rejected, &plus.ref_logp_chosen, &plus.ref_logp_rejected};
      double* fm[4] = {&minus.policy_logp_chosen, &minus.policy_logp_rejected, &minus.ref_logp_chosen,
                       &minus.ref_logp_rejected};
      *fp[k] += eps;
      *fm[k] -= eps;
      const double numeric = (dpo_loss(plus, beta) - dpo_loss(minus, beta)) / (2 * eps);
      EXPECT_NEAR(numeric, analytic[k], 1e-5 * std::fabs(analytic[k]) + 1e-10) << "quad " << i << " term " << k;
    }
    EXPECT_NEAR(grad.policy_logp_chosen, -beta * oracle::sigmoid_naive(-beta * preference_margin(q)), 1e-15);
  }
}

TEST(Hipo, Examples) {
  const LogProbQuad q{-10, -3, -10, -3, 5};
  EXPECT_NEAR(hipo_loss(q, {0.7, 0.1, 0.8}), 0.1 * 2.0 + std::log(2.0), 1e-15);
  EXPECT_NEAR(hipo_loss(q, {0.7, 0.1, 0.8}), 0.893147, 1e-6);
  const LogProbQuad zero_nll{0, -3, -1, -3, 4};
  EXPECT_EQ(hipo_loss(zero_nll, {0.3, 1.0, 0.8}), dpo_loss(zero_nll, 0.3));
  HipoConfig sum_cfg{0.1, 0.1, 0.8, NllNormalization::kSum};
  EXPECT_NEAR(hipo_loss(q, sum_cfg), 0.1 * 10.0 + std::log(2.0), 1e-15);
  EXPECT_THROW(hipo_loss(q, {0.0, 0.1, 0.8}), InvalidArgument);
  EXPECT_THROW(hipo_loss(q, {0.1, -0.1, 0.8}), InvalidArgument);
}

TEST(Hipo, ZeroLambdaIsBitwiseDpo) {
  gen::Gen g(3);
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_quad(g);
    const double beta = g.real(0.01, 2.0);
    const double a = hipo_loss(q, {beta, 0.0, 0.8}), b = dpo_loss(q, beta);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
  }
}

TEST(Iteration, Examples) {
  const std::vector<std::string> ids = {"a", "b"};
  const auto s0 = initial_state(ids);
  const std::vector<EvalOutcome> o = {outcome("a", 1.0), outcome("b", 0.2)};
  const auto s1 = advance_iteration(s0, o, 0.8);
  EXPECT_EQ(s1.iteration, 1u);
  EXPECT_EQ(s1.active, (std::set<std::string>{"b"}));
  EXPECT_EQ(s1.resolved, (std::set<std::string>{"a"}));
  EXPECT_EQ(s1.reference_policy, "iteration-0");

  const std::vector<EvalOutcome> pass = {outcome("a", 1.0), outcome("b", 1.0)};
  EXPECT_TRUE(advance_iteration(s0, pass, 0.8).active.empty());

  const std::vector<EvalOutcome> fail = {outcome("a", 0.1), outcome("b", 0.1)};
  const auto stuck = advance_iteration(s0, fail, 0.8);
  EXPECT_EQ(stuck.active, s0.active);
  EXPECT_EQ(stuck.iteration, 1u);

  const std::vector<EvalOutcome> partial = {outcome("a", 1.0)};
  try {
    advance_iteration(s0, partial, 0.8);
    FAIL();
  } catch (const MissingOutcome& e) {
    EXPECT_EQ(e.query_id(), "b");
  }
}

TEST(Iteration, ResolvedNeverReturns) {
  gen::Gen g(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("q" + std::to_string(i));
    auto s = initial_state(ids);
    const std::set<std::string> universe(ids.begin(), ids.end());
    for (int it = 0; it < 8; ++it) {
      std::vector<EvalOutcome> o;
      for (const auto& id : ids) o.push_back(outcome(id, g.real(0, 1)));  // resolved ones may score low again
      const auto next = advance_iteration(s, o, 0.8);
      EXPECT_LE(next.active.size(), s.active.size());
      for (const auto& r : s.resolved) EXPECT_TRUE(next.resolved.count(r));
      std::set<std::string> all = next.active;
      all.insert(next.resolved.begin(), next.resolved.end());
      EXPECT_EQ(all, universe);
      for (const auto& a : next.active) EXPECT_FALSE(next.resolved.count(a));
      s = next;
    }
  }
}

TEST(Iteration, StateJsonRoundTrip) {
  HipoState s;
  s.iteration = 3;
  s.active = {"b"};
  s.resolved = {"a"};
  s.reference_policy = "iteration-2";
  EXPECT_EQ(to_json(hipo_state_from_json(json::parse(to_json(s).dump()))).dump(), to_json(s).dump());
  EXPECT_THROW(hipo_state_from_json(json{{"active", {"a"}}, {"resolved", {"a"}}}), InvalidArgument);
}

TEST(Driver, RoundsWithHashMock) {
  const auto samples = mc_samples(40);
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  EndpointConfig cfg;
  const InferenceClient client(make_mock_transport(), cfg, [](std::chrono::milliseconds) {});
  HipoRunOptions opts;
  opts.hipo.hard_threshold = 1.0;
  opts.generations_per_query = 1;
  auto state = initial_state(ids);
  std::size_t prev = state.active.size();
  for (int it = 0; it < 5; ++it) {
    const auto round = run_hipo_round(state, samples, client, opts);
    EXPECT_EQ(round.outcomes.size(), state.active.size());
    EXPECT_EQ(round.failed_generations, 0u);
    for (const auto& p : round.pairs) {
      EXPECT_NE(p.chosen, p.rejected);
      const auto it_s = std::find_if(samples.begin(), samples.end(), [&](const auto& s) { return s.query == p.query; });
      EXPECT_EQ(p.chosen, it_s->golden_answer);
    }
    EXPECT_EQ(round.pairs.size(), round.hard.size());
    EXPECT_LE(round.next_state.active.size(), prev);
    prev = round.next_state.active.size();
    state = round.next_state;
  }
  EXPECT_LT(state.active.size(), ids.size());
}

TEST(Driver, FailedGenerationsScoreZero) {
  const auto samples = mc_samples(3);
  std::vector<std::string> ids = {"q0", "q1", "q2"};
  auto t = std::make_shared<MockTransport>([](const ChatRequest& req, std::size_t) -> ChatResponse {
    if (req.messages.back().content.starts_with("Question 1:")) throw EndpointError(400, "no");
    return {"A", {}};
  });
  EndpointConfig cfg;
  const InferenceClient client(t, cfg, [](std::chrono::milliseconds) {});
  HipoRunOptions opts;
  opts.hipo.hard_threshold = 1.0;
  opts.generations_per_query = 2;
  const auto round = run_hipo_round(initial_state(ids), samples, client, opts);
  EXPECT_EQ(round.failed_generations, 2u);
  EXPECT_EQ(round.outcomes[1].score, 0.0);
  EXPECT_EQ(round.outcomes[0].score, 1.0);  // golden A
  EXPECT_EQ(round.next_state.resolved, (std::set<std::string>{"q0"}));
  ASSERT_EQ(round.pairs.size(), 1u);  // q2 has a pair; q1 has no generations
  EXPECT_EQ(round.pairs[0].chosen, "C");
  EXPECT_EQ(round.pairs[0].rejected, "A");
}
