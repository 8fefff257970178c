#include <gtest/gtest.h>

#include <sstream>

#include "lexforge/mixer.hpp"
#include "lexforge/reference_tables.hpp"
#include "test_support.hpp"

using namespace lexforge;
using reference::kBillion;

namespace {

std::vector<Document> synthetic_source(std::size_t n, Lang lang, Source source, gen::Gen& g, const std::string& prefix) {
  std::vector<Document> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Document d;
    d.id = prefix + std::to_string(i);
    d.lang = lang;
    d.source = source;
    d.token_count = static_cast<std::uint64_t>(g.integer(50, 4000));
    docs.push_back(std::move(d));
  }
  return docs;
}

CorpusManifest manifest_with_budget(const std::vector<Document>& docs, double fraction) {
  auto m = build_manifest(docs);
  for (auto& e : m.entries) e.sampled_tokens = static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(*e.total_tokens)));
  return m;
}

std::string bytes_of(const SamplingResult& r) {
  std::ostringstream out;
  write_documents(out, r.docs);
  return out.str();
}

CorpusManifest counts(std::uint64_t general, std::uint64_t domain) {
  CorpusManifest m;
  ManifestEntry g;
  g.category = "zh_general";
  g.n_documents = general;
  ManifestEntry d = g;
  d.category = "zh_polilegal";
  d.domain = true;
  d.n_documents = domain;
  m.entries = {g, d};
  return m;
}

}  // namespace

TEST(PlanSampling, TableFractions) {
  const auto plan = plan_sampling(reference::cpt_corpus_manifest());
  const auto* judgments = plan.find("zh/judicial_judgments");
  ASSERT_NE(judgments, nullptr);
  EXPECT_NEAR(judgments->sampling_fraction, 50.0 / 155.0, 1e-15);
  EXPECT_NEAR(judgments->sampling_fraction, 0.3226, 5e-5);
  EXPECT_DOUBLE_EQ(plan.find("zh/articles_interpretations")->sampling_fraction, 1.0);
  std::uint64_t sum = 0;
  for (const auto& s : plan.sources) sum += s.budget_tokens;
  EXPECT_EQ(sum, 140 * kBillion);
}

TEST(PlanSampling, BudgetAboveAvailabilityThrows) {
  try {
    plan_sampling(reference::cpt_corpus_manifest(), {{"zh/articles_interpretations", 3 * kBillion}});
    FAIL();
  } catch (const BudgetExceedsAvailability& e) {
    EXPECT_EQ(e.source(), "zh/articles_interpretations");
  }
  EXPECT_THROW(plan_sampling(reference::cpt_corpus_manifest(), {{"fr/poetry", 1}}), UnknownSource);
  EXPECT_THROW(plan_sampling(reference::cpt_corpus_manifest(), {{"zh/legal_books_papers", 0}}), InvalidArgument);
}

TEST(PlanSampling, IdempotentAndSerializable) {
  const auto m = reference::cpt_corpus_manifest();
  const auto a = plan_sampling(m, {}, 4);
  Budgets budgets;
  for (const auto& s : a.sources) budgets[s.key] = s.budget_tokens;
  const auto b = plan_sampling(m, budgets, 4);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(to_json(sampling_plan_from_json(json::parse(to_json(a).dump()))).dump(), to_json(a).dump());
}

TEST(CheckRatios, TablePassesBothTargets) {
  const auto r = check_ratios(plan_sampling(reference::cpt_corpus_manifest()), RatioTargets{});
  EXPECT_NEAR(r.zh_share, 100.0 / 140.0, 1e-12);
  EXPECT_NEAR(r.domain_share, 85.0 / 140.0, 1e-12);
  EXPECT_TRUE(r.zh_en_pass);
  EXPECT_TRUE(r.domain_general_pass);
}

TEST(CheckRatios, AllEnglishFails) {
  auto m = reference::cpt_corpus_manifest();
  std::erase_if(m.entries, [](const ManifestEntry& e) { return e.lang == Lang::kZh; });
  const auto r = check_ratios(plan_sampling(m), RatioTargets{});
  EXPECT_DOUBLE_EQ(r.zh_share, 0.0);
  EXPECT_FALSE(r.zh_en_pass);
  EXPECT_FALSE(r.pass());
}

TEST(CheckRatios, TargetsValidated) {
  RatioTargets t;
  t.zh_en = {0.7, 0.4};
  EXPECT_THROW(check_ratios(SamplingPlan{}, t), InvalidArgument);
  t = RatioTargets{};
  t.tolerance = -0.1;
  EXPECT_THROW(check_ratios(SamplingPlan{}, t), InvalidArgument);
}

TEST(ExecuteSampling, FullFractionIsIdentity) {
  gen::Gen g(1);
  auto docs = synthetic_source(300, Lang::kZh, Source::kJudicialJudgments, g, "j");
  const auto more = synthetic_source(200, Lang::kEn, Source::kGeneralIndustry, g, "e");
  docs.insert(docs.begin() + 100, more.begin(), more.end());
  const auto plan = plan_sampling(manifest_with_budget(docs, 1.0));
  EXPECT_EQ(execute_sampling(docs, plan).docs, docs);
}

TEST(ExecuteSampling, TinyFractionIsDeterministicSubset) {
  gen::Gen g(2);
  const auto docs = synthetic_source(20, Lang::kZh, Source::kLegalBooksPapers, g, "b");
  auto m = build_manifest(docs);
  m.entries[0].sampled_tokens = 1;
  const auto plan = plan_sampling(m, {}, 99);
  const auto a = execute_sampling(docs, plan), b = execute_sampling(docs, plan);
  EXPECT_EQ(bytes_of(a), bytes_of(b));
  EXPECT_LE(a.docs.size(), 1u);
}

TEST(ExecuteSampling, SameSeedSameBytesAndOrderKept) {
  gen::Gen g(3);
  const auto docs = synthetic_source(2000, Lang::kZh, Source::kJudicialJudgments, g, "j");
  const auto plan = plan_sampling(manifest_with_budget(docs, 0.3), {}, 7);
  const auto a = execute_sampling(docs, plan);
  EXPECT_EQ(bytes_of(a), bytes_of(execute_sampling(docs, plan)));
  EXPECT_TRUE(oracle::is_subsequence([&] {
    oracle::Tokens ids;
    for (const auto& d : a.docs) ids.push_back(d.id);
    return ids;
  }(), [&] {
    oracle::Tokens ids;
    for (const auto& d : docs) ids.push_back(d.id);
    return ids;
  }()));
  auto other_seed = plan;
  other_seed.seed = 8;
  EXPECT_NE(bytes_of(a), bytes_of(execute_sampling(docs, other_seed)));
}

TEST(ExecuteSampling, UnknownSourceThrows) {
  gen::Gen g(4);
  const auto docs = synthetic_source(10, Lang::kZh, Source::kJudicialJudgments, g, "j");
  const auto plan = plan_sampling(manifest_with_budget(docs, 0.5));
  auto stray = docs;
  stray.push_back(make_document("x", "english", Lang::kEn, Source::kLegalPoliticalNews));
  EXPECT_THROW(execute_sampling(stray, plan), UnknownSource);
}

TEST(ExecuteSampling, ConvergesToFractionAtScale) {
  gen::Gen g(5);
  std::vector<Document> docs;
  const std::vector<std::pair<Lang, Source>> sources = {{Lang::kZh, Source::kJudicialJudgments},
                                                        {Lang::kZh, Source::kGeneralIndustry},
                                                        {Lang::kEn, Source::kLegalPoliticalNews}};
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const auto part = synthetic_source(100000 / sources.size() + 1, sources[k].first, sources[k].second, g,
                                       "s" + std::to_string(k) + "_");
    docs.insert(docs.end(), part.begin(), part.end());
  }
  for (double fraction : {0.05, 0.3226, 0.75}) {
    const auto plan = plan_sampling(manifest_with_budget(docs, fraction), {}, 11);
    const auto r = execute_sampling(docs, plan);
    for (const auto& st : r.stats) {
      const double achieved = static_cast<double>(st.sampled_tokens) / static_cast<double>(st.stream_tokens);
      EXPECT_NEAR(achieved / plan.find(st.key)->sampling_fraction, 1.0, 0.01) << st.key << " @" << fraction;
    }
  }
}

TEST(PostTrainingMix, ReferenceManifest) {
  const auto c = check_post_training_mix(reference::post_training_manifest());
  EXPECT_NEAR(c.general_share, 1216146.0 / 1834198.0, 1e-12);
  EXPECT_NEAR(c.general_share, 0.663, 5e-4);
  EXPECT_NEAR(c.domain_share, 0.337, 5e-4);
  EXPECT_TRUE(c.pass);
}

TEST(PostTrainingMix, SyntheticSplits) {
  EXPECT_TRUE(check_post_training_mix(counts(70, 30)).pass);
  EXPECT_FALSE(check_post_training_mix(counts(50, 50)).pass);
  EXPECT_FALSE(check_post_training_mix(counts(0, 0)).pass);
}
