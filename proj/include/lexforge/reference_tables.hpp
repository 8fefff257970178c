#pragma once

// Published corpus compositions used as reference fixtures: the CPT corpus
// (documents and tokens per language and source, with sampled budgets) and
// the post-training instruction corpus (sample counts per category and task).
// "M" and "B" figures are stored as exact integers.

#include <cstdint>

#include "lexforge/corpus.hpp"

namespace lexforge::reference {

inline constexpr std::uint64_t kMillion = 1'000'000;
inline constexpr std::uint64_t kBillion = 1'000'000'000;

inline CorpusManifest cpt_corpus_manifest() {
  auto row = [](Lang lang, Source source, std::uint64_t docs, std::uint64_t tokens_b, std::uint64_t sampled_b) {
    ManifestEntry e;
    e.lang = lang;
    e.category = std::string(to_string(lang));
    e.corpus_type = std::string(to_string(source));
    e.domain = is_domain_source(source);
    e.n_documents = docs;
    e.total_tokens = tokens_b * kBillion;
    e.sampled_tokens = sampled_b * kBillion;
    return e;
  };
  CorpusManifest m;
  m.entries = {
      row(Lang::kEn, Source::kGeneralIndustry, 57'900'000, 138, 20),
      row(Lang::kEn, Source::kLegalPoliticalNews, 22'500'000, 39, 20),
      row(Lang::kZh, Source::kGeneralIndustry, 24'300'000, 87, 35),
      row(Lang::kZh, Source::kLegalPoliticalNews, 9'600'000, 22, 11),
      row(Lang::kZh, Source::kJudicialJudgments, 86'400'000, 155, 50),
      row(Lang::kZh, Source::kArticlesInterpretations, 1'550'000, 2, 2),
      row(Lang::kZh, Source::kLegalBooksPapers, 130'000, 2, 2),
  };
  m.totals.n_documents = 202'400'000;
  m.totals.total_tokens = 445 * kBillion;
  m.totals.sampled_tokens = 140 * kBillion;
  // The published document total (202.4M) rounds the exact row sum 202.38M.
  m.significant_figures = 3;
  return m;
}

inline CorpusManifest post_training_manifest() {
  auto row = [](Lang lang, InstructionCategory category, InstructionTask task, std::uint64_t samples) {
    ManifestEntry e;
    e.lang = lang;
    e.category = std::string(to_string(category));
    e.corpus_type = std::string(to_string(task));
    e.domain = category == InstructionCategory::kZhPolilegal;
    e.n_documents = samples;
    return e;
  };
  using C = InstructionCategory;
  using T = InstructionTask;
  CorpusManifest m;
  m.entries = {
      row(Lang::kEn, C::kEnGeneral, T::kDialogueQa, 198'847),
      row(Lang::kEn, C::kEnGeneral, T::kInstructionFollowing, 25'618),
      row(Lang::kZh, C::kZhGeneral, T::kDialogueQa, 589'226),
      row(Lang::kZh, C::kZhGeneral, T::kInstructionFollowing, 402'455),
      row(Lang::kZh, C::kZhPolilegal, T::kDialogueQa, 83'929),
      row(Lang::kZh, C::kZhPolilegal, T::kArticleMemory, 67'913),
      row(Lang::kZh, C::kZhPolilegal, T::kPolilegalTasks, 383'953),
      row(Lang::kZh, C::kZhPolilegal, T::kDocumentGeneration, 82'257),
  };
  m.totals.n_documents = 1'834'198;
  m.totals.subtotals = {{"en_general", 224'465}, {"zh_general", 991'681}, {"zh_polilegal", 618'052}};
  return m;
}

}  // namespace lexforge::reference
