#pragma once

// Core data types shared by every pipeline stage: documents, instruction
// samples, preference pairs and the corpus manifest with its accounting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lexforge/error.hpp"
#include "lexforge/text.hpp"

namespace lexforge {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class Lang { kZh, kEn };

enum class Source {
  kGeneralIndustry,
  kLegalPoliticalNews,
  kJudicialJudgments,
  kArticlesInterpretations,
  kLegalBooksPapers,
};

inline constexpr std::array<Source, 5> kAllSources = {
    Source::kGeneralIndustry, Source::kLegalPoliticalNews, Source::kJudicialJudgments,
    Source::kArticlesInterpretations, Source::kLegalBooksPapers};

inline std::string_view to_string(Lang lang) { return lang == Lang::kZh ? "zh" : "en"; }

inline std::string_view to_string(Source source) {
  switch (source) {
    case Source::kGeneralIndustry: return "general_industry";
    case Source::kLegalPoliticalNews: return "legal_political_news";
    case Source::kJudicialJudgments: return "judicial_judgments";
    case Source::kArticlesInterpretations: return "articles_interpretations";
    case Source::kLegalBooksPapers: return "legal_books_papers";
  }
  return "";
}

inline std::optional<Lang> parse_lang(std::string_view s) {
  if (s == "zh") return Lang::kZh;
  if (s == "en") return Lang::kEn;
  return std::nullopt;
}

inline std::optional<Source> parse_source(std::string_view s) {
  for (Source source : kAllSources) {
    if (to_string(source) == s) return source;
  }
  return std::nullopt;
}

// Everything except general-industry text counts as domain data.
inline bool is_domain_source(Source source) { return source != Source::kGeneralIndustry; }

struct Document {
  std::string id;
  std::string text;
  Lang lang = Lang::kZh;
  Source source = Source::kGeneralIndustry;
  std::uint64_t token_count = 0;
  std::optional<int> score;
  std::optional<std::string> rationale;
  // Set instead of score when scoring failed; scores are never fabricated.
  std::optional<std::string> score_error;
  // Unrecognised fields, carried through unchanged.
  json extra = json::object();

  friend bool operator==(const Document&, const Document&) = default;
};

inline Document make_document(std::string id, std::string text, Lang lang, Source source,
                              const TokenCounter& counter = {}) {
  Document doc;
  doc.id = std::move(id);
  doc.text = std::move(text);
  doc.lang = lang;
  doc.source = source;
  doc.token_count = counter ? counter(doc.text) : count_tokens(doc.text);
  return doc;
}

enum class InstructionCategory { kEnGeneral, kZhGeneral, kZhPolilegal };
enum class InstructionTask {
  kDialogueQa,
  kInstructionFollowing,
  kArticleMemory,
  kPolilegalTasks,
  kDocumentGeneration,
};

inline std::string_view to_string(InstructionCategory c) {
  switch (c) {
    case InstructionCategory::kEnGeneral: return "en_general";
    case InstructionCategory::kZhGeneral: return "zh_general";
    case InstructionCategory::kZhPolilegal: return "zh_polilegal";
  }
  return "";
}

inline std::string_view to_string(InstructionTask t) {
  switch (t) {
    case InstructionTask::kDialogueQa: return "dialogue_qa";
    case InstructionTask::kInstructionFollowing: return "instruction_following";
    case InstructionTask::kArticleMemory: return "article_memory";
    case InstructionTask::kPolilegalTasks: return "polilegal_tasks";
    case InstructionTask::kDocumentGeneration: return "document_generation";
  }
  return "";
}

inline std::optional<InstructionCategory> parse_instruction_category(std::string_view s) {
  for (auto c : {InstructionCategory::kEnGeneral, InstructionCategory::kZhGeneral,
                 InstructionCategory::kZhPolilegal}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

inline std::optional<InstructionTask> parse_instruction_task(std::string_view s) {
  for (auto t : {InstructionTask::kDialogueQa, InstructionTask::kInstructionFollowing,
                 InstructionTask::kArticleMemory, InstructionTask::kPolilegalTasks,
                 InstructionTask::kDocumentGeneration}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

struct InstructionSample {
  std::string id;
  std::string query;
  std::string golden_answer;
  std::optional<InstructionCategory> category;
  std::optional<InstructionTask> task;
};

struct PreferencePair {
  std::string query;
  std::string chosen;
  std::string rejected;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

inline PreferencePair make_preference_pair(std::string query, std::string chosen, std::string rejected) {
  if (query.empty() || chosen.empty() || rejected.empty()) {
    throw InvalidArgument("preference pair fields must be non-empty");
  }
  if (chosen == rejected) throw InvalidArgument("preference pair has chosen == rejected");
  return {std::move(query), std::move(chosen), std::move(rejected)};
}

// ---------------------------------------------------------------------------
// JSON mapping

inline ordered_json to_json(const Document& doc) {
  ordered_json j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  j["lang"] = to_string(doc.lang);
  j["source"] = to_string(doc.source);
  j["token_count"] = doc.token_count;
  if (doc.score) j["score"] = *doc.score;
  if (doc.rationale) j["rationale"] = *doc.rationale;
  if (doc.score_error) j["score_error"] = *doc.score_error;
  for (const auto& [key, value] : doc.extra.items()) j[key] = value;
  return j;
}

namespace detail {

inline const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw InvalidArgument(std::string("missing field \"") + key + "\"");
  return *it;
}

inline std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw InvalidArgument(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace detail

// Parses one document record. token_count is computed with counter when the
// record does not carry one.
inline Document document_from_json(const json& j, const TokenCounter& counter = {}) {
  if (!j.is_object()) throw InvalidArgument("record is not an object");
  Document doc;
  doc.id = detail::require_string(j, "id");
  if (doc.id.empty()) throw InvalidArgument("empty id");
  doc.text = detail::require_string(j, "text");
  const auto lang = parse_lang(detail::require_string(j, "lang"));
  if (!lang) throw InvalidArgument("unknown lang");
  doc.lang = *lang;
  const auto source = parse_source(detail::require_string(j, "source"));
  if (!source) throw InvalidArgument("unknown source");
  doc.source = *source;
  if (auto it = j.find("token_count"); it != j.end()) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
      throw InvalidArgument("token_count must be a non-negative integer");
    }
    doc.token_count = it->get<std::uint64_t>();
  } else {
    doc.token_count = counter ? counter(doc.text) : count_tokens(doc.text);
  }
  if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw InvalidArgument("score must be an integer");
    const auto s = it->get<std::int64_t>();
    if (s < 0 || s > 5) throw InvalidArgument("score out of range [0,5]");
    doc.score = static_cast<int>(s);
  }
  if (auto it = j.find("rationale"); it != j.end() && it->is_string()) doc.rationale = it->get<std::string>();
  if (auto it = j.find("score_error"); it != j.end() && it->is_string()) doc.score_error = it->get<std::string>();
  for (const auto& [key, value] : j.items()) {
    static constexpr std::array<std::string_view, 8> known = {
        "id", "text", "lang", "source", "token_count", "score", "rationale", "score_error"};
    if (std::find(known.begin(), known.end(), key) == known.end()) doc.extra[key] = value;
  }
  return doc;
}

inline ordered_json to_json(const InstructionSample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["query"] = s.query;
  j["golden_answer"] = s.golden_answer;
  if (s.category) j["category"] = to_string(*s.category);
  if (s.task) j["task"] = to_string(*s.task);
  return j;
}

inline InstructionSample instruction_sample_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("record is not an object");
  InstructionSample s;
  s.id = detail::require_string(j, "id");
  s.query = detail::require_string(j, "query");
  s.golden_answer = detail::require_string(j, "golden_answer");
  if (s.id.empty() || s.query.empty() || s.golden_answer.empty()) {
    throw InvalidArgument("id, query and golden_answer must be non-empty");
  }
  if (auto it = j.find("category"); it != j.end()) {
    s.category = parse_instruction_category(it->get<std::string>());
    if (!s.category) throw InvalidArgument("unknown category");
  }
  if (auto it = j.find("task"); it != j.end()) {
    s.task = parse_instruction_task(it->get<std::string>());
    if (!s.task) throw InvalidArgument("unknown task");
  }
  return s;
}

inline ordered_json to_json(const PreferencePair& p) {
  ordered_json j;
  j["query"] = p.query;
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  return j;
}

inline PreferencePair preference_pair_from_json(const json& j) {
  return make_preference_pair(detail::require_string(j, "query"), detail::require_string(j, "chosen"),
                              detail::require_string(j, "rejected"));
}

// ---------------------------------------------------------------------------
// Line-delimited streams

template <typename T>
struct ReadResult {
  std::vector<T> records;
  std::vector<ParseError> errors;
};

// Calls parse(json, line_no) for each non-blank line. Malformed lines are
// recorded and skipped; reading continues.
template <typename Parse>
std::vector<ParseError> for_each_jsonl(std::istream& in, Parse&& parse) {
  std::vector<ParseError> errors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      parse(json::parse(line), line_no);
    } catch (const json::exception& e) {
      errors.emplace_back(line_no, e.what());
    } catch (const InvalidArgument& e) {
      errors.emplace_back(line_no, e.what());
    }
  }
  return errors;
}

inline ReadResult<Document> read_documents(std::istream& in, const TokenCounter& counter = {}) {
  ReadResult<Document> result;
  result.errors = for_each_jsonl(in, [&](const json& j, std::size_t) {
    result.records.push_back(document_from_json(j, counter));
  });
  return result;
}

inline void write_documents(std::ostream& out, std::span<const Document> docs) {
  for (const auto& doc : docs) out << to_json(doc).dump() << '\n';
}

inline ReadResult<InstructionSample> read_instruction_samples(std::istream& in) {
  ReadResult<InstructionSample> result;
  result.errors = for_each_jsonl(in, [&](const json& j, std::size_t) {
    result.records.push_back(instruction_sample_from_json(j));
  });
  return result;
}

template <typename T>
void write_jsonl(std::ostream& out, std::span<const T> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Manifest accounting

struct ManifestEntry {
  Lang lang = Lang::kZh;
  std::string category;
  std::string corpus_type;
  bool domain = false;
  std::uint64_t n_documents = 0;
  std::optional<std::uint64_t> total_tokens;
  std::optional<std::uint64_t> sampled_tokens;

  std::string key() const { return std::string(to_string(lang)) + "/" + corpus_type; }
};

struct ManifestTotals {
  std::uint64_t n_documents = 0;
  std::optional<std::uint64_t> total_tokens;
  std::optional<std::uint64_t> sampled_tokens;
  // Published n_documents subtotal per category.
  std::map<std::string, std::uint64_t> subtotals;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  ManifestTotals totals;
  // When set, totals match if both sides agree after rounding to this many
  // significant figures. Published tables round their totals row.
  std::optional<int> significant_figures;
};

struct ValidationIssue {
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

inline double round_significant(double value, int figures) {
  if (value == 0.0) return 0.0;
  const double magnitude = std::floor(std::log10(std::fabs(value))) + 1.0;
  const double scale = std::pow(10.0, figures - magnitude);
  return std::round(value * scale) / scale;
}

inline bool totals_match(std::uint64_t published, std::uint64_t summed, std::optional<int> figures) {
  if (!figures) return published == summed;
  return round_significant(static_cast<double>(published), *figures) ==
         round_significant(static_cast<double>(summed), *figures);
}

inline ValidationReport validate_manifest(const CorpusManifest& m) {
  ValidationReport report;
  auto fail = [&](std::string field, std::string message) {
    report.issues.push_back({std::move(field), std::move(message)});
  };
  auto mismatch = [&](const std::string& field, std::uint64_t published, std::uint64_t summed) {
    fail(field, "published " + std::to_string(published) + " != sum " + std::to_string(summed));
  };

  std::uint64_t docs = 0, tokens = 0, sampled = 0;
  bool all_tokens = true, all_sampled = true;
  std::map<std::string, std::uint64_t> per_category;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    docs += e.n_documents;
    per_category[e.category] += e.n_documents;
    if (e.total_tokens) tokens += *e.total_tokens; else all_tokens = false;
    if (e.sampled_tokens) sampled += *e.sampled_tokens; else all_sampled = false;
    if (e.total_tokens && e.sampled_tokens && *e.sampled_tokens > *e.total_tokens) {
      fail("entries[" + std::to_string(i) + "].sampled_tokens",
           "sampled " + std::to_string(*e.sampled_tokens) + " exceeds total " + std::to_string(*e.total_tokens));
    }
  }

  if (!totals_match(m.totals.n_documents, docs, m.significant_figures)) {
    mismatch("totals.n_documents", m.totals.n_documents, docs);
  }
  if (m.totals.total_tokens) {
    if (!all_tokens) fail("totals.total_tokens", "some entries lack total_tokens");
    else if (!totals_match(*m.totals.total_tokens, tokens, m.significant_figures))
      mismatch("totals.total_tokens", *m.totals.total_tokens, tokens);
  }
  if (m.totals.sampled_tokens) {
    if (!all_sampled) fail("totals.sampled_tokens", "some entries lack sampled_tokens");
    else if (!totals_match(*m.totals.sampled_tokens, sampled, m.significant_figures))
      mismatch("totals.sampled_tokens", *m.totals.sampled_tokens, sampled);
  }
  for (const auto& [category, published] : m.totals.subtotals) {
    const auto it = per_category.find(category);
    const std::uint64_t summed = it == per_category.end() ? 0 : it->second;
    if (!totals_match(published, summed, m.significant_figures)) {
      mismatch("totals.subtotals." + category, published, summed);
    }
  }
  return report;
}

struct CorpusRatios {
  double zh_en_ratio = 0.0;          // zh share of sampled tokens
  double domain_general_ratio = 0.0;  // domain share of sampled tokens
};

inline CorpusRatios compute_ratios(const CorpusManifest& m) {
  std::uint64_t total = 0, zh = 0, domain = 0;
  for (const auto& e : m.entries) {
    if (!e.sampled_tokens) throw InvalidArgument("entry " + e.key() + " lacks sampled_tokens");
    total += *e.sampled_tokens;
    if (e.lang == Lang::kZh) zh += *e.sampled_tokens;
    if (e.domain) domain += *e.sampled_tokens;
  }
  if (total == 0) throw ZeroTotal();
  return {static_cast<double>(zh) / static_cast<double>(total),
          static_cast<double>(domain) / static_cast<double>(total)};
}

// Per (lang, source) accounting of a document collection. sampled_tokens is
// left empty; the mixer fills budgets in.
inline CorpusManifest build_manifest(std::span<const Document> docs) {
  std::map<std::pair<Lang, Source>, ManifestEntry> groups;
  for (const auto& doc : docs) {
    auto [it, inserted] = groups.try_emplace({doc.lang, doc.source});
    auto& e = it->second;
    if (inserted) {
      e.lang = doc.lang;
      e.category = std::string(to_string(doc.lang));
      e.corpus_type = std::string(to_string(doc.source));
      e.domain = is_domain_source(doc.source);
      e.total_tokens = 0;
    }
    ++e.n_documents;
    *e.total_tokens += doc.token_count;
  }
  CorpusManifest m;
  m.totals.total_tokens = 0;
  for (auto& [_, e] : groups) {
    m.totals.n_documents += e.n_documents;
    *m.totals.total_tokens += *e.total_tokens;
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline ordered_json to_json(const CorpusManifest& m) {
  ordered_json j;
  if (m.significant_figures) j["significant_figures"] = *m.significant_figures;
  j["entries"] = ordered_json::array();
  for (const auto& e : m.entries) {
    ordered_json je;
    je["lang"] = to_string(e.lang);
    je["category"] = e.category;
    je["corpus_type"] = e.corpus_type;
    je["domain"] = e.domain;
    je["n_documents"] = e.n_documents;
    if (e.total_tokens) je["total_tokens"] = *e.total_tokens;
    if (e.sampled_tokens) je["sampled_tokens"] = *e.sampled_tokens;
    j["entries"].push_back(std::move(je));
  }
  ordered_json t;
  t["n_documents"] = m.totals.n_documents;
  if (m.totals.total_tokens) t["total_tokens"] = *m.totals.total_tokens;
  if (m.totals.sampled_tokens) t["sampled_tokens"] = *m.totals.sampled_tokens;
  if (!m.totals.subtotals.empty()) t["subtotals"] = m.totals.subtotals;
  j["totals"] = std::move(t);
  return j;
}

inline CorpusManifest manifest_from_json(const json& j) {
  CorpusManifest m;
  if (auto it = j.find("significant_figures"); it != j.end()) m.significant_figures = it->get<int>();
  for (const auto& je : detail::require(j, "entries")) {
    ManifestEntry e;
    const auto lang = parse_lang(detail::require_string(je, "lang"));
    if (!lang) throw InvalidArgument("unknown lang in manifest entry");
    e.lang = *lang;
    e.category = je.value("category", std::string(to_string(e.lang)));
    e.corpus_type = detail::require_string(je, "corpus_type");
    if (auto it = je.find("domain"); it != je.end()) {
      e.domain = it->get<bool>();
    } else if (auto source = parse_source(e.corpus_type)) {
      e.domain = is_domain_source(*source);
    }
    e.n_documents = detail::require(je, "n_documents").get<std::uint64_t>();
    if (auto it = je.find("total_tokens"); it != je.end()) e.total_tokens = it->get<std::uint64_t>();
    if (auto it = je.find("sampled_tokens"); it != je.end()) e.sampled_tokens = it->get<std::uint64_t>();
    m.entries.push_back(std::move(e));
  }
  const json& t = detail::require(j, "totals");
  m.totals.n_documents = detail::require(t, "n_documents").get<std::uint64_t>();
  if (auto it = t.find("total_tokens"); it != t.end()) m.totals.total_tokens = it->get<std::uint64_t>();
  if (auto it = t.find("sampled_tokens"); it != t.end()) m.totals.sampled_tokens = it->get<std::uint64_t>();
  if (auto it = t.find("subtotals"); it != t.end()) {
    m.totals.subtotals = it->get<std::map<std::string, std::uint64_t>>();
  }
  return m;
}

}  // namespace lexforge
