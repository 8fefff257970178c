#pragma once

// Knowledge-guided instruction synthesis for statutes. Each requested
// knowledge dimension becomes one generation constraint in the prompt, and
// the model must answer with a JSON array of {dimension, instruction, output}.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexforge/corpus.hpp"

namespace lexforge {

enum class KnowledgeDimension {
  kNormativeKnowledge,
  kLegalElementsAndConsequences,
  kConceptualKnowledge,
  kSystemicKnowledge,
  kBoundaryAndDistinction,
  kValueAndPrinciples,
  kSubjectObjectRelations,
  kInterpretationAndDiscretion,
  kTemporalScope,
};

struct DimensionInfo {
  KnowledgeDimension dimension;
  std::string_view name;          // stable serialization name
  std::string_view display_name;
  std::string_view constraint;    // what a question on this dimension must probe
};

inline constexpr std::array<DimensionInfo, 9> kDimensions = {{
    {KnowledgeDimension::kNormativeKnowledge, "NormativeKnowledge", "Normative Knowledge",
     "Identify the type of norm the provision establishes (empowering, obligatory, prohibitive or conditional) and "
     "what it requires or permits."},
    {KnowledgeDimension::kLegalElementsAndConsequences, "LegalElementsAndConsequences",
     "Legal Elements and Consequences",
     "Break a concrete fact pattern into its constitutive legal elements and state the legal consequence that "
     "follows under the provision."},
    {KnowledgeDimension::kConceptualKnowledge, "ConceptualKnowledge", "Conceptual Knowledge",
     "Define the key legal concepts used in the provision and distinguish them from neighbouring notions."},
    {KnowledgeDimension::kSystemicKnowledge, "SystemicKnowledge", "Systemic Knowledge",
     "Relate the provision to other articles of the same or other laws and explain how they operate together."},
    {KnowledgeDimension::kBoundaryAndDistinction, "BoundaryAndDistinction", "Boundary and Distinction",
     "Contrast two similar situations where the provision applies to one but not the other, and explain the "
     "dividing line."},
    {KnowledgeDimension::kValueAndPrinciples, "ValueAndPrinciples", "Value and Principles",
     "Name the legal principles and values the provision embodies."},
    {KnowledgeDimension::kSubjectObjectRelations, "SubjectObjectRelations", "Subject-Object Relations",
     "Identify the responsible subjects, their counterparts and the legal relationship between them."},
    {KnowledgeDimension::kInterpretationAndDiscretion, "InterpretationAndDiscretion",
     "Interpretation and Discretion",
     "Resolve an interpretive question about a term in the provision or the scope of discretion it leaves."},
    {KnowledgeDimension::kTemporalScope, "TemporalScope", "Temporal Scope",
     "Determine the temporal applicability of the provision, including effective date and retroactivity."},
}};

inline const DimensionInfo& info(KnowledgeDimension d) { return kDimensions[static_cast<std::size_t>(d)]; }
inline std::string_view to_string(KnowledgeDimension d) { return info(d).name; }

inline std::vector<KnowledgeDimension> all_dimensions() {
  std::vector<KnowledgeDimension> out;
  for (const auto& d : kDimensions) out.push_back(d.dimension);
  return out;
}

namespace detail {
inline std::string fold_label(std::string_view label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}
}  // namespace detail

// Accepts the serialization name or the display name, ignoring case, spaces
// and punctuation.
inline std::optional<KnowledgeDimension> parse_dimension(std::string_view label) {
  const auto folded = detail::fold_label(label);
  for (const auto& d : kDimensions) {
    if (detail::fold_label(d.name) == folded) return d.dimension;
  }
  return std::nullopt;
}

class UnknownDimension : public Error {
 public:
  explicit UnknownDimension(std::string label) : Error("unknown knowledge dimension: " + label), label_(std::move(label)) {}
  const std::string& label() const noexcept { return label_; }

 private:
  std::string label_;
};

class MalformedOutput : public Error {
 public:
  using Error::Error;
};

class EmptyStatute : public InvalidArgument {
 public:
  EmptyStatute() : InvalidArgument("statute text must be non-empty") {}
};

class EmptyDimensionSet : public InvalidArgument {
 public:
  EmptyDimensionSet() : InvalidArgument("dimension set must be non-empty") {}
};

// "all" or a comma-separated list of dimension labels.
inline std::vector<KnowledgeDimension> parse_dimension_list(std::string_view spec) {
  if (trim(spec) == "all") return all_dimensions();
  std::vector<KnowledgeDimension> out;
  while (!spec.empty()) {
    const auto comma = spec.find(',');
    const auto label = trim(spec.substr(0, comma));
    if (!label.empty()) {
      const auto d = parse_dimension(label);
      if (!d) throw UnknownDimension(std::string(label));
      if (std::find(out.begin(), out.end(), *d) == out.end()) out.push_back(*d);
    }
    if (comma == std::string_view::npos) break;
    spec.remove_prefix(comma + 1);
  }
  if (out.empty()) throw EmptyDimensionSet();
  return out;
}

struct Statute {
  std::string id;
  std::string text;
};

inline constexpr std::string_view kSynthesisSystemPrompt =
    "You are a senior legal expert who writes training data for legal language models. Given a statutory "
    "provision, you analyse it along the requested knowledge dimensions and, for each dimension, write one "
    "instruction that a learner might ask together with an accurate, well-reasoned answer grounded in the "
    "provision.";

inline std::string build_synthesis_prompt(const Statute& statute, std::span<const KnowledgeDimension> dims) {
  if (trim(statute.text).empty()) throw EmptyStatute();
  if (dims.empty()) throw EmptyDimensionSet();
  std::string p;
  p += "Statute ID: " + statute.id + "\n\n";
  p += "Statute text:\n";
  p += statute.text;
  p += "\n\nAnalyse the statute dimension by dimension. For each knowledge dimension below, write exactly one "
       "instruction-response pair. The instruction must probe that dimension of the statute; the output must "
       "give a legally grounded explanation with explicit reasoning.\n\n";
  p += "Knowledge dimensions (" + std::to_string(dims.size()) + "):\n";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto& d = info(dims[i]);
    p += std::to_string(i + 1) + ". [" + std::string(d.name) + "] " + std::string(d.display_name) + ": " +
         std::string(d.constraint) + "\n";
  }
  p += "\nOutput format: return only a JSON array with one object per dimension, in the order listed. Each object "
       "has exactly the keys \"dimension\" (the bracketed name above), \"instruction\" and \"output\". Do not "
       "output anything outside the JSON array.";
  return p;
}

// Reads the dimension names listed in a synthesis prompt, in order.
inline std::vector<KnowledgeDimension> synthesis_prompt_dimensions(std::string_view prompt) {
  std::vector<KnowledgeDimension> out;
  std::size_t pos = 0;
  while ((pos = prompt.find(". [", pos)) != std::string_view::npos) {
    const auto close = prompt.find(']', pos);
    if (close == std::string_view::npos) break;
    if (auto d = parse_dimension(prompt.substr(pos + 3, close - pos - 3))) out.push_back(*d);
    pos = close;
  }
  return out;
}

struct SynthesizedPair {
  KnowledgeDimension dimension;
  std::string instruction;
  std::string output;
  std::string statute_id;
};

struct CoverageReport {
  std::vector<KnowledgeDimension> covered;
  std::vector<KnowledgeDimension> missing;
  std::vector<KnowledgeDimension> duplicated;
  std::vector<KnowledgeDimension> extraneous;  // present but not requested

  bool complete() const { return missing.empty() && duplicated.empty() && extraneous.empty(); }
};

inline CoverageReport validate_dimension_coverage(std::span<const SynthesizedPair> pairs,
                                                  std::span<const KnowledgeDimension> dims) {
  std::map<KnowledgeDimension, std::size_t> counts;
  for (const auto& p : pairs) ++counts[p.dimension];
  const std::set<KnowledgeDimension> requested(dims.begin(), dims.end());
  CoverageReport r;
  for (const auto& d : kDimensions) {
    const auto it = counts.find(d.dimension);
    const std::size_t n = it == counts.end() ? 0 : it->second;
    const bool wanted = requested.count(d.dimension) > 0;
    if (wanted && n > 0) r.covered.push_back(d.dimension);
    if (wanted && n == 0) r.missing.push_back(d.dimension);
    if (n > 1) r.duplicated.push_back(d.dimension);
    if (!wanted && n > 0) r.extraneous.push_back(d.dimension);
  }
  return r;
}

struct SynthesisParse {
  std::vector<SynthesizedPair> pairs;
  CoverageReport coverage;
};

// Parses the JSON-array answer (optionally wrapped in a ```json fence).
// Pairs for dimensions outside dims are dropped and reported as extraneous;
// missing dimensions are reported, never filled in.
inline SynthesisParse parse_synthesis_output(std::string_view response, std::span<const KnowledgeDimension> dims,
                                             const std::string& statute_id = {}) {
  const auto open = response.find('[');
  const auto close = response.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw MalformedOutput("no JSON array in synthesis output");
  }
  json arr;
  try {
    arr = json::parse(response.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    throw MalformedOutput(std::string("synthesis output is not valid JSON: ") + e.what());
  }
  if (!arr.is_array()) throw MalformedOutput("synthesis output is not an array");

  std::vector<SynthesizedPair> all;
  for (const auto& item : arr) {
    if (!item.is_object()) throw MalformedOutput("array element is not an object");
    const auto d = item.find("dimension"), ins = item.find("instruction"), out = item.find("output");
    if (d == item.end() || ins == item.end() || out == item.end() || !d->is_string() || !ins->is_string() ||
        !out->is_string()) {
      throw MalformedOutput("element lacks string dimension/instruction/output");
    }
    const auto dim = parse_dimension(d->get<std::string>());
    if (!dim) throw UnknownDimension(d->get<std::string>());
    auto instruction = ins->get<std::string>();
    auto output = out->get<std::string>();
    if (trim(instruction).empty() || trim(output).empty()) throw MalformedOutput("empty instruction or output");
    all.push_back({*dim, std::move(instruction), std::move(output), statute_id});
  }
  SynthesisParse result;
  result.coverage = validate_dimension_coverage(all, dims);
  for (auto& p : all) {
    if (std::find(dims.begin(), dims.end(), p.dimension) != dims.end()) result.pairs.push_back(std::move(p));
  }
  return result;
}

inline ordered_json to_json(const SynthesizedPair& p) {
  ordered_json j;
  j["statute_id"] = p.statute_id;
  j["dimension"] = to_string(p.dimension);
  j["instruction"] = p.instruction;
  j["output"] = p.output;
  return j;
}

inline ordered_json to_json(const CoverageReport& r) {
  auto names = [](const std::vector<KnowledgeDimension>& v) {
    ordered_json a = ordered_json::array();
    for (auto d : v) a.push_back(to_string(d));
    return a;
  };
  ordered_json j;
  j["covered"] = names(r.covered);
  j["missing"] = names(r.missing);
  j["duplicated"] = names(r.duplicated);
  j["extraneous"] = names(r.extraneous);
  return j;
}

inline ReadResult<Statute> read_statutes(std::istream& in) {
  ReadResult<Statute> result;
  result.errors = for_each_jsonl(in, [&](const json& j, std::size_t) {
    result.records.push_back({detail::require_string(j, "id"), detail::require_string(j, "text")});
  });
  return result;
}

}  // namespace lexforge
