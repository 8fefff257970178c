#pragma once

// Rule-based cleaning: drops documents that are too short, too long, or
// dominated by markup, control codes or replacement characters.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lexforge/corpus.hpp"
#include "lexforge/text.hpp"

namespace lexforge {

enum class SpecialCharClass : std::uint8_t {
  kMarkup = 1 << 0,       // < > [ ] { } | # * ` ~ ^ backslash
  kControl = 1 << 1,      // C0/C1 control codes other than tab, LF, CR; DEL
  kReplacement = 1 << 2,  // U+FFFD
};

struct FilterRuleSet {
  std::size_t min_chars = 32;
  std::size_t max_chars = 131072;
  double max_special_ratio = 0.3;
  std::uint8_t special_char_classes = static_cast<std::uint8_t>(SpecialCharClass::kMarkup) |
                                      static_cast<std::uint8_t>(SpecialCharClass::kControl) |
                                      static_cast<std::uint8_t>(SpecialCharClass::kReplacement);

  bool has(SpecialCharClass c) const { return (special_char_classes & static_cast<std::uint8_t>(c)) != 0; }
};

inline void validate(const FilterRuleSet& rules) {
  if (rules.min_chars == 0) throw InvalidArgument("min_chars must be positive");
  if (rules.min_chars >= rules.max_chars) throw InvalidArgument("min_chars must be < max_chars");
  if (!(rules.max_special_ratio >= 0.0 && rules.max_special_ratio <= 1.0)) {
    throw InvalidArgument("max_special_ratio must be in [0,1]");
  }
}

enum class RejectReason { kTooShort, kTooLong, kSpecialCharDominated };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kTooShort: return "TooShort";
    case RejectReason::kTooLong: return "TooLong";
    case RejectReason::kSpecialCharDominated: return "SpecialCharDominated";
  }
  return "";
}

struct FilterVerdict {
  std::optional<RejectReason> reason;  // empty iff kept

  bool kept() const { return !reason.has_value(); }
};

inline bool is_markup_char(char32_t cp) {
  switch (cp) {
    case U'<': case U'>': case U'[': case U']': case U'{': case U'}':
    case U'|': case U'#': case U'*': case U'`': case U'~': case U'^': case U'\\':
      return true;
    default:
      return false;
  }
}

inline bool is_control_char(char32_t cp) {
  if (cp == U'\t' || cp == U'\n' || cp == U'\r') return false;
  return cp < 0x20 || (cp >= 0x7F && cp <= 0x9F);
}

inline bool is_special_char(char32_t cp, const FilterRuleSet& rules) {
  return (rules.has(SpecialCharClass::kMarkup) && is_markup_char(cp)) ||
         (rules.has(SpecialCharClass::kControl) && is_control_char(cp)) ||
         (rules.has(SpecialCharClass::kReplacement) && cp == kReplacementChar);
}

// Length is measured in code points; the special ratio is over all of them.
inline FilterVerdict apply_filters(const Document& doc, const FilterRuleSet& rules) {
  std::size_t chars = 0, special = 0;
  for (std::size_t pos = 0; pos < doc.text.size(); ++chars) {
    if (is_special_char(next_code_point(doc.text, pos), rules)) ++special;
  }
  if (chars < rules.min_chars) return {RejectReason::kTooShort};
  if (chars > rules.max_chars) return {RejectReason::kTooLong};
  if (static_cast<double>(special) > rules.max_special_ratio * static_cast<double>(chars)) {
    return {RejectReason::kSpecialCharDominated};
  }
  return {};
}

struct FilterStats {
  std::uint64_t input = 0;
  std::uint64_t kept = 0;
  std::uint64_t too_short = 0;
  std::uint64_t too_long = 0;
  std::uint64_t special_char_dominated = 0;
  std::uint64_t parse_errors = 0;

  std::uint64_t rejected() const { return too_short + too_long + special_char_dominated; }
};

struct FilterResult {
  std::vector<Document> kept;
  FilterStats stats;
};

inline FilterResult filter_corpus(std::span<const Document> docs, const FilterRuleSet& rules) {
  validate(rules);
  FilterResult result;
  for (const auto& doc : docs) {
    ++result.stats.input;
    const auto verdict = apply_filters(doc, rules);
    if (verdict.kept()) {
      ++result.stats.kept;
      result.kept.push_back(doc);
      continue;
    }
    switch (*verdict.reason) {
      case RejectReason::kTooShort: ++result.stats.too_short; break;
      case RejectReason::kTooLong: ++result.stats.too_long; break;
      case RejectReason::kSpecialCharDominated: ++result.stats.special_char_dominated; break;
    }
  }
  return result;
}

inline ordered_json to_json(const FilterRuleSet& r) {
  ordered_json j;
  j["min_chars"] = r.min_chars;
  j["max_chars"] = r.max_chars;
  j["max_special_ratio"] = r.max_special_ratio;
  ordered_json classes = ordered_json::array();
  if (r.has(SpecialCharClass::kMarkup)) classes.push_back("markup");
  if (r.has(SpecialCharClass::kControl)) classes.push_back("control");
  if (r.has(SpecialCharClass::kReplacement)) classes.push_back("replacement");
  j["special_char_classes"] = std::move(classes);
  return j;
}

inline FilterRuleSet filter_rules_from_json(const json& j) {
  FilterRuleSet r;
  r.min_chars = j.value("min_chars", r.min_chars);
  r.max_chars = j.value("max_chars", r.max_chars);
  r.max_special_ratio = j.value("max_special_ratio", r.max_special_ratio);
  if (auto it = j.find("special_char_classes"); it != j.end()) {
    r.special_char_classes = 0;
    for (const auto& c : *it) {
      const auto name = c.get<std::string>();
      if (name == "markup") r.special_char_classes |= static_cast<std::uint8_t>(SpecialCharClass::kMarkup);
      else if (name == "control") r.special_char_classes |= static_cast<std::uint8_t>(SpecialCharClass::kControl);
      else if (name == "replacement") r.special_char_classes |= static_cast<std::uint8_t>(SpecialCharClass::kReplacement);
      else throw InvalidArgument("unknown special char class: " + name);
    }
  }
  validate(r);
  return r;
}

inline ordered_json to_json(const FilterStats& s) {
  ordered_json j;
  j["input"] = s.input;
  j["kept"] = s.kept;
  j["rejected"] = {{"TooShort", s.too_short},
                   {"TooLong", s.too_long},
                   {"SpecialCharDominated", s.special_char_dominated}};
  j["parse_errors"] = s.parse_errors;
  return j;
}

}  // namespace lexforge
