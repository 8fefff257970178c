#pragma once

// UTF-8 decoding, character classes and the default token segmentation.
//
// The default counter treats every CJK character as one token and every
// maximal run of other non-whitespace characters as one token. It is a
// budget-planning approximation of a subword tokenizer, not a tokenizer.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace lexforge {

inline constexpr char32_t kReplacementChar = 0xFFFD;

// Decodes one code point starting at text[pos] and advances pos. Malformed
// sequences decode to U+FFFD and consume a single byte.
inline char32_t next_code_point(std::string_view text, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) {
    ++pos;
    return lead;
  }
  std::size_t extra = 0;
  char32_t cp = 0;
  char32_t min_cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
    min_cp = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
    min_cp = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    extra = 3;
    cp = lead & 0x07;
    min_cp = 0x10000;
  } else {
    ++pos;
    return kReplacementChar;
  }
  if (pos + extra >= text.size()) {
    ++pos;
    return kReplacementChar;
  }
  for (std::size_t i = 1; i <= extra; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) {
      ++pos;
      return kReplacementChar;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return kReplacementChar;
  }
  pos += extra + 1;
  return cp;
}

inline std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  for (std::size_t pos = 0; pos < text.size();) out.push_back(next_code_point(text, pos));
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::size_t code_point_count(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < text.size(); ++n) next_code_point(text, pos);
  return n;
}

inline bool is_whitespace(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200B;
  }
}

// CJK ideographs, kana, hangul syllables, CJK punctuation and full-width forms.
inline bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||    // unified ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||    // extension A
         (cp >= 0x20000 && cp <= 0x323AF) ||  // extensions B-H
         (cp >= 0xF900 && cp <= 0xFAFF) ||    // compatibility ideographs
         (cp >= 0x2F800 && cp <= 0x2FA1F) ||
         (cp >= 0x3001 && cp <= 0x303F) ||    // symbols and punctuation
         (cp >= 0x3040 && cp <= 0x30FF) ||    // hiragana, katakana
         (cp >= 0xAC00 && cp <= 0xD7AF) ||    // hangul syllables
         (cp >= 0xFF01 && cp <= 0xFFEF);      // half/full-width forms
}

// Splits text into the default token units: single CJK characters and maximal
// runs of other non-whitespace characters.
inline std::vector<std::string> segment_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string run;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t start = pos;
    const char32_t cp = next_code_point(text, pos);
    if (is_whitespace(cp)) {
      if (!run.empty()) tokens.push_back(std::move(run)), run.clear();
    } else if (is_cjk(cp)) {
      if (!run.empty()) tokens.push_back(std::move(run)), run.clear();
      tokens.emplace_back(text.substr(start, pos - start));
    } else {
      run.append(text.substr(start, pos - start));
    }
  }
  if (!run.empty()) tokens.push_back(std::move(run));
  return tokens;
}

using TokenCounter = std::function<std::uint64_t(std::string_view)>;

inline std::uint64_t count_tokens(std::string_view text) {
  std::uint64_t n = 0;
  bool in_run = false;
  for (std::size_t pos = 0; pos < text.size();) {
    const char32_t cp = next_code_point(text, pos);
    if (is_whitespace(cp)) {
      in_run = false;
    } else if (is_cjk(cp)) {
      ++n;
      in_run = false;
    } else if (!in_run) {
      ++n;
      in_run = true;
    }
  }
  return n;
}

enum class CounterKind { kCjkWord, kWhitespace, kCodePoint };

// Counter selection from config. Plug an exact tokenizer in by constructing a
// TokenCounter directly.
inline TokenCounter make_token_counter(CounterKind kind = CounterKind::kCjkWord) {
  switch (kind) {
    case CounterKind::kWhitespace:
      return [](std::string_view text) -> std::uint64_t {
        std::uint64_t n = 0;
        bool in_run = false;
        for (std::size_t pos = 0; pos < text.size();) {
          const bool ws = is_whitespace(next_code_point(text, pos));
          if (!ws && !in_run) ++n;
          in_run = !ws;
        }
        return n;
      };
    case CounterKind::kCodePoint:
      return [](std::string_view text) -> std::uint64_t { return code_point_count(text); };
    case CounterKind::kCjkWord:
    default:
      return [](std::string_view text) { return count_tokens(text); };
  }
}

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace lexforge
