#pragma once

// Deterministic stand-in for a chat-completion model. Recognises the toolkit's
// own prompts and answers them in the expected format:
//   - quality-scoring prompts get a rationale and a score derived from a hash
//     of the text fragment;
//   - synthesis prompts get a schema-valid JSON array covering every listed
//     dimension;
//   - anything else is treated as a question and answered with one of the
//     letters A-D, chosen from a hash of (prompt, seed).
// Responses depend only on the request, never on call order.

#include <memory>
#include <string>

#include "lexforge/enhancement.hpp"
#include "lexforge/inference.hpp"
#include "lexforge/quality.hpp"
#include "lexforge/random.hpp"

namespace lexforge {

inline int mock_quality_score(std::string_view text) { return static_cast<int>(splitmix64(fnv1a64(text)) % 6); }

inline ChatResponse mock_respond(const ChatRequest& req) {
  const std::string& prompt = req.messages.back().content;
  if (auto text = scoring_prompt_text(prompt)) {
    const int s = mock_quality_score(*text);
    return {"Scoring Rationale\nDeterministic mock judgement.\n\nScore\n" + std::to_string(s), std::nullopt};
  }
  const auto dims = synthesis_prompt_dimensions(prompt);
  if (!dims.empty()) {
    const auto id_start = prompt.find("Statute ID: ");
    const auto id_end = prompt.find('\n', id_start);
    const std::string id = id_start == std::string::npos ? "" : prompt.substr(id_start + 12, id_end - id_start - 12);
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (auto d : dims) {
      arr.push_back({{"dimension", to_string(d)},
                     {"instruction", "Regarding " + id + ", explain its " + std::string(info(d).display_name) + "."},
                     {"output", "Under " + id + ", the " + std::string(info(d).display_name) +
                                    " analysis follows from the text of the provision."}});
    }
    return {arr.dump(), std::nullopt};
  }
  const std::uint64_t h = splitmix64(fnv1a64(prompt) ^ splitmix64(req.seed.value_or(0)));
  static constexpr std::string_view kLetters = "ABCD";
  ChatResponse resp{std::string(1, kLetters[h % 4]), std::nullopt};
  if (req.logprobs_requested) resp.logprob = -static_cast<double>(h % 1000) / 100.0;
  return resp;
}

inline std::shared_ptr<MockTransport> make_mock_transport() {
  return std::make_shared<MockTransport>([](const ChatRequest& req, std::size_t) { return mock_respond(req); });
}

}  // namespace lexforge
