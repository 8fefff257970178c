#pragma once

// Continued-pretraining layout: the two-stage window plan, greedy packing of
// documents into fixed windows, grouping of sequences into optimization steps
// of constant token throughput, and the stage-boundary warmup.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lexforge/corpus.hpp"

namespace lexforge {

// 96 x 8192 = 48 x 16384: the only value near 786K divisible by both windows.
inline constexpr std::uint64_t kTokensPerStep = 786'432;

class IndivisibleStep : public InvalidArgument {
 public:
  IndivisibleStep(std::uint64_t window, std::uint64_t step)
      : InvalidArgument("window " + std::to_string(window) + " does not divide tokens_per_step " +
                        std::to_string(step)) {}
};

class WindowMismatch : public InvalidArgument {
 public:
  WindowMismatch(std::uint64_t plan, std::uint64_t stage)
      : InvalidArgument("plan window " + std::to_string(plan) + " != stage window " + std::to_string(stage)) {}
};

struct StageSpec {
  std::uint64_t window_tokens;
  double data_share;
};

struct StagePlanConfig {
  std::uint64_t tokens_per_step = kTokensPerStep;
  std::vector<StageSpec> stages = {{8192, 0.9}, {16384, 0.1}};
};

struct Stage {
  std::uint64_t window_tokens = 0;
  std::uint64_t data_tokens = 0;
  std::uint64_t sequences_per_step = 0;
};

struct StagePlan {
  std::vector<Stage> stages;
  std::uint64_t tokens_per_step = 0;
};

// Every stage but the last gets round(total x share) tokens; the last takes the
// remainder so the stages sum to total exactly.
inline StagePlan make_stage_plan(std::uint64_t total_tokens, const StagePlanConfig& cfg = {}) {
  if (total_tokens == 0) throw InvalidArgument("total_tokens must be positive");
  if (cfg.stages.empty()) throw InvalidArgument("no stages configured");
  if (cfg.tokens_per_step == 0) throw InvalidArgument("tokens_per_step must be positive");
  StagePlan plan;
  plan.tokens_per_step = cfg.tokens_per_step;
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& spec = cfg.stages[i];
    if (spec.window_tokens == 0 || cfg.tokens_per_step % spec.window_tokens != 0) {
      throw IndivisibleStep(spec.window_tokens, cfg.tokens_per_step);
    }
    if (!(spec.data_share >= 0.0 && spec.data_share <= 1.0)) throw InvalidArgument("data_share must be in [0,1]");
    Stage s;
    s.window_tokens = spec.window_tokens;
    s.sequences_per_step = cfg.tokens_per_step / spec.window_tokens;
    if (i + 1 == cfg.stages.size()) {
      s.data_tokens = total_tokens - assigned;
    } else {
      s.data_tokens = static_cast<std::uint64_t>(std::llround(static_cast<double>(total_tokens) * spec.data_share));
      if (assigned + s.data_tokens > total_tokens) throw InvalidArgument("stage shares exceed 1");
    }
    assigned += s.data_tokens;
    plan.stages.push_back(s);
  }
  return plan;
}

struct Span {
  std::string doc_id;
  std::uint64_t token_offset = 0;
  std::uint64_t token_len = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

struct PackedSequence {
  std::uint64_t sequence_id = 0;
  std::vector<Span> spans;
  std::uint64_t pad_tokens = 0;
};

struct PackingPlan {
  std::uint64_t window = 0;
  std::vector<PackedSequence> sequences;

  std::uint64_t pad_tokens() const {
    std::uint64_t n = 0;
    for (const auto& s : sequences) n += s.pad_tokens;
    return n;
  }

  double pad_fraction() const {
    if (sequences.empty()) return 0.0;
    return static_cast<double>(pad_tokens()) / static_cast<double>(window * sequences.size());
  }
};

struct TokenDoc {
  std::string doc_id;
  std::uint64_t token_count = 0;
};

// Fills windows in input order. A document that does not fit the remaining
// room is split at token granularity and continues in the next sequence, so
// only the final sequence carries padding. Zero-length documents produce no
// spans.
inline PackingPlan pack_documents(std::span<const TokenDoc> docs, std::uint64_t window) {
  if (window == 0) throw InvalidArgument("window must be positive");
  PackingPlan plan;
  plan.window = window;
  std::uint64_t used = window;  // forces a new sequence on the first token
  for (const auto& doc : docs) {
    std::uint64_t offset = 0;
    while (offset < doc.token_count) {
      if (used == window) {
        plan.sequences.push_back({plan.sequences.size(), {}, 0});
        used = 0;
      }
      const std::uint64_t take = std::min(window - used, doc.token_count - offset);
      plan.sequences.back().spans.push_back({doc.doc_id, offset, take});
      offset += take;
      used += take;
    }
  }
  if (!plan.sequences.empty()) plan.sequences.back().pad_tokens = window - used;
  return plan;
}

inline PackingPlan pack_documents(std::span<const Document> docs, std::uint64_t window) {
  std::vector<TokenDoc> tds;
  tds.reserve(docs.size());
  for (const auto& d : docs) tds.push_back({d.id, d.token_count});
  return pack_documents(std::span<const TokenDoc>(tds), window);
}

struct StepManifest {
  std::uint64_t step_index = 0;
  std::vector<std::uint64_t> sequence_ids;
  std::uint64_t tokens = 0;  // window x sequences, padding included
  bool partial = false;
};

inline std::vector<StepManifest> step_batches(const PackingPlan& plan, const Stage& stage) {
  if (plan.window != stage.window_tokens) throw WindowMismatch(plan.window, stage.window_tokens);
  if (stage.sequences_per_step == 0) throw InvalidArgument("sequences_per_step must be positive");
  std::vector<StepManifest> steps;
  for (std::size_t i = 0; i < plan.sequences.size(); i += stage.sequences_per_step) {
    StepManifest step;
    step.step_index = steps.size();
    const std::size_t end = std::min<std::size_t>(i + stage.sequences_per_step, plan.sequences.size());
    for (std::size_t k = i; k < end; ++k) step.sequence_ids.push_back(plan.sequences[k].sequence_id);
    step.tokens = plan.window * step.sequence_ids.size();
    step.partial = step.sequence_ids.size() < stage.sequences_per_step;
    steps.push_back(std::move(step));
  }
  return steps;
}

struct LrSchedule {
  double stage1_terminal_lr = 1e-5;
  double stage2_peak_factor = 1.1;
  std::uint64_t warmup_steps = 100;

  double peak() const { return stage1_terminal_lr * stage2_peak_factor; }
};

inline void validate(const LrSchedule& s) {
  if (!(s.stage1_terminal_lr > 0.0)) throw InvalidArgument("stage1_terminal_lr must be positive");
  if (!(s.stage2_peak_factor > 1.0)) throw InvalidArgument("stage2_peak_factor must be > 1");
  if (s.warmup_steps == 0) throw InvalidArgument("warmup_steps must be positive");
}

// Linear ramp from the stage-I terminal rate to the peak, then flat.
inline double warmup_lr(std::uint64_t step, const LrSchedule& s) {
  validate(s);
  if (step >= s.warmup_steps) return s.peak();
  const double t = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  return s.stage1_terminal_lr + (s.peak() - s.stage1_terminal_lr) * t;
}

inline ordered_json to_json(const StagePlan& p) {
  ordered_json j;
  j["tokens_per_step"] = p.tokens_per_step;
  j["stages"] = ordered_json::array();
  for (const auto& s : p.stages) {
    j["stages"].push_back({{"window_tokens", s.window_tokens},
                           {"data_tokens", s.data_tokens},
                           {"sequences_per_step", s.sequences_per_step}});
  }
  return j;
}

inline ordered_json to_json(const PackingPlan& p) {
  ordered_json j;
  j["window"] = p.window;
  j["n_sequences"] = p.sequences.size();
  j["pad_tokens"] = p.pad_tokens();
  j["pad_fraction"] = p.pad_fraction();
  j["sequences"] = ordered_json::array();
  for (const auto& s : p.sequences) {
    ordered_json js;
    js["sequence_id"] = s.sequence_id;
    js["spans"] = ordered_json::array();
    for (const auto& sp : s.spans) {
      js["spans"].push_back({{"doc_id", sp.doc_id}, {"token_offset", sp.token_offset}, {"token_len", sp.token_len}});
    }
    js["pad_tokens"] = s.pad_tokens;
    j["sequences"].push_back(std::move(js));
  }
  return j;
}

inline ordered_json to_json(const StepManifest& s) {
  ordered_json j;
  j["step_index"] = s.step_index;
  j["sequence_ids"] = s.sequence_ids;
  j["tokens"] = s.tokens;
  j["partial"] = s.partial;
  return j;
}

}  // namespace lexforge
