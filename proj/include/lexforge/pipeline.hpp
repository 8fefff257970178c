#pragma once

// End-to-end runner. A JSON config toggles stages; each enabled stage reads
// its own section. Artifacts are written to output_dir alongside report.json,
// which echoes the fully resolved config and its hash.
//
// Exit status: 0 success, 1 config error, 2 stage failure, 3 an enforced
// acceptance check (mix ratio targets) failed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexforge/corpus.hpp"
#include "lexforge/cpt_packer.hpp"
#include "lexforge/enhancement.hpp"
#include "lexforge/filter.hpp"
#include "lexforge/hipo.hpp"
#include "lexforge/inference.hpp"
#include "lexforge/metrics.hpp"
#include "lexforge/mixer.hpp"
#include "lexforge/mock.hpp"
#include "lexforge/psft.hpp"
#include "lexforge/quality.hpp"

namespace lexforge {

inline constexpr std::array<std::string_view, 7> kStageNames = {"filter", "score", "enhance", "mix",
                                                                "pack",   "schedule", "hipo"};

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitStage = 2, kExitAcceptance = 3 };

struct ConfigIssue {
  std::string path;
  std::string message;
};

struct ScoreStageConfig {
  int tau = 3;
  std::optional<std::size_t> sample_n;
  double temperature = 0.0;
  int max_tokens = 128;
  int parse_retries = 1;
};

struct EnhanceStageConfig {
  std::string statutes;
  std::vector<KnowledgeDimension> dims = all_dimensions();
  bool score_synthesized = true;
  int tau = 3;
};

struct MixStageConfig {
  Budgets budgets;
  std::map<std::string, double> fractions;
  RatioTargets targets;
  bool enforce_targets = false;
};

struct PackStageConfig {
  std::uint64_t window = 8192;
  StagePlanConfig stage_plan;
  LrSchedule lr;
};

struct ScheduleStageConfig {
  std::string core;
  std::string downstream;
  CurriculumConfig curriculum;
};

struct HipoStageConfig {
  std::string samples;
  HipoRunOptions run;
  std::size_t iterations = 5;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string input;
  std::string output_dir;
  CounterKind token_counter = CounterKind::kCjkWord;
  EndpointConfig endpoint;
  std::map<std::string, bool> stages;
  FilterRuleSet filter;
  ScoreStageConfig score;
  EnhanceStageConfig enhance;
  MixStageConfig mix;
  PackStageConfig pack;
  ScheduleStageConfig schedule;
  HipoStageConfig hipo;

  bool enabled(std::string_view stage) const {
    auto it = stages.find(std::string(stage));
    return it != stages.end() && it->second;
  }
};

namespace detail {

// Collects every problem instead of stopping at the first.
class ConfigReader {
 public:
  std::vector<ConfigIssue> issues;

  void fail(std::string path, std::string message) { issues.push_back({std::move(path), std::move(message)}); }

  const json* object(const json& parent, const std::string& key, const std::string& path) {
    auto it = parent.find(key);
    if (it == parent.end()) return nullptr;
    if (!it->is_object()) {
      fail(path, "must be an object");
      return nullptr;
    }
    return &*it;
  }

  template <typename T, typename Check>
  void number(const json& parent, const std::string& key, const std::string& path, T& out, Check ok,
              const char* requirement) {
    auto it = parent.find(key);
    if (it == parent.end()) return;
    bool type_ok = std::is_integral_v<T> ? (it->is_number_integer() && !(std::is_unsigned_v<T> && it->get<long long>() < 0))
                                         : it->is_number();
    if (!type_ok) {
      fail(path, std::is_integral_v<T> ? (std::is_unsigned_v<T> ? "must be a non-negative integer" : "must be an integer")
                                       : "must be a number");
      return;
    }
    const T v = it->get<T>();
    if (!ok(v)) {
      fail(path, std::string("out of range: ") + requirement);
      return;
    }
    out = v;
  }

  void string(const json& parent, const std::string& key, const std::string& path, std::string& out, bool required) {
    auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(path, "required");
      return;
    }
    if (!it->is_string() || it->get<std::string>().empty()) {
      fail(path, "must be a non-empty string");
      return;
    }
    out = it->get<std::string>();
  }

  void boolean(const json& parent, const std::string& key, const std::string& path, bool& out) {
    auto it = parent.find(key);
    if (it == parent.end()) return;
    if (!it->is_boolean()) {
      fail(path, "must be a boolean");
      return;
    }
    out = it->get<bool>();
  }
};

inline std::string counter_name(CounterKind k) {
  switch (k) {
    case CounterKind::kWhitespace: return "whitespace";
    case CounterKind::kCodePoint: return "code_point";
    case CounterKind::kCjkWord: break;
  }
  return "cjk_word";
}

}  // namespace detail

struct ParsedConfig {
  PipelineConfig config;
  std::vector<ConfigIssue> issues;
};

inline ParsedConfig parse_pipeline_config(const json& j) {
  ParsedConfig out;
  auto& c = out.config;
  detail::ConfigReader r;
  if (!j.is_object()) {
    r.fail("", "config must be a JSON object");
    out.issues = std::move(r.issues);
    return out;
  }
  constexpr auto any = [](auto) { return true; };
  constexpr auto positive = [](auto v) { return v > 0; };
  constexpr auto non_negative = [](auto v) { return v >= 0; };
  constexpr auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };

  r.number(j, "seed", "seed", c.seed, any, "");
  r.string(j, "output_dir", "output_dir", c.output_dir, false);

  if (const auto* s = r.object(j, "stages", "stages")) {
    for (const auto& [name, v] : s->items()) {
      if (std::find(kStageNames.begin(), kStageNames.end(), name) == kStageNames.end()) {
        r.fail("stages." + name, "unknown stage");
      } else if (!v.is_boolean()) {
        r.fail("stages." + name, "must be a boolean");
      } else {
        c.stages[name] = v.get<bool>();
      }
    }
  }
  for (auto name : kStageNames) {
    if (c.enabled(name) && !j.contains(std::string(name))) {
      r.fail(std::string(name), "section required when the stage is enabled");
    }
  }

  const bool needs_docs = c.enabled("filter") || c.enabled("score") || c.enabled("mix") || c.enabled("pack");
  r.string(j, "input", "input", c.input, needs_docs);
  if (auto it = j.find("token_counter"); it != j.end()) {
    const auto name = it->is_string() ? it->get<std::string>() : "";
    if (name == "cjk_word") c.token_counter = CounterKind::kCjkWord;
    else if (name == "whitespace") c.token_counter = CounterKind::kWhitespace;
    else if (name == "code_point") c.token_counter = CounterKind::kCodePoint;
    else r.fail("token_counter", "must be one of cjk_word, whitespace, code_point");
  }

  const bool needs_endpoint = c.enabled("score") || c.enabled("enhance") || c.enabled("hipo");
  if (const auto* e = r.object(j, "endpoint", "endpoint")) {
    r.string(*e, "base_url", "endpoint.base_url", c.endpoint.base_url, false);
    r.string(*e, "api_key_env", "endpoint.api_key_env", c.endpoint.api_key_env, false);
    r.string(*e, "model", "endpoint.model", c.endpoint.model, false);
    r.number(*e, "max_in_flight", "endpoint.max_in_flight", c.endpoint.max_in_flight, positive, "must be >= 1");
    long long timeout_ms = c.endpoint.timeout.count();
    r.number(*e, "timeout_ms", "endpoint.timeout_ms", timeout_ms, positive, "must be > 0");
    c.endpoint.timeout = std::chrono::milliseconds(timeout_ms);
    if (const auto* rt = r.object(*e, "retry", "endpoint.retry")) {
      auto& p = c.endpoint.retry;
      r.number(*rt, "max_attempts", "endpoint.retry.max_attempts", p.max_attempts, positive, "must be >= 1");
      long long init = p.initial_backoff.count(), max = p.max_backoff.count();
      r.number(*rt, "initial_backoff_ms", "endpoint.retry.initial_backoff_ms", init, non_negative, "must be >= 0");
      r.number(*rt, "max_backoff_ms", "endpoint.retry.max_backoff_ms", max, non_negative, "must be >= 0");
      r.number(*rt, "multiplier", "endpoint.retry.multiplier", p.multiplier, [](double v) { return v >= 1.0; },
               "must be >= 1");
      p.initial_backoff = std::chrono::milliseconds(init);
      p.max_backoff = std::chrono::milliseconds(max);
    }
  }
  if (needs_endpoint && c.endpoint.base_url.empty()) {
    if (const char* env = std::getenv("POLILEGAL_ENDPOINT"); env != nullptr && *env != '\0') {
      c.endpoint.base_url = env;
    } else {
      r.fail("endpoint.base_url", "required (or set POLILEGAL_ENDPOINT)");
    }
  }

  if (const auto* f = r.object(j, "filter", "filter")) {
    try {
      c.filter = filter_rules_from_json(*f);
    } catch (const std::exception& e) {
      r.fail("filter", e.what());
    }
  }

  if (const auto* s = r.object(j, "score", "score")) {
    r.number(*s, "tau", "score.tau", c.score.tau, [](int v) { return v >= 0 && v <= 5; }, "must be in [0,5]");
    std::size_t n = 0;
    if (s->contains("sample_n") && !(*s)["sample_n"].is_null()) {
      r.number(*s, "sample_n", "score.sample_n", n, positive, "must be >= 1");
      if (n > 0) c.score.sample_n = n;
    }
    r.number(*s, "temperature", "score.temperature", c.score.temperature, non_negative, "must be >= 0");
    r.number(*s, "max_tokens", "score.max_tokens", c.score.max_tokens, positive, "must be >= 1");
    r.number(*s, "parse_retries", "score.parse_retries", c.score.parse_retries, non_negative, "must be >= 0");
  }

  if (const auto* s = r.object(j, "enhance", "enhance")) {
    r.string(*s, "statutes", "enhance.statutes", c.enhance.statutes, true);
    if (auto it = s->find("dims"); it != s->end()) {
      try {
        if (it->is_string()) {
          c.enhance.dims = parse_dimension_list(it->get<std::string>());
        } else if (it->is_array()) {
          c.enhance.dims.clear();
          for (const auto& d : *it) {
            const auto parsed = parse_dimension(d.get<std::string>());
            if (!parsed) throw UnknownDimension(d.get<std::string>());
            c.enhance.dims.push_back(*parsed);
          }
          if (c.enhance.dims.empty()) throw EmptyDimensionSet();
        } else {
          r.fail("enhance.dims", "must be \"all\", a comma-separated string or an array");
        }
      } catch (const std::exception& e) {
        r.fail("enhance.dims", e.what());
      }
    }
    r.boolean(*s, "score_synthesized", "enhance.score_synthesized", c.enhance.score_synthesized);
    r.number(*s, "tau", "enhance.tau", c.enhance.tau, [](int v) { return v >= 0 && v <= 5; }, "must be in [0,5]");
  }

  if (const auto* s = r.object(j, "mix", "mix")) {
    if (const auto* b = r.object(*s, "budgets", "mix.budgets")) {
      for (const auto& [key, v] : b->items()) {
        if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) r.fail("mix.budgets." + key, "must be a positive integer");
        else c.mix.budgets[key] = v.get<std::uint64_t>();
      }
    }
    if (const auto* f = r.object(*s, "fractions", "mix.fractions")) {
      for (const auto& [key, v] : f->items()) {
        if (!v.is_number() || !(v.get<double>() > 0.0 && v.get<double>() <= 1.0)) {
          r.fail("mix.fractions." + key, "must be in (0,1]");
        } else if (c.mix.budgets.count(key)) {
          r.fail("mix.fractions." + key, "source already has a budget");
        } else {
          c.mix.fractions[key] = v.get<double>();
        }
      }
    }
    if (const auto* t = r.object(*s, "targets", "mix.targets")) {
      double zh = c.mix.targets.zh_en.first, dom = c.mix.targets.domain_general.first;
      r.number(*t, "zh_share", "mix.targets.zh_share", zh, unit, "must be in [0,1]");
      r.number(*t, "domain_share", "mix.targets.domain_share", dom, unit, "must be in [0,1]");
      r.number(*t, "tolerance", "mix.targets.tolerance", c.mix.targets.tolerance, non_negative, "must be >= 0");
      c.mix.targets.zh_en = {zh, 1.0 - zh};
      c.mix.targets.domain_general = {dom, 1.0 - dom};
    }
    r.boolean(*s, "enforce_targets", "mix.enforce_targets", c.mix.enforce_targets);
  }

  if (const auto* s = r.object(j, "pack", "pack")) {
    r.number(*s, "window", "pack.window", c.pack.window, positive, "must be >= 1");
    r.number(*s, "tokens_per_step", "pack.tokens_per_step", c.pack.stage_plan.tokens_per_step, positive, "must be >= 1");
    if (auto it = s->find("stages"); it != s->end()) {
      if (!it->is_array() || it->empty()) {
        r.fail("pack.stages", "must be a non-empty array");
      } else {
        c.pack.stage_plan.stages.clear();
        for (std::size_t i = 0; i < it->size(); ++i) {
          const auto& st = (*it)[i];
          const std::string path = "pack.stages[" + std::to_string(i) + "]";
          StageSpec spec{0, 0.0};
          if (!st.is_object()) {
            r.fail(path, "must be an object");
            continue;
          }
          r.number(st, "window", path + ".window", spec.window_tokens, positive, "must be >= 1");
          r.number(st, "data_share", path + ".data_share", spec.data_share, unit, "must be in [0,1]");
          c.pack.stage_plan.stages.push_back(spec);
        }
      }
    }
    if (c.pack.stage_plan.tokens_per_step % c.pack.window != 0) {
      r.fail("pack.window", "must divide pack.tokens_per_step");
    }
    if (const auto* lr = r.object(*s, "lr", "pack.lr")) {
      r.number(*lr, "stage1_terminal_lr", "pack.lr.stage1_terminal_lr", c.pack.lr.stage1_terminal_lr, positive, "must be > 0");
      r.number(*lr, "stage2_peak_factor", "pack.lr.stage2_peak_factor", c.pack.lr.stage2_peak_factor,
               [](double v) { return v > 1.0; }, "must be > 1");
      r.number(*lr, "warmup_steps", "pack.lr.warmup_steps", c.pack.lr.warmup_steps, positive, "must be >= 1");
    }
  }

  if (const auto* s = r.object(j, "schedule", "schedule")) {
    auto& cur = c.schedule.curriculum;
    r.string(*s, "core", "schedule.core", c.schedule.core, true);
    r.string(*s, "downstream", "schedule.downstream", c.schedule.downstream, true);
    r.number(*s, "lambda", "schedule.lambda", cur.mixing_lambda, unit, "must be in [0,1]");
    r.number(*s, "batch_size", "schedule.batch_size", cur.batch_size, positive, "must be >= 1");
    r.number(*s, "epochs", "schedule.epochs", cur.epochs, positive, "must be >= 1");
    if (s->contains("num_batches") && !(*s)["num_batches"].is_null()) {
      std::size_t n = 0;
      r.number(*s, "num_batches", "schedule.num_batches", n, positive, "must be >= 1");
      if (n > 0) cur.num_batches = n;
    }
  }

  if (const auto* s = r.object(j, "hipo", "hipo")) {
    auto& run = c.hipo.run;
    r.string(*s, "samples", "hipo.samples", c.hipo.samples, true);
    if (auto it = s->find("metric"); it != s->end()) {
      const auto kind = it->is_string() ? parse_metric_kind(it->get<std::string>()) : std::nullopt;
      if (!kind) r.fail("hipo.metric", "unknown metric");
      else run.metric = *kind;
    }
    run.hipo.hard_threshold = default_hard_threshold(run.metric);
    r.number(*s, "beta", "hipo.beta", run.hipo.beta, positive, "must be > 0");
    r.number(*s, "nll_lambda", "hipo.nll_lambda", run.hipo.nll_lambda, non_negative, "must be >= 0");
    r.number(*s, "tau", "hipo.tau", run.hipo.hard_threshold, unit, "must be in [0,1]");
    r.number(*s, "iterations", "hipo.iterations", c.hipo.iterations, positive, "must be >= 1");
    r.number(*s, "generations", "hipo.generations", run.generations_per_query, positive, "must be >= 1");
    r.number(*s, "temperature", "hipo.temperature", run.temperature, non_negative, "must be >= 0");
    r.number(*s, "max_tokens", "hipo.max_tokens", run.max_tokens, positive, "must be >= 1");
    if (auto it = s->find("aggregate"); it != s->end()) {
      const auto v = it->is_string() ? it->get<std::string>() : "";
      if (v == "mean") run.aggregate = OutcomeAggregate::kMean;
      else if (v == "min") run.aggregate = OutcomeAggregate::kMin;
      else r.fail("hipo.aggregate", "must be mean or min");
    }
    if (auto it = s->find("nll_normalization"); it != s->end()) {
      const auto v = it->is_string() ? it->get<std::string>() : "";
      if (v == "mean_per_token") run.hipo.nll = NllNormalization::kMeanPerToken;
      else if (v == "sum") run.hipo.nll = NllNormalization::kSum;
      else r.fail("hipo.nll_normalization", "must be mean_per_token or sum");
    }
  }

  // Referenced files must be distinct so no stage reads another's output.
  std::map<std::string, std::string> seen_paths;
  const std::pair<const char*, const std::string*> paths[] = {
      {"input", &c.input},           {"output_dir", &c.output_dir},           {"enhance.statutes", &c.enhance.statutes},
      {"schedule.core", &c.schedule.core}, {"schedule.downstream", &c.schedule.downstream}, {"hipo.samples", &c.hipo.samples}};
  for (const auto& [field, value] : paths) {
    if (value->empty()) continue;
    const auto normal = std::filesystem::path(*value).lexically_normal().string();
    auto [it, inserted] = seen_paths.emplace(normal, field);
    if (!inserted) r.fail(field, "same path as " + it->second);
  }

  out.issues = std::move(r.issues);
  return out;
}

inline std::vector<ConfigIssue> validate_config(const json& j) { return parse_pipeline_config(j).issues; }

// Throws ConfigError naming the first offending field.
inline PipelineConfig load_pipeline_config(const json& j) {
  auto parsed = parse_pipeline_config(j);
  if (!parsed.issues.empty()) throw ConfigError(parsed.issues.front().path, parsed.issues.front().message);
  return std::move(parsed.config);
}

// Every effective setting, defaults included. output_dir is left out so that
// the same config run into two directories hashes identically.
inline ordered_json resolved_config(const PipelineConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["input"] = c.input;
  j["token_counter"] = detail::counter_name(c.token_counter);
  j["stages"] = ordered_json::object();
  for (auto name : kStageNames) j["stages"][std::string(name)] = c.enabled(name);
  j["endpoint"] = {{"base_url", c.endpoint.base_url},
                   {"api_key_env", c.endpoint.api_key_env},
                   {"model", c.endpoint.model},
                   {"max_in_flight", c.endpoint.max_in_flight},
                   {"timeout_ms", c.endpoint.timeout.count()},
                   {"retry",
                    {{"max_attempts", c.endpoint.retry.max_attempts},
                     {"initial_backoff_ms", c.endpoint.retry.initial_backoff.count()},
                     {"multiplier", c.endpoint.retry.multiplier},
                     {"max_backoff_ms", c.endpoint.retry.max_backoff.count()}}}};
  if (c.enabled("filter")) j["filter"] = to_json(c.filter);
  if (c.enabled("score")) {
    j["score"] = {{"tau", c.score.tau},
                  {"sample_n", c.score.sample_n ? ordered_json(*c.score.sample_n) : ordered_json(nullptr)},
                  {"temperature", c.score.temperature},
                  {"max_tokens", c.score.max_tokens},
                  {"parse_retries", c.score.parse_retries}};
  }
  if (c.enabled("enhance")) {
    ordered_json dims = ordered_json::array();
    for (auto d : c.enhance.dims) dims.push_back(to_string(d));
    j["enhance"] = {{"statutes", c.enhance.statutes},
                    {"dims", dims},
                    {"score_synthesized", c.enhance.score_synthesized},
                    {"tau", c.enhance.tau}};
  }
  if (c.enabled("mix")) {
    j["mix"] = {{"budgets", c.mix.budgets},
                {"fractions", c.mix.fractions},
                {"targets",
                 {{"zh_share", c.mix.targets.zh_en.first},
                  {"domain_share", c.mix.targets.domain_general.first},
                  {"tolerance", c.mix.targets.tolerance}}},
                {"enforce_targets", c.mix.enforce_targets}};
  }
  if (c.enabled("pack")) {
    ordered_json stages = ordered_json::array();
    for (const auto& s : c.pack.stage_plan.stages) stages.push_back({{"window", s.window_tokens}, {"data_share", s.data_share}});
    j["pack"] = {{"window", c.pack.window},
                 {"tokens_per_step", c.pack.stage_plan.tokens_per_step},
                 {"stages", stages},
                 {"lr",
                  {{"stage1_terminal_lr", c.pack.lr.stage1_terminal_lr},
                   {"stage2_peak_factor", c.pack.lr.stage2_peak_factor},
                   {"warmup_steps", c.pack.lr.warmup_steps}}}};
  }
  if (c.enabled("schedule")) {
    const auto& cur = c.schedule.curriculum;
    j["schedule"] = {{"core", c.schedule.core},
                     {"downstream", c.schedule.downstream},
                     {"lambda", cur.mixing_lambda},
                     {"batch_size", cur.batch_size},
                     {"epochs", cur.epochs},
                     {"num_batches", cur.num_batches ? ordered_json(*cur.num_batches) : ordered_json(nullptr)}};
  }
  if (c.enabled("hipo")) {
    const auto& run = c.hipo.run;
    j["hipo"] = {{"samples", c.hipo.samples},
                 {"metric", to_string(run.metric)},
                 {"beta", run.hipo.beta},
                 {"nll_lambda", run.hipo.nll_lambda},
                 {"nll_normalization", run.hipo.nll == NllNormalization::kSum ? "sum" : "mean_per_token"},
                 {"tau", run.hipo.hard_threshold},
                 {"iterations", c.hipo.iterations},
                 {"generations", run.generations_per_query},
                 {"temperature", run.temperature},
                 {"max_tokens", run.max_tokens},
                 {"aggregate", run.aggregate == OutcomeAggregate::kMin ? "min" : "mean"}};
  }
  return j;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const PipelineConfig& c) { return hex64(fnv1a64(resolved_config(c).dump())); }

// In-process mock for "mock://" endpoints, HTTP otherwise.
inline std::shared_ptr<ChatTransport> make_transport(const EndpointConfig& cfg, LogSink log = {}) {
  if (cfg.base_url.rfind("mock:", 0) == 0) return make_mock_transport();
  return std::make_shared<HttpTransport>(cfg, std::move(log));
}

struct PipelineOutcome {
  int exit_code = kExitOk;
  ordered_json report;
};

class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidArgument("cannot open " + p.string());
  return in;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + p.string());
  out << text;
}

template <typename T>
void write_jsonl_file(const std::filesystem::path& p, std::span<const T> records) {
  std::ostringstream os;
  write_jsonl(os, records);
  write_text(p, os.str());
}

inline std::vector<std::string> ids_of(std::span<const InstructionSample> samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

inline ordered_json parse_errors_json(std::span<const ParseError> errors) {
  ordered_json j = ordered_json::array();
  for (const auto& e : errors) j.push_back({{"line", e.line_no()}, {"error", e.what()}});
  return j;
}

}  // namespace detail

// Runs every enabled stage in order filter, score, enhance, mix, pack,
// schedule, hipo. Relative paths resolve against base_dir. A transport may be
// injected; otherwise one is built from the endpoint config. Config errors
// throw ConfigError before any work starts; stage failures are reported in
// the returned outcome with a partial report on disk.
inline PipelineOutcome run_pipeline(const json& raw_config, const std::filesystem::path& base_dir,
                                    std::shared_ptr<ChatTransport> transport = nullptr) {
  namespace fs = std::filesystem;
  const auto started = std::chrono::steady_clock::now();
  const PipelineConfig cfg = load_pipeline_config(raw_config);
  if (cfg.output_dir.empty()) throw ConfigError("output_dir", "required");
  const fs::path out_dir = detail::resolve(base_dir, cfg.output_dir);
  fs::create_directories(out_dir);

  PipelineOutcome outcome;
  auto& report = outcome.report;
  report["config_hash"] = config_hash(cfg);
  report["seed"] = cfg.seed;
  report["resolved_config"] = resolved_config(cfg);
  report["stages"] = ordered_json::object();
  report["artifacts"] = ordered_json::array();
  auto& stages = report["stages"];
  auto artifact = [&](const std::string& name) { report["artifacts"].push_back(name); return out_dir / name; };

  std::optional<InferenceClient> client;
  auto get_client = [&]() -> const InferenceClient& {
    if (!client) client.emplace(transport ? transport : make_transport(cfg.endpoint), cfg.endpoint);
    return *client;
  };

  std::string current = "input";
  try {
    std::vector<Document> docs;
    const bool needs_docs = cfg.enabled("filter") || cfg.enabled("score") || cfg.enabled("mix") || cfg.enabled("pack");
    if (needs_docs) {
      auto in = detail::open_input(detail::resolve(base_dir, cfg.input));
      auto read = read_documents(in, make_token_counter(cfg.token_counter));
      docs = std::move(read.records);
      stages["input"] = {{"documents", docs.size()}, {"parse_errors", detail::parse_errors_json(read.errors)}};
    }

    if (cfg.enabled("filter")) {
      current = "filter";
      auto result = filter_corpus(docs, cfg.filter);
      docs = std::move(result.kept);
      detail::write_jsonl_file<Document>(artifact("filtered.jsonl"), docs);
      stages["filter"] = to_json(result.stats);
    }

    if (cfg.enabled("score")) {
      current = "score";
      ScoringOptions opts;
      opts.sample_n = cfg.score.sample_n;
      opts.seed = derive_seed(cfg.seed, "score");
      opts.temperature = cfg.score.temperature;
      opts.max_tokens = cfg.score.max_tokens;
      opts.parse_retries = cfg.score.parse_retries;
      const auto scored = score_corpus(docs, get_client(), opts);
      detail::write_jsonl_file<Document>(artifact("scored.jsonl"), scored);
      std::vector<Document> ok;
      std::array<std::uint64_t, 6> histogram{};
      for (const auto& d : scored) {
        if (!d.score) continue;
        ++histogram[static_cast<std::size_t>(*d.score)];
        ok.push_back(d);
      }
      docs = threshold_filter(ok, cfg.score.tau);
      stages["score"] = {{"scored", scored.size()},
                         {"errors", scored.size() - ok.size()},
                         {"histogram", histogram},
                         {"tau", cfg.score.tau},
                         {"kept", docs.size()}};
    }

    if (cfg.enabled("enhance")) {
      current = "enhance";
      auto in = detail::open_input(detail::resolve(base_dir, cfg.enhance.statutes));
      const auto statutes = read_statutes(in);
      std::vector<ChatRequest> reqs;
      for (const auto& s : statutes.records) {
        ChatRequest req = user_request(build_synthesis_prompt(s, cfg.enhance.dims), std::string(kSynthesisSystemPrompt));
        req.model = cfg.endpoint.model;
        reqs.push_back(std::move(req));
      }
      const auto results = get_client().batch_complete(reqs);
      std::vector<SynthesizedPair> pairs;
      std::uint64_t failed = 0, incomplete = 0;
      ordered_json failures = ordered_json::array();
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& id = statutes.records[i].id;
        try {
          if (!results[i].ok()) throw EndpointError(results[i].status, results[i].error);
          auto parsed = parse_synthesis_output(results[i].response->content, cfg.enhance.dims, id);
          if (!parsed.coverage.complete()) ++incomplete;
          for (auto& p : parsed.pairs) pairs.push_back(std::move(p));
        } catch (const Error& e) {
          ++failed;
          failures.push_back({{"statute_id", id}, {"error", e.what()}});
        }
      }
      std::uint64_t generated = pairs.size();
      if (cfg.enhance.score_synthesized && !pairs.empty()) {
        std::vector<Document> as_docs;
        for (const auto& p : pairs) {
          as_docs.push_back(make_document(p.statute_id + "#" + std::string(to_string(p.dimension)),
                                          p.instruction + "\n" + p.output, Lang::kZh, Source::kArticlesInterpretations,
                                          make_token_counter(cfg.token_counter)));
        }
        ScoringOptions opts;
        opts.seed = derive_seed(cfg.seed, "enhance-score");
        const auto scored = score_corpus(as_docs, get_client(), opts);
        std::vector<SynthesizedPair> kept;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          if (scored[i].score && *scored[i].score >= cfg.enhance.tau) kept.push_back(std::move(pairs[i]));
        }
        pairs = std::move(kept);
      }
      detail::write_jsonl_file<SynthesizedPair>(artifact("synthesized.jsonl"), pairs);
      stages["enhance"] = {{"statutes", statutes.records.size()},
                           {"parse_errors", detail::parse_errors_json(statutes.errors)},
                           {"failed", failed},
                           {"incomplete_coverage", incomplete},
                           {"generated_pairs", generated},
                           {"kept_pairs", pairs.size()},
                           {"failures", failures}};
    }

    if (cfg.enabled("mix")) {
      current = "mix";
      const auto manifest = build_manifest(docs);
      Budgets budgets = cfg.mix.budgets;
      for (const auto& e : manifest.entries) {
        if (budgets.count(e.key())) continue;
        const auto f = cfg.mix.fractions.find(e.key());
        const double frac = f == cfg.mix.fractions.end() ? 1.0 : f->second;
        budgets[e.key()] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(frac * static_cast<double>(*e.total_tokens))));
      }
      for (const auto& [key, _] : cfg.mix.fractions) {
        if (!budgets.count(key)) throw UnknownSource(key);
      }
      const auto plan = plan_sampling(manifest, budgets, derive_seed(cfg.seed, "mix"));
      const auto check = check_ratios(plan, cfg.mix.targets);
      auto sampled = execute_sampling(docs, plan);
      docs = std::move(sampled.docs);
      ordered_json plan_json = to_json(plan);
      plan_json["ratio_check"] = to_json(check, cfg.mix.targets);
      detail::write_text(artifact("mix_plan.json"), plan_json.dump(2) + "\n");
      detail::write_jsonl_file<Document>(artifact("mixed.jsonl"), docs);
      ordered_json per_source = ordered_json::array();
      for (const auto& st : sampled.stats) {
        per_source.push_back({{"key", st.key},
                              {"stream_tokens", st.stream_tokens},
                              {"target_tokens", st.target_tokens},
                              {"sampled_tokens", st.sampled_tokens},
                              {"sampled_documents", st.sampled_documents}});
      }
      stages["mix"] = {{"documents", docs.size()}, {"sources", per_source}, {"ratio_check", to_json(check, cfg.mix.targets)}};
      if (cfg.mix.enforce_targets && !check.pass()) outcome.exit_code = kExitAcceptance;
    }

    if (cfg.enabled("pack")) {
      current = "pack";
      std::uint64_t total = 0;
      for (const auto& d : docs) total += d.token_count;
      const auto plan = pack_documents(docs, cfg.pack.window);
      if (cfg.pack.stage_plan.tokens_per_step % cfg.pack.window != 0) {
        throw IndivisibleStep(cfg.pack.window, cfg.pack.stage_plan.tokens_per_step);
      }
      const Stage stage{cfg.pack.window, total, cfg.pack.stage_plan.tokens_per_step / cfg.pack.window};
      const auto steps = step_batches(plan, stage);
      ordered_json j;
      j["total_tokens"] = total;
      j["stage_plan"] = total > 0 ? to_json(make_stage_plan(total, cfg.pack.stage_plan)) : ordered_json(nullptr);
      j["packing"] = to_json(plan);
      j["steps"] = ordered_json::array();
      for (const auto& s : steps) j["steps"].push_back(to_json(s));
      detail::write_text(artifact("pack_plan.json"), j.dump(2) + "\n");
      stages["pack"] = {{"total_tokens", total},
                        {"window", plan.window},
                        {"sequences", plan.sequences.size()},
                        {"pad_tokens", plan.pad_tokens()},
                        {"pad_fraction", plan.pad_fraction()},
                        {"steps", steps.size()},
                        {"warmup_peak_lr", cfg.pack.lr.peak()}};
    }

    if (cfg.enabled("schedule")) {
      current = "schedule";
      auto core_in = detail::open_input(detail::resolve(base_dir, cfg.schedule.core));
      auto down_in = detail::open_input(detail::resolve(base_dir, cfg.schedule.downstream));
      const auto core = read_instruction_samples(core_in);
      const auto down = read_instruction_samples(down_in);
      const auto core_ids = detail::ids_of(core.records);
      const auto down_ids = detail::ids_of(down.records);
      auto cur = cfg.schedule.curriculum;
      cur.seed = derive_seed(cfg.seed, "schedule");
      const auto s1 = stage1_batches(core_ids, cur.batch_size, cur.seed);
      const auto s2 = stage2_batches(core_ids, down_ids, cur);
      ordered_json j;
      j["core_quota"] = core_quota(cur.mixing_lambda, cur.batch_size);
      j["stage1"] = ordered_json::array();
      for (const auto& b : s1) j["stage1"].push_back(to_json(b));
      j["stage2"] = ordered_json::array();
      for (const auto& b : s2) j["stage2"].push_back(to_json(b));
      detail::write_text(artifact("psft_schedule.json"), j.dump(2) + "\n");
      const auto observed = mixing_stats(s2);
      stages["schedule"] = {{"core_samples", core_ids.size()},
                            {"downstream_samples", down_ids.size()},
                            {"parse_errors", core.errors.size() + down.errors.size()},
                            {"core_quota", core_quota(cur.mixing_lambda, cur.batch_size)},
                            {"stage1_batches", s1.size()},
                            {"stage2_batches", s2.size()},
                            {"observed_core_share", observed ? ordered_json(*observed) : ordered_json(nullptr)}};
    }

    if (cfg.enabled("hipo")) {
      current = "hipo";
      auto in = detail::open_input(detail::resolve(base_dir, cfg.hipo.samples));
      const auto samples = read_instruction_samples(in);
      const auto ids = detail::ids_of(samples.records);
      HipoState state = initial_state(ids);
      std::vector<PreferencePair> all_pairs;
      ordered_json rounds = ordered_json::array();
      for (std::size_t it = 0; it < cfg.hipo.iterations && !state.active.empty(); ++it) {
        auto round = run_hipo_round(state, samples.records, get_client(), cfg.hipo.run);
        rounds.push_back({{"iteration", state.iteration},
                          {"active", state.active.size()},
                          {"hard", round.hard.size()},
                          {"pairs", round.pairs.size()},
                          {"failed_generations", round.failed_generations}});
        for (auto& p : round.pairs) all_pairs.push_back(std::move(p));
        state = std::move(round.next_state);
      }
      detail::write_text(artifact("hipo_state.json"), to_json(state).dump(2) + "\n");
      detail::write_jsonl_file<PreferencePair>(artifact("preference_pairs.jsonl"), all_pairs);
      stages["hipo"] = {{"samples", ids.size()},
                        {"rounds", rounds},
                        {"final_active", state.active.size()},
                        {"resolved", state.resolved.size()},
                        {"preference_pairs", all_pairs.size()}};
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    outcome.exit_code = kExitStage;
    report["error"] = {{"stage", current}, {"message", e.what()}};
  }

  report["status"] = outcome.exit_code == kExitOk       ? "ok"
                     : outcome.exit_code == kExitStage ? "stage_failed"
                                                       : "acceptance_failed";
  report["wall_clock_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
  detail::write_text(out_dir / "report.json", report.dump(2) + "\n");
  return outcome;
}

}  // namespace lexforge
