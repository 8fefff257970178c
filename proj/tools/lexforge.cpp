// lexforge command-line front end. Each subcommand wraps one library stage;
// `run` drives the whole pipeline from a config file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lexforge/lexforge.hpp"

namespace fs = std::filesystem;
using namespace lexforge;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open");
  return in;
}

// "-" means stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-" && !path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw ConfigError(path, "cannot write");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

json read_json_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path, e.what());
  }
}

void report_parse_errors(const std::vector<ParseError>& errors) {
  for (const auto& e : errors) std::cerr << "skipped " << e.what() << "\n";
}

std::vector<Document> load_documents(const std::string& path) {
  auto in = open_in(path);
  auto r = read_documents(in);
  report_parse_errors(r.errors);
  return std::move(r.records);
}

std::vector<InstructionSample> load_samples(const std::string& path) {
  auto in = open_in(path);
  auto r = read_instruction_samples(in);
  report_parse_errors(r.errors);
  return std::move(r.records);
}

InferenceClient make_client(std::string url, int max_in_flight, const std::string& model) {
  if (url.empty()) {
    const char* env = std::getenv("POLILEGAL_ENDPOINT");
    if (env == nullptr || *env == '\0') throw ConfigError("endpoint", "pass --endpoint or set POLILEGAL_ENDPOINT");
    url = env;
  }
  EndpointConfig cfg;
  cfg.base_url = url;
  cfg.max_in_flight = max_in_flight;
  cfg.model = model;
  return InferenceClient(make_transport(cfg, [](const std::string& line) { std::cerr << line << "\n"; }), cfg);
}

CorpusManifest load_manifest(const std::string& spec) {
  if (spec == "cpt") return reference::cpt_corpus_manifest();
  if (spec == "post-training") return reference::post_training_manifest();
  return manifest_from_json(read_json_file(spec));
}

Budgets load_budgets(const std::string& path) {
  Budgets b;
  if (path.empty()) return b;
  for (const auto& [k, v] : read_json_file(path).items()) b[k] = v.get<std::uint64_t>();
  return b;
}

struct EndpointOpts {
  std::string url;
  int max_in_flight = 4;
  std::string model = "default";

  void add(CLI::App* app) {
    app->add_option("--endpoint", url, "Base URL (mock:// for the built-in mock); defaults to $POLILEGAL_ENDPOINT");
    app->add_option("--max-in-flight", max_in_flight, "Concurrent requests")->check(CLI::PositiveNumber);
    app->add_option("--model", model, "Model name sent to the endpoint");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data and training-schedule toolkit for domain-adapted LLMs"};
  app.require_subcommand(1);
  int exit_code = kExitOk;

  // filter
  auto* filter = app.add_subcommand("filter", "Drop documents by length and special-character density");
  std::string f_rules, f_in, f_out = "-", f_stats;
  filter->add_option("--rules", f_rules, "Rule set JSON (defaults apply otherwise)");
  filter->add_option("--in", f_in, "Input JSONL")->required();
  filter->add_option("--out", f_out, "Output JSONL");
  filter->add_option("--stats", f_stats, "Write stats JSON here");
  filter->callback([&] {
    const FilterRuleSet rules = f_rules.empty() ? FilterRuleSet{} : filter_rules_from_json(read_json_file(f_rules));
    auto in = open_in(f_in);
    auto read = read_documents(in);
    report_parse_errors(read.errors);
    auto result = filter_corpus(read.records, rules);
    result.stats.parse_errors = read.errors.size();
    Output out(f_out);
    write_documents(out.stream(), result.kept);
    const auto stats = to_json(result.stats).dump(2);
    if (!f_stats.empty()) Output(f_stats).stream() << stats << "\n";
    else std::cerr << stats << "\n";
  });

  // score
  auto* score = app.add_subcommand("score", "Rate documents 0-5 with an LLM judge");
  EndpointOpts s_ep;
  std::string s_in, s_out = "-";
  std::optional<std::size_t> s_sample;
  std::uint64_t s_seed = 0;
  std::optional<int> s_tau;
  s_ep.add(score);
  score->add_option("--in", s_in, "Input JSONL")->required();
  score->add_option("--out", s_out, "Output JSONL");
  score->add_option("--sample-n", s_sample, "Score a seeded sample of this size");
  score->add_option("--seed", s_seed, "Sampling seed");
  score->add_option("--tau", s_tau, "Keep only documents scoring at least this")->check(CLI::Range(0, 5));
  score->callback([&] {
    auto client = make_client(s_ep.url, s_ep.max_in_flight, s_ep.model);
    const auto docs = load_documents(s_in);
    ScoringOptions opts;
    opts.sample_n = s_sample;
    opts.seed = s_seed;
    auto scored = score_corpus(docs, client, opts);
    std::size_t errors = 0;
    for (const auto& d : scored) errors += d.score ? 0 : 1;
    if (s_tau) {
      std::vector<Document> ok;
      for (const auto& d : scored) {
        if (d.score) ok.push_back(d);
      }
      scored = threshold_filter(ok, *s_tau);
    }
    Output out(s_out);
    write_documents(out.stream(), scored);
    std::cerr << "scored " << (s_sample ? *s_sample : docs.size()) << ", errors " << errors << ", written "
              << scored.size() << "\n";
  });

  // agreement
  auto* agree = app.add_subcommand("agreement", "Compare judge scores with reference scores");
  std::string a_in;
  agree->add_option("--in", a_in, "JSONL of {\"pred\": int, \"gold\": int}")->required();
  agree->callback([&] {
    std::vector<int> preds, golds;
    auto in = open_in(a_in);
    report_parse_errors(for_each_jsonl(in, [&](const json& j, std::size_t) {
      preds.push_back(j.at("pred").get<int>());
      golds.push_back(j.at("gold").get<int>());
    }));
    std::cout << to_json(scorer_agreement(preds, golds)).dump(2) << "\n";
  });

  // enhance
  auto* enhance = app.add_subcommand("enhance", "Synthesize instruction pairs from statutes");
  EndpointOpts e_ep;
  std::string e_statutes, e_dims = "all", e_out = "-";
  e_ep.add(enhance);
  enhance->add_option("--statutes", e_statutes, "Statutes JSONL {id, text}")->required();
  enhance->add_option("--dims", e_dims, "\"all\" or a comma-separated dimension list");
  enhance->add_option("--out", e_out, "Output JSONL");
  enhance->callback([&] {
    const auto dims = parse_dimension_list(e_dims);
    auto client = make_client(e_ep.url, e_ep.max_in_flight, e_ep.model);
    auto in = open_in(e_statutes);
    const auto statutes = read_statutes(in);
    report_parse_errors(statutes.errors);
    std::vector<ChatRequest> reqs;
    for (const auto& s : statutes.records) {
      auto req = user_request(build_synthesis_prompt(s, dims), std::string(kSynthesisSystemPrompt));
      req.model = e_ep.model;
      reqs.push_back(std::move(req));
    }
    const auto results = client.batch_complete(reqs);
    Output out(e_out);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& id = statutes.records[i].id;
      if (!results[i].ok()) {
        std::cerr << id << ": " << results[i].error << "\n";
        exit_code = kExitStage;
        continue;
      }
      try {
        const auto parsed = parse_synthesis_output(results[i].response->content, dims, id);
        if (!parsed.coverage.complete()) std::cerr << id << ": " << to_json(parsed.coverage).dump() << "\n";
        for (const auto& p : parsed.pairs) out.stream() << to_json(p).dump() << "\n";
      } catch (const Error& e) {
        std::cerr << id << ": " << e.what() << "\n";
        exit_code = kExitStage;
      }
    }
  });

  // mix
  auto* mix = app.add_subcommand("mix", "Plan, check and execute token-budgeted sampling");
  mix->require_subcommand(1);
  std::string m_manifest = "cpt", m_budgets, m_in, m_out = "-";
  std::uint64_t m_seed = 0;
  bool m_enforce = false;
  auto add_mix_opts = [&](CLI::App* sub) {
    sub->add_option("--manifest", m_manifest, "Manifest JSON, or the built-in tables cpt / post-training");
    sub->add_option("--budgets", m_budgets, "JSON object of per-source token budgets");
    sub->add_option("--seed", m_seed, "Sampling seed");
  };
  auto* mix_plan = mix->add_subcommand("plan", "Print the sampling plan");
  add_mix_opts(mix_plan);
  mix_plan->callback([&] {
    std::cout << to_json(plan_sampling(load_manifest(m_manifest), load_budgets(m_budgets), m_seed)).dump(2) << "\n";
  });
  auto* mix_check = mix->add_subcommand("check", "Validate a manifest and its language/domain ratios");
  add_mix_opts(mix_check);
  mix_check->add_flag("--enforce", m_enforce, "Exit 3 when a check fails");
  mix_check->callback([&] {
    const auto manifest = load_manifest(m_manifest);
    ordered_json j;
    const auto validation = validate_manifest(manifest);
    j["manifest_valid"] = validation.ok();
    j["issues"] = ordered_json::array();
    for (const auto& i : validation.issues) j["issues"].push_back({{"field", i.field}, {"message", i.message}});
    bool pass = validation.ok();
    if (manifest.totals.sampled_tokens || !m_budgets.empty()) {
      const RatioTargets targets;
      const auto check = check_ratios(plan_sampling(manifest, load_budgets(m_budgets), m_seed), targets);
      j["ratio_check"] = to_json(check, targets);
      pass = pass && check.pass();
    } else {
      const auto mc = check_post_training_mix(manifest);
      j["mix_check"] = {{"general_share", mc.general_share}, {"domain_share", mc.domain_share}, {"pass", mc.pass}};
      pass = pass && mc.pass;
    }
    std::cout << j.dump(2) << "\n";
    if (m_enforce && !pass) exit_code = kExitAcceptance;
  });
  auto* mix_run = mix->add_subcommand("run", "Sample a corpus to the planned fractions");
  add_mix_opts(mix_run);
  mix_run->add_option("--in", m_in, "Input JSONL")->required();
  mix_run->add_option("--out", m_out, "Output JSONL");
  mix_run->callback([&] {
    const auto docs = load_documents(m_in);
    // Without an explicit manifest, plan against the input's own accounting.
    const auto manifest = mix_run->count("--manifest") ? load_manifest(m_manifest) : build_manifest(docs);
    auto budgets = load_budgets(m_budgets);
    const auto plan = plan_sampling(manifest, budgets, m_seed);
    const auto result = execute_sampling(docs, plan);
    Output out(m_out);
    write_documents(out.stream(), result.docs);
    for (const auto& st : result.stats) {
      std::cerr << st.key << ": " << st.sampled_tokens << "/" << st.stream_tokens << " tokens (target "
                << st.target_tokens << ")\n";
    }
  });

  // pack
  auto* pack = app.add_subcommand("pack", "Pack documents into fixed windows and group them into steps");
  std::string p_in, p_out = "-";
  std::uint64_t p_window = 8192, p_step = kTokensPerStep;
  bool p_stage_plan = false;
  pack->add_option("--in", p_in, "Input JSONL")->required();
  pack->add_option("--out", p_out, "Packing plan JSON");
  pack->add_option("--window", p_window, "Sequence window in tokens")->check(CLI::PositiveNumber);
  pack->add_option("--step-tokens", p_step, "Tokens per optimizer step")->check(CLI::PositiveNumber);
  pack->add_flag("--stage-plan", p_stage_plan, "Also emit the default two-stage plan over the input tokens");
  pack->callback([&] {
    if (p_step % p_window != 0) throw ConfigError("--window", IndivisibleStep(p_window, p_step).what());
    const auto docs = load_documents(p_in);
    const auto plan = pack_documents(docs, p_window);
    std::uint64_t total = 0;
    for (const auto& d : docs) total += d.token_count;
    ordered_json j;
    if (p_stage_plan && total > 0) {
      StagePlanConfig spc;
      spc.tokens_per_step = p_step;
      j["stage_plan"] = to_json(make_stage_plan(total, spc));
    }
    j["packing"] = to_json(plan);
    j["steps"] = ordered_json::array();
    for (const auto& s : step_batches(plan, Stage{p_window, total, p_step / p_window})) j["steps"].push_back(to_json(s));
    Output(p_out).stream() << j.dump(2) << "\n";
  });

  // schedule
  auto* schedule = app.add_subcommand("schedule", "Training data schedules");
  schedule->require_subcommand(1);
  auto* psft = schedule->add_subcommand("psft", "Two-stage SFT batch composition with core replay");
  std::string c_core, c_down, c_out = "-";
  CurriculumConfig c_cfg;
  psft->add_option("--core", c_core, "Core task samples JSONL")->required();
  psft->add_option("--downstream", c_down, "Downstream task samples JSONL")->required();
  psft->add_option("--lambda", c_cfg.mixing_lambda, "Core share per stage-2 batch")->check(CLI::Range(0.0, 1.0));
  psft->add_option("--batch", c_cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  psft->add_option("--seed", c_cfg.seed, "Shuffle seed");
  psft->add_option("--epochs", c_cfg.epochs, "Stage-2 epochs")->check(CLI::PositiveNumber);
  psft->add_option("--num-batches", c_cfg.num_batches, "Stop after this many stage-2 batches");
  psft->add_option("--out", c_out, "Schedule JSON");
  psft->callback([&] {
    std::vector<std::string> core, down;
    for (const auto& s : load_samples(c_core)) core.push_back(s.id);
    for (const auto& s : load_samples(c_down)) down.push_back(s.id);
    ordered_json j;
    j["core_quota"] = core_quota(c_cfg.mixing_lambda, c_cfg.batch_size);
    j["stage1"] = ordered_json::array();
    for (const auto& b : stage1_batches(core, c_cfg.batch_size, c_cfg.seed)) j["stage1"].push_back(to_json(b));
    const auto s2 = stage2_batches(core, down, c_cfg);
    j["stage2"] = ordered_json::array();
    for (const auto& b : s2) j["stage2"].push_back(to_json(b));
    const auto share = mixing_stats(s2);
    j["observed_core_share"] = share ? ordered_json(*share) : ordered_json(nullptr);
    Output(c_out).stream() << j.dump(2) << "\n";
  });

  // hipo
  auto* hipo = app.add_subcommand("hipo", "Hard-sample mining and preference optimization objectives");
  hipo->require_subcommand(1);
  std::string h_outcomes, h_samples, h_in, h_out = "-", h_state;
  double h_tau = 0.8;
  HipoConfig h_cfg;
  auto* h_mine = hipo->add_subcommand("mine", "List queries scoring below tau");
  h_mine->add_option("--outcomes", h_outcomes, "Evaluation outcomes JSONL")->required();
  h_mine->add_option("--tau", h_tau, "Hard-sample threshold")->check(CLI::Range(0.0, 1.0));
  h_mine->callback([&] {
    std::vector<EvalOutcome> outcomes;
    auto in = open_in(h_outcomes);
    report_parse_errors(for_each_jsonl(in, [&](const json& j, std::size_t) { outcomes.push_back(eval_outcome_from_json(j)); }));
    for (const auto& id : mine_hard_samples(outcomes, h_tau)) std::cout << id << "\n";
  });
  auto* h_pairs = hipo->add_subcommand("pairs", "Build preference pairs for hard queries");
  h_pairs->add_option("--samples", h_samples, "Samples JSONL with golden answers")->required();
  h_pairs->add_option("--outcomes", h_outcomes, "Evaluation outcomes JSONL")->required();
  h_pairs->add_option("--tau", h_tau, "Hard-sample threshold")->check(CLI::Range(0.0, 1.0));
  h_pairs->add_option("--out", h_out, "Preference pairs JSONL");
  h_pairs->callback([&] {
    std::map<std::string, InstructionSample> by_id;
    for (auto& s : load_samples(h_samples)) by_id.emplace(s.id, s);
    std::vector<EvalOutcome> outcomes;
    auto in = open_in(h_outcomes);
    report_parse_errors(for_each_jsonl(in, [&](const json& j, std::size_t) { outcomes.push_back(eval_outcome_from_json(j)); }));
    const auto hard = mine_hard_samples(outcomes, h_tau);
    Output out(h_out);
    for (const auto& o : outcomes) {
      if (!hard.count(o.query_id)) continue;
      auto it = by_id.find(o.query_id);
      if (it == by_id.end()) throw MissingOutcome(o.query_id);
      if (auto pair = build_preference_pair(it->second, o)) out.stream() << to_json(*pair).dump() << "\n";
    }
  });
  auto* h_loss = hipo->add_subcommand("loss", "Evaluate DPO and DPO+NLL on log-probability records");
  h_loss->add_option("--in", h_in, "JSONL of log-probability quadruples")->required();
  h_loss->add_option("--beta", h_cfg.beta, "Preference temperature")->check(CLI::PositiveNumber);
  h_loss->add_option("--lambda", h_cfg.nll_lambda, "NLL weight")->check(CLI::NonNegativeNumber);
  h_loss->callback([&] {
    auto in = open_in(h_in);
    report_parse_errors(for_each_jsonl(in, [&](const json& j, std::size_t line) {
      const auto q = log_prob_quad_from_json(j);
      ordered_json o;
      o["line"] = line;
      o["margin"] = preference_margin(q);
      o["dpo_loss"] = dpo_loss(q, h_cfg.beta);
      o["hipo_loss"] = hipo_loss(q, h_cfg);
      std::cout << o.dump() << "\n";
    }));
  });
  auto* h_iter = hipo->add_subcommand("iterate", "Run one generate-evaluate-mine round");
  EndpointOpts h_ep;
  std::string h_metric = "Accuracy";
  std::size_t h_gens = 4;
  h_ep.add(h_iter);
  h_iter->add_option("--samples", h_samples, "Samples JSONL with golden answers")->required();
  h_iter->add_option("--state", h_state, "State JSON to resume from (a fresh state otherwise)");
  h_iter->add_option("--metric", h_metric, "Outcome metric");
  h_iter->add_option("--generations", h_gens, "Generations per query")->check(CLI::PositiveNumber);
  h_iter->add_option("--tau", h_tau, "Hard-sample threshold (metric default when omitted)");
  h_iter->add_option("--out", h_out, "Write the next state here");
  h_iter->callback([&] {
    const auto samples = load_samples(h_samples);
    HipoRunOptions opts;
    const auto kind = parse_metric_kind(h_metric);
    if (!kind) throw ConfigError("--metric", "unknown metric " + h_metric);
    opts.metric = *kind;
    opts.generations_per_query = h_gens;
    opts.hipo.hard_threshold = h_iter->count("--tau") ? h_tau : default_hard_threshold(*kind);
    HipoState state;
    if (h_state.empty()) {
      std::vector<std::string> ids;
      for (const auto& s : samples) ids.push_back(s.id);
      state = initial_state(ids);
    } else {
      state = hipo_state_from_json(read_json_file(h_state));
    }
    auto client = make_client(h_ep.url, h_ep.max_in_flight, h_ep.model);
    const auto round = run_hipo_round(state, samples, client, opts);
    std::cerr << "iteration " << state.iteration << ": " << round.hard.size() << " hard of " << state.active.size()
              << ", " << round.pairs.size() << " pairs\n";
    for (const auto& p : round.pairs) std::cerr << to_json(p).dump() << "\n";
    Output(h_out).stream() << to_json(round.next_state).dump(2) << "\n";
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against gold answers");
  std::string v_metric, v_in, v_report;
  MetricOptions v_opts;
  eval->add_option("--metric", v_metric, "Accuracy, MacroF1, F0.5, RougeL, SoftF1, RcF1 or NLD; used for records without one");
  eval->add_option("--in", v_in, "JSONL of {\"task\"?, \"metric\"?, \"pred\", \"gold\"}")->required();
  eval->add_option("--report", v_report, "Write the report JSON here (stdout otherwise)");
  eval->add_option("--nld-max-term", v_opts.nld_max_term, "Maximum term for NLD, in months")->check(CLI::PositiveNumber);
  eval->callback([&] {
    std::optional<MetricKind> fallback;
    if (!v_metric.empty()) {
      fallback = parse_metric_kind(v_metric);
      if (!fallback) throw ConfigError("--metric", "unknown metric " + v_metric);
    }
    // task -> (metric, examples), in first-seen order
    std::vector<std::string> order;
    std::map<std::string, std::pair<MetricKind, std::vector<ScoredExample>>> tasks;
    auto in = open_in(v_in);
    const auto errors = for_each_jsonl(in, [&](const json& j, std::size_t) {
      const auto task = j.value("task", std::string("default"));
      std::optional<MetricKind> kind = fallback;
      if (auto it = j.find("metric"); it != j.end()) kind = parse_metric_kind(it->get<std::string>());
      if (!kind) throw InvalidArgument("record has no known metric");
      auto [it, inserted] = tasks.try_emplace(task, *kind, std::vector<ScoredExample>{});
      if (inserted) order.push_back(task);
      if (it->second.first != *kind) throw InvalidArgument("task " + task + " mixes metrics");
      it->second.second.push_back({j.at("pred"), j.at("gold")});
    });
    report_parse_errors(errors);
    ordered_json j;
    j["tasks"] = ordered_json::array();
    for (const auto& task : order) {
      const auto& [kind, examples] = tasks.at(task);
      j["tasks"].push_back({{"task", task},
                            {"metric", to_string(kind)},
                            {"count", examples.size()},
                            {"score", corpus_score(kind, examples, v_opts)}});
    }
    j["skipped"] = errors.size();
    Output(v_report.empty() ? "-" : v_report).stream() << j.dump(2) << "\n";
  });

  // manifest
  auto* manifest = app.add_subcommand("manifest", "Print and validate corpus manifests");
  std::string mf_spec = "cpt";
  manifest->add_option("--manifest", mf_spec, "Manifest JSON, or the built-in tables cpt / post-training");
  manifest->callback([&] {
    const auto m = load_manifest(mf_spec);
    ordered_json j = to_json(m);
    const auto v = validate_manifest(m);
    j["valid"] = v.ok();
    if (m.totals.sampled_tokens) {
      const auto r = compute_ratios(m);
      j["ratios"] = {{"zh_share", r.zh_en_ratio}, {"domain_share", r.domain_general_ratio}};
    }
    std::cout << j.dump(2) << "\n";
    if (!v.ok()) exit_code = kExitAcceptance;
  });

  // run
  auto* run = app.add_subcommand("run", "Run the configured pipeline end to end");
  std::string r_config, r_report;
  std::optional<std::uint64_t> r_seed;
  run->add_option("--config", r_config, "Pipeline config JSON")->required();
  run->add_option("--seed", r_seed, "Override the config seed");
  run->add_option("--report", r_report, "Also copy the report here");
  run->callback([&] {
    json cfg = read_json_file(r_config);
    if (r_seed) cfg["seed"] = *r_seed;
    const auto issues = validate_config(cfg);
    for (const auto& i : issues) std::cerr << "config: " << i.path << ": " << i.message << "\n";
    if (!issues.empty()) throw ConfigError(issues.front().path, issues.front().message);
    const auto outcome = run_pipeline(cfg, fs::absolute(r_config).parent_path());
    if (!r_report.empty()) Output(r_report).stream() << outcome.report.dump(2) << "\n";
    if (outcome.report.contains("error")) std::cerr << outcome.report["error"].dump() << "\n";
    std::cerr << "status: " << outcome.report["status"].get<std::string>() << "\n";
    exit_code = outcome.exit_code;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return exit_code;
}
