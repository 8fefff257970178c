#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lexforge/pipeline.hpp"

using namespace lexforge;
namespace fs = std::filesystem;

namespace {

const fs::path kData = LEXFORGE_DATA_DIR;

json example_config() {
  std::ifstream in(kData / "pipeline.json");
  return json::parse(in);
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lexforge_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool has_issue(const std::vector<ConfigIssue>& issues, const std::string& path) {
  for (const auto& i : issues) {
    if (i.path == path) return true;
  }
  return false;
}

json all_disabled() {
  json j = {{"seed", 1}, {"output_dir", "out"}, {"stages", json::object()}};
  for (auto s : kStageNames) j["stages"][std::string(s)] = false;
  return j;
}

}  // namespace

TEST(Config, ExampleValidates) {
  const auto issues = validate_config(example_config());
  for (const auto& i : issues) ADD_FAILURE() << i.path << ": " << i.message;
  EXPECT_TRUE(issues.empty());
}

TEST(Config, MissingSectionForEnabledStage) {
  auto j = example_config();
  j.erase("hipo");
  EXPECT_TRUE(has_issue(validate_config(j), "hipo"));
  try {
    load_pipeline_config(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "hipo");
  }
  j["stages"]["hipo"] = false;
  EXPECT_TRUE(validate_config(j).empty());
}

TEST(Config, RangeErrorsNameTheField) {
  auto j = example_config();
  j["schedule"]["lambda"] = 1.5;
  j["hipo"]["beta"] = 0;
  j["pack"]["window"] = 8000;
  j["score"]["tau"] = 6;
  j["mix"]["fractions"]["zh/general_industry"] = 0.0;
  const auto issues = validate_config(j);
  for (const auto* p : {"schedule.lambda", "hipo.beta", "pack.window", "score.tau", "mix.fractions.zh/general_industry"}) {
    EXPECT_TRUE(has_issue(issues, p)) << p;
  }
  EXPECT_TRUE(has_issue(validate_config(json::array()), ""));
}

TEST(Config, UnknownStageAndBadEnums) {
  auto j = example_config();
  j["stages"]["distill"] = true;
  j["token_counter"] = "bpe";
  j["hipo"]["metric"] = "BLEU";
  j["enhance"]["dims"] = "Procedural";
  const auto issues = validate_config(j);
  EXPECT_TRUE(has_issue(issues, "stages.distill"));
  EXPECT_TRUE(has_issue(issues, "token_counter"));
  EXPECT_TRUE(has_issue(issues, "hipo.metric"));
  EXPECT_TRUE(has_issue(issues, "enhance.dims"));
}

TEST(Config, PathsMustBeDistinct) {
  auto j = example_config();
  j["schedule"]["downstream"] = "./core_samples.jsonl";
  EXPECT_TRUE(has_issue(validate_config(j), "schedule.downstream"));
}

TEST(Config, HashIgnoresOutputDirOnly) {
  auto a = example_config(), b = a;
  b["output_dir"] = "elsewhere";
  EXPECT_EQ(config_hash(load_pipeline_config(a)), config_hash(load_pipeline_config(b)));
  b["seed"] = 7;
  EXPECT_NE(config_hash(load_pipeline_config(a)), config_hash(load_pipeline_config(b)));
  EXPECT_EQ(config_hash(load_pipeline_config(a)).size(), 16u);
}

TEST(Run, AllStagesDisabled) {
  const auto dir = scratch("disabled");
  const auto out = run_pipeline(all_disabled(), dir);
  EXPECT_EQ(out.exit_code, kExitOk);
  EXPECT_TRUE(out.report["stages"].empty());
  EXPECT_TRUE(out.report["artifacts"].empty());
  EXPECT_EQ(out.report["status"], "ok");
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
}

TEST(Run, ConfigErrorThrowsBeforeWork) {
  auto j = example_config();
  j["hipo"]["beta"] = -1;
  const auto dir = scratch("bad_config");
  EXPECT_THROW(run_pipeline(j, dir), ConfigError);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Run, ExampleIsDeterministic) {
  auto j = example_config();
  const auto a = scratch("det_a"), b = scratch("det_b");
  j["output_dir"] = (a / "out").string();
  const auto ra = run_pipeline(j, kData);
  j["output_dir"] = (b / "out").string();
  const auto rb = run_pipeline(j, kData);
  ASSERT_EQ(ra.exit_code, kExitOk) << ra.report.dump(2);
  ASSERT_EQ(rb.exit_code, kExitOk);
  ASSERT_EQ(ra.report["artifacts"], rb.report["artifacts"]);
  EXPECT_EQ(ra.report["artifacts"].size(), 9u);
  for (const auto& name : ra.report["artifacts"]) {
    const auto n = name.get<std::string>();
    EXPECT_EQ(slurp(a / "out" / n), slurp(b / "out" / n)) << n;
  }
  auto strip = [](ordered_json r) {
    r.erase("wall_clock_ms");
    return r.dump();
  };
  EXPECT_EQ(strip(ra.report), strip(rb.report));
  for (auto s : kStageNames) EXPECT_TRUE(ra.report["stages"].contains(std::string(s))) << s;
  EXPECT_TRUE(ra.report["stages"]["mix"]["ratio_check"].is_object());
}

TEST(Run, MissingInputIsStageFailure) {
  auto j = all_disabled();
  j["stages"]["filter"] = true;
  j["filter"] = json::object();
  j["input"] = "no_such_corpus.jsonl";
  const auto dir = scratch("missing_input");
  const auto out = run_pipeline(j, dir);
  EXPECT_EQ(out.exit_code, kExitStage);
  EXPECT_EQ(out.report["error"]["stage"], "input");
  EXPECT_EQ(out.report["status"], "stage_failed");
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
}

TEST(Run, BadStatutesPathFailsEnhanceAfterEarlierStages) {
  auto j = example_config();
  j["enhance"]["statutes"] = "missing_statutes.jsonl";
  const auto dir = scratch("bad_statutes");
  j["output_dir"] = (dir / "out").string();
  const auto out = run_pipeline(j, kData);
  EXPECT_EQ(out.exit_code, kExitStage);
  EXPECT_EQ(out.report["error"]["stage"], "enhance");
  EXPECT_TRUE(out.report["stages"].contains("score"));
  EXPECT_FALSE(out.report["stages"].contains("mix"));
  EXPECT_TRUE(fs::exists(dir / "out" / "scored.jsonl"));
}

TEST(Run, FailingEndpointIsolatesDocuments) {
  auto j = all_disabled();
  j["stages"]["score"] = true;
  j["input"] = (kData / "mini_corpus.jsonl").string();
  j["endpoint"] = {{"base_url", "mock://"}, {"retry", {{"max_attempts", 1}}}};
  j["score"] = {{"tau", 0}};
  const auto dir = scratch("failing_endpoint");
  auto transport = std::make_shared<MockTransport>([](const ChatRequest&, std::size_t) -> ChatResponse {
    throw EndpointError(500, "down");
  });
  const auto out = run_pipeline(j, dir, transport);
  EXPECT_EQ(out.exit_code, kExitOk);
  const auto& s = out.report["stages"]["score"];
  EXPECT_EQ(s["errors"], s["scored"]);
  EXPECT_EQ(s["kept"], 0);
}

TEST(Run, UnmetRatioTargetsExitThree) {
  auto j = example_config();
  j["mix"]["fractions"]["zh/general_industry"] = 0.05;
  const auto dir = scratch("ratio");
  j["output_dir"] = (dir / "out").string();
  const auto out = run_pipeline(j, kData);
  EXPECT_EQ(out.exit_code, kExitAcceptance);
  EXPECT_EQ(out.report["status"], "acceptance_failed");
}
