#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "caslie/config.hpp"
#include "caslie/error.hpp"
#include "synthetic.hpp"

using namespace caslie;
namespace t = caslie::testing;

namespace {

nlohmann::json valid_config(const std::filesystem::path& data) {
  return {{"endpoints",
           {{"cap", {{"base_url", "http://127.0.0.1:9/v1"}, {"model", "vlm"}, {"vision", true}}},
            {"llm", {{"base_url", "http://127.0.0.1:9/v1"}, {"model", "llm"}, {"api_key_env", "LLM_KEY"}}},
            {"a", {{"base_url", "http://127.0.0.1:9/v1"}, {"model", "a"}}},
            {"b", {{"base_url", "http://127.0.0.1:9/v1"}, {"model", "b"}}},
            {"c", {{"base_url", "http://127.0.0.1:9/v1"}, {"model", "c"}}}}},
          {"captioner", "cap"},
          {"task_model", "llm"},
          {"voters", {"a", "b", "c"}},
          {"strategy", "mv"},
          {"templates", t::template_dir().string()},
          {"output_dir", "out"},
          {"cache_dir", "cache"},
          {"datasets", {data.string()}}};
}

std::filesystem::path data_dir() {
  const auto d = t::fresh_dir("cfg-data");
  write_samples(d / "ap_ind_test.jsonl", {t::make_sample(TaskKind::kAP, 2)});
  return d;
}

}  // namespace

TEST(RunConfig, ValidConfigParses) {
  const auto data = data_dir();
  const auto base = t::fresh_dir("cfg-base");
  const auto c = run_config_from_json(valid_config(data), base);
  EXPECT_TRUE(c.problems().empty());
  EXPECT_EQ(c.endpoints.size(), 5u);
  EXPECT_EQ(c.output_dir, base / "out");
  EXPECT_EQ(c.cache_dir, base / "cache");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.concurrency, 4);
  const auto gs = c.gate_strategy();
  EXPECT_EQ(gs.kind, StrategyKind::kMajority);
  EXPECT_EQ(gs.voters, (std::vector<std::string>{"a", "b", "c"}));
  const auto pc = c.pipeline_config();
  EXPECT_EQ(pc.captioner, "cap");
  EXPECT_EQ(pc.task_model, "llm");
}

TEST(RunConfig, LoadFromFileResolvesRelativePaths) {
  const auto data = data_dir();
  const auto dir = t::fresh_dir("cfg-file");
  {
    std::ofstream out(dir / "run.json");
    out << valid_config(data).dump(2);
  }
  const auto c = load_run_config(dir / "run.json");
  EXPECT_EQ(c.output_dir, dir / "out");
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
  {
    std::ofstream out(dir / "bad.json");
    out << "{";
  }
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
}

TEST(RunConfig, EveryProblemListed) {
  auto j = valid_config(data_dir());
  j["captioner"] = "llm";  // text-only
  j["voters"] = {"a", "ghost"};
  j["concurrency"] = 0;
  j["datasets"] = {"/nonexistent/caslie/data"};
  const auto c = run_config_from_json(j, "/");
  const auto p = c.problems();
  auto has = [&](const std::string& needle) {
    return std::any_of(p.begin(), p.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
  };
  EXPECT_TRUE(has("must be vision-capable"));
  EXPECT_TRUE(has("'ghost' is not a declared endpoint"));
  EXPECT_TRUE(has("concurrency"));
  EXPECT_TRUE(has("dataset path does not exist"));
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, MalformedFieldsRejected) {
  auto j = valid_config(data_dir());
  j["seed"] = -1;
  j["voters"] = "a";
  j.erase("captioner");
  try {
    run_config_from_json(j, "/");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("seed"), std::string::npos);
    EXPECT_NE(msg.find("voters"), std::string::npos);
    EXPECT_NE(msg.find("missing field: captioner"), std::string::npos);
  }
}

TEST(RunConfig, InlineSecretsRejected) {
  auto j = valid_config(data_dir());
  j["endpoints"]["llm"]["api_key"] = "sk-live";
  EXPECT_THROW(run_config_from_json(j, "/"), ConfigError);
}

TEST(RunConfig, StrategyVariants) {
  auto j = valid_config(data_dir());
  j["strategy"] = "single:b";
  EXPECT_EQ(run_config_from_json(j, "/").gate_strategy().voters, std::vector<std::string>{"b"});
  j["strategy"] = "uia";
  EXPECT_TRUE(run_config_from_json(j, "/").problems().empty());
  j["strategy"] = "weighted";
  EXPECT_FALSE(run_config_from_json(j, "/").problems().empty());
  j["strategy"] = "mv";
  j["voters"] = nlohmann::json::array();
  EXPECT_FALSE(run_config_from_json(j, "/").problems().empty());
}

TEST(RunConfig, GateImagesNeedVisionVoters) {
  auto j = valid_config(data_dir());
  j["gate_with_image"] = true;
  EXPECT_FALSE(run_config_from_json(j, "/").problems().empty());
  for (const char* v : {"a", "b", "c"}) j["endpoints"][v]["vision"] = true;
  EXPECT_TRUE(run_config_from_json(j, "/").problems().empty());
}

TEST(RunConfig, DigestIgnoresWhereOutputGoes) {
  const auto data = data_dir();
  const auto a = run_config_from_json(valid_config(data), "/tmp/a");
  const auto b = run_config_from_json(valid_config(data), "/tmp/b");
  EXPECT_EQ(a.digest(), b.digest());
  auto j = valid_config(data);
  j["seed"] = 7;
  EXPECT_NE(run_config_from_json(j, "/tmp/a").digest(), a.digest());
  j = valid_config(data);
  j["endpoints"]["llm"]["temperature"] = 0.7;
  EXPECT_NE(run_config_from_json(j, "/tmp/a").digest(), a.digest());
}

TEST(RunConfig, JsonRoundTrip) {
  const auto c = run_config_from_json(valid_config(data_dir()), "/base");
  const auto back = run_config_from_json(to_json(c), "/elsewhere");
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.digest(), c.digest());
}

TEST(RunConfig, SentimentClassesOverride) {
  auto j = valid_config(data_dir());
  j["sentiment_classes"] = {"Good", "Bad"};
  const auto c = run_config_from_json(j, "/");
  EXPECT_EQ(c.labels.sentiment_classes, (std::vector<std::string>{"Good", "Bad"}));
  j["sentiment_classes"] = nlohmann::json::array();
  EXPECT_FALSE(run_config_from_json(j, "/").problems().empty());
}
