#include "caslie/config.hpp"

#include <fstream>
#include <set>

#include "caslie/digest.hpp"
#include "caslie/error.hpp"

namespace caslie {
namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string join_problems(const std::string& head, const std::vector<std::string>& problems) {
  std::string msg = head;
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

}  // namespace

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  std::set<std::string> names;
  for (const auto& e : endpoints) {
    if (!names.insert(e.name).second) out.push_back("duplicate endpoint: " + e.name);
    try {
      e.validate();
    } catch (const ConfigError& err) {
      out.emplace_back(err.what());
    }
  }
  auto endpoint = [&](const std::string& n) -> const EndpointConfig* {
    for (const auto& e : endpoints)
      if (e.name == n) return &e;
    return nullptr;
  };
  auto require = [&](const std::string& role, const std::string& n) {
    if (n.empty()) out.push_back(role + " not set");
    else if (!endpoint(n)) out.push_back(role + " '" + n + "' is not a declared endpoint");
  };
  require("captioner", captioner);
  require("task_model", task_model);
  if (const auto* c = endpoint(captioner); c && !c->vision)
    out.push_back("captioner '" + captioner + "' must be vision-capable");

  try {
    const GateStrategy gs = gate_strategy();
    gs.validate();
    for (const auto& v : gs.voters) {
      require("voter", v);
      if (const auto* e = endpoint(v); e && gate_with_image && !e->vision)
        out.push_back("voter '" + v + "' is not vision-capable but gate_with_image is set");
    }
  } catch (const ConfigError& err) {
    out.emplace_back(err.what());
  }

  if (templates.empty()) out.emplace_back("templates directory not set");
  else if (!std::filesystem::is_directory(templates))
    out.push_back("templates directory does not exist: " + templates.string());
  if (output_dir.empty()) out.emplace_back("output_dir not set");
  if (datasets.empty()) out.emplace_back("no dataset paths");
  for (const auto& d : datasets)
    if (!std::filesystem::exists(d)) out.push_back("dataset path does not exist: " + d.string());
  if (concurrency < 1) out.emplace_back("concurrency must be >= 1");
  if (labels.sentiment_classes.empty()) out.emplace_back("sentiment_classes must not be empty");
  return out;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (!p.empty()) throw ConfigError(join_problems("invalid run configuration:", p));
}

GateStrategy RunConfig::gate_strategy() const { return GateStrategy::parse(strategy, voters); }

PipelineConfig RunConfig::pipeline_config() const {
  PipelineConfig pc;
  pc.captioner = captioner;
  pc.task_model = task_model;
  pc.strategy = gate_strategy();
  pc.render.labels = labels;
  pc.render.gate_with_image = gate_with_image;
  pc.concurrency = concurrency;
  return pc;
}

std::string RunConfig::digest() const {
  nlohmann::json j = to_json(*this);
  // Where results are written does not change what they are.
  j.erase("output_dir");
  j.erase("cache_dir");
  return sha256_hex(j.dump());
}

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  std::vector<std::string> problems;
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");

  auto str = [&](const char* key, std::string& dst, bool required) {
    if (!j.contains(key)) {
      if (required) problems.push_back(std::string("missing field: ") + key);
      return;
    }
    if (!j.at(key).is_string()) problems.push_back(std::string(key) + " must be a string");
    else dst = j.at(key).get<std::string>();
  };
  auto path = [&](const char* key, std::filesystem::path& dst, bool required) {
    std::string s;
    str(key, s, required);
    if (!s.empty()) dst = resolve(base_dir, s);
  };

  if (!j.contains("endpoints") || !j.at("endpoints").is_object()) {
    problems.emplace_back("endpoints must be an object of name -> endpoint");
  } else {
    for (const auto& [name, e] : j.at("endpoints").items()) {
      try {
        c.endpoints.push_back(endpoint_from_json(name, e));
      } catch (const ConfigError& err) {
        problems.emplace_back(err.what());
      }
    }
  }
  str("captioner", c.captioner, true);
  str("task_model", c.task_model, true);
  str("strategy", c.strategy, false);
  if (j.contains("voters")) {
    if (!j.at("voters").is_array()) problems.emplace_back("voters must be an array of endpoint names");
    else
      for (const auto& v : j.at("voters")) {
        if (v.is_string()) c.voters.push_back(v.get<std::string>());
        else problems.emplace_back("voters must be an array of endpoint names");
      }
  }
  path("templates", c.templates, true);
  path("cache_dir", c.cache_dir, false);
  path("output_dir", c.output_dir, false);
  if (j.contains("datasets")) {
    const auto& d = j.at("datasets");
    if (d.is_string()) c.datasets.push_back(resolve(base_dir, d.get<std::string>()));
    else if (d.is_array())
      for (const auto& p : d) {
        if (p.is_string()) c.datasets.push_back(resolve(base_dir, p.get<std::string>()));
        else problems.emplace_back("datasets must be paths");
      }
    else problems.emplace_back("datasets must be a path or an array of paths");
  }
  if (j.contains("seed")) {
    const auto& seed = j.at("seed");
    if (seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) c.seed = j.at("seed").get<std::uint64_t>();
    else problems.emplace_back("seed must be a non-negative integer");
  }
  if (j.contains("concurrency")) {
    if (j.at("concurrency").is_number_integer()) c.concurrency = j.at("concurrency").get<int>();
    else problems.emplace_back("concurrency must be an integer");
  }
  if (j.contains("gate_with_image")) {
    if (j.at("gate_with_image").is_boolean()) c.gate_with_image = j.at("gate_with_image").get<bool>();
    else problems.emplace_back("gate_with_image must be a boolean");
  }
  if (j.contains("sentiment_classes")) {
    const auto& s = j.at("sentiment_classes");
    if (!s.is_array()) problems.emplace_back("sentiment_classes must be an array of strings");
    else {
      c.labels.sentiment_classes.clear();
      for (const auto& v : s) {
        if (v.is_string()) c.labels.sentiment_classes.push_back(v.get<std::string>());
        else problems.emplace_back("sentiment_classes must be an array of strings");
      }
    }
  }
  if (!problems.empty()) throw ConfigError(join_problems("invalid run configuration:", problems));
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json endpoints = nlohmann::json::object();
  for (const auto& e : c.endpoints) endpoints[e.name] = to_json(e);
  std::vector<std::string> datasets;
  for (const auto& d : c.datasets) datasets.push_back(d.string());
  return {{"endpoints", endpoints},
          {"captioner", c.captioner},
          {"task_model", c.task_model},
          {"voters", c.voters},
          {"strategy", c.strategy},
          {"templates", c.templates.string()},
          {"cache_dir", c.cache_dir.string()},
          {"output_dir", c.output_dir.string()},
          {"datasets", datasets},
          {"seed", c.seed},
          {"concurrency", c.concurrency},
          {"gate_with_image", c.gate_with_image},
          {"sentiment_classes", c.labels.sentiment_classes}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::filesystem::absolute(path).parent_path());
}

}  // namespace caslie
