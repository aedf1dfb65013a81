#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "caslie/datamodel.hpp"
#include "caslie/inference.hpp"
#include "caslie/pipeline.hpp"

namespace caslie {

/// Settings for `caslie run`. Relative paths are resolved against the
/// directory of the config file.
///
///   {
///     "endpoints": {"<name>": {"base_url", "model", "api_key_env", "vision", ...}},
///     "captioner": "<name>", "task_model": "<name>", "voters": ["<name>", ...],
///     "strategy": "uia" | "mv" | "single:<name>",
///     "templates": dir, "cache_dir": dir, "output_dir": dir,
///     "datasets": [file or dir, ...],
///     "seed": 42, "concurrency": 4, "gate_with_image": false,
///     "sentiment_classes": [...]
///   }
struct RunConfig {
  std::vector<EndpointConfig> endpoints;
  std::string captioner;
  std::string task_model;
  std::vector<std::string> voters;
  std::string strategy = "mv";
  std::filesystem::path templates;
  std::filesystem::path cache_dir;
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> datasets;
  std::uint64_t seed = 42;
  int concurrency = 4;
  bool gate_with_image = false;
  LabelConfig labels;

  /// Every violated invariant; empty when the config is usable.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing all problems.
  void validate() const;

  GateStrategy gate_strategy() const;
  PipelineConfig pipeline_config() const;
  /// SHA-256 of the canonical serialized config.
  std::string digest() const;
};

/// Throws ConfigError listing every malformed field.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace caslie
