#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caslie/datamodel.hpp"
#include "caslie/inference.hpp"
#include "caslie/prompting.hpp"

namespace caslie {

enum class StrategyKind { kUseAlways, kSingle, kMajority };

std::string_view to_string(StrategyKind kind);

/// How captions are gated: UIA keeps every caption, Single defers to one voter,
/// MV takes the majority of several voters.
struct GateStrategy {
  StrategyKind kind = StrategyKind::kUseAlways;
  /// Voter endpoint names; one for Single, one or more for MV.
  std::vector<std::string> voters;

  static GateStrategy use_always() { return {StrategyKind::kUseAlways, {}}; }
  static GateStrategy single(std::string voter) { return {StrategyKind::kSingle, {std::move(voter)}}; }
  static GateStrategy majority(std::vector<std::string> voters) {
    return {StrategyKind::kMajority, std::move(voters)};
  }

  /// "uia", "mv", "single:<voter>". "mv" takes its voters from `mv_voters`.
  static GateStrategy parse(std::string_view text, const std::vector<std::string>& mv_voters);
  std::string label() const;

  /// Throws ConfigError on an empty voter list; returns warnings (even MV
  /// voter count).
  std::vector<std::string> validate() const;
};

enum class VoteValue { kYes, kNo, kAbstain };

std::string_view to_string(VoteValue v);

/// Case-insensitive yes/no reading of a gate answer. Surrounding whitespace,
/// quotes, and terminal punctuation are ignored; otherwise the first line must
/// start with "yes"/"no" followed by a non-letter. Anything else abstains.
VoteValue parse_vote(std::string_view raw);

struct Vote {
  std::string voter;
  std::string raw;
  VoteValue parsed = VoteValue::kAbstain;
  /// Set when the voter call failed; such votes abstain.
  std::string error;
};

enum class Decision { kUse, kDiscard };

std::string_view to_string(Decision d);

/// Yes-votes strictly exceeding no-votes among non-abstaining voters means
/// use; ties and all-abstain discard.
Decision majority_decision(std::span<const VoteValue> votes);

struct Verdict {
  std::vector<Vote> votes;
  Decision decision = Decision::kDiscard;
  StrategyKind strategy = StrategyKind::kUseAlways;
  /// Why the gate was skipped, e.g. "caption failed".
  std::string note;
};

struct CaptionResult {
  std::string text;
  bool failed = false;
  std::string error;
};

struct StageTimings {
  double caption_ms = 0;
  double gate_ms = 0;
  double predict_ms = 0;
};

/// Full trace of one sample through the three stages.
struct PipelineRecord {
  std::string sample_id;
  TaskKind task = TaskKind::kAP;
  Split split = Split::kTrain;
  std::vector<CaptionResult> captions;
  std::vector<Verdict> verdicts;
  std::string fused_prompt;
  std::string fused_prompt_digest;
  std::string raw_output;
  std::string finish_reason;
  bool failed = false;
  std::string failure;
  /// Not serialized into the record file; written to a timing sidecar so the
  /// record file stays byte-reproducible.
  StageTimings timings;
};

nlohmann::json to_json(const PipelineRecord& record);
PipelineRecord record_from_json(const nlohmann::json& j);
std::vector<PipelineRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, std::span<const PipelineRecord> records);

/// Named endpoints shared by all stages.
class EndpointRegistry {
 public:
  void add(EndpointConfig config);
  ChatClient& at(const std::string& name) const;
  bool contains(const std::string& name) const { return clients_.count(name) > 0; }
  std::uint64_t requests_sent() const;

 private:
  std::map<std::string, std::unique_ptr<ChatClient>> clients_;
};

struct PipelineConfig {
  std::string captioner;
  std::string task_model;
  GateStrategy strategy;
  RenderOptions render;
  /// Samples processed concurrently.
  int concurrency = 4;
};

class Pipeline {
 public:
  /// Throws ConfigError if endpoints are missing or the captioner is not
  /// vision-capable. `cache` may be null.
  Pipeline(PipelineConfig config, const TemplateStore& templates, EndpointRegistry& endpoints,
           CompletionCache* cache);

  const PipelineConfig& config() const { return config_; }
  const TemplateStore& templates() const { return templates_; }

  /// One caption per image, produced with the task's captioning template.
  /// Failures are recorded per image and never thrown.
  std::vector<CaptionResult> caption_stage(const Sample& sample) const;

  /// Gates the caption of image `item`. A failed caption is discarded without
  /// consulting voters.
  Verdict gate_stage(const Sample& sample, std::size_t item, const CaptionResult& caption) const;

  /// Renders the task prompt with exactly the accepted captions and stores the
  /// raw answer. Transport failures mark the record failed.
  PipelineRecord fuse_and_predict(const Sample& sample, const std::vector<CaptionResult>& captions,
                                  const std::vector<Verdict>& verdicts) const;

  PipelineRecord process(const Sample& sample) const;

 private:
  Completion call(const std::string& endpoint, const RenderedPrompt& prompt) const;

  PipelineConfig config_;
  const TemplateStore& templates_;
  EndpointRegistry& endpoints_;
  CompletionCache* cache_;
};

struct RunOptions {
  std::filesystem::path output_dir;
  /// Keep records from an earlier partial run and process only the rest.
  bool resume = false;
  /// Stop after this many samples (in input order) without finalizing the
  /// run, leaving the partial record log behind as an interrupted run would.
  std::optional<std::size_t> stop_after;
  std::uint64_t seed = 42;
  /// Extra entries for the run manifest (e.g. config digest).
  nlohmann::json manifest_extra = nlohmann::json::object();
};

struct RunResult {
  /// In input order.
  std::vector<PipelineRecord> records;
  std::size_t processed = 0;
  std::size_t resumed = 0;
  bool finished = false;
  nlohmann::json manifest;
};

inline constexpr const char* kRecordsFile = "records.jsonl";
inline constexpr const char* kPartialRecordsFile = "records.partial.jsonl";
inline constexpr const char* kTimingsFile = "timings.jsonl";
inline constexpr const char* kRunManifestFile = "run_manifest.json";

/// Runs every sample, appending each finished record to the partial log, then
/// writes records.jsonl (input order) and run_manifest.json.
RunResult run_pipeline(const Pipeline& pipeline, std::span<const Sample> dataset, const RunOptions& options);

/// Renders captioning prompts and the caption-free task prompt per sample
/// under <output_dir>/prompts/ without contacting any endpoint.
std::size_t dry_run(const TemplateStore& templates, std::span<const Sample> dataset,
                    const std::filesystem::path& output_dir, const RenderOptions& options = {});

/// Fraction of verdicts that decided use, per task. Multi-image tasks count
/// every per-image verdict. Tasks with no verdicts are absent.
std::map<TaskKind, double> caption_usage_rate(std::span<const PipelineRecord> records);

}  // namespace caslie
