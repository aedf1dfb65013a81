#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace caslie {

enum class TaskKind { kAP, kCC, kPRP, kPSI, kMPC, kSA, kSR };

inline constexpr std::array<TaskKind, 7> kAllTasks = {
    TaskKind::kAP,  TaskKind::kCC, TaskKind::kPRP, TaskKind::kPSI,
    TaskKind::kMPC, TaskKind::kSA, TaskKind::kSR};

/// "AP", "CC", ...
std::string_view to_string(TaskKind task);
/// "ap", "cc", ... as used in file names.
std::string task_slug(TaskKind task);
/// Accepts either casing. Throws DataError on unknown names.
TaskKind parse_task(std::string_view name);

enum class Split { kTrain, kValidation, kIndTest, kOodTest };

inline constexpr std::array<Split, 4> kAllSplits = {
    Split::kTrain, Split::kValidation, Split::kIndTest, Split::kOodTest};

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// PSI and MPC have no out-of-domain test set.
bool split_allowed(TaskKind task, Split split);

struct ImageRef {
  std::string locator;
  std::optional<int> width;
  std::optional<int> height;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

/// One task instance. Context is a flat map of named text fields; SR history
/// items live under "history.<i>.title|category|brand" and option lists are
/// newline-separated text in "options".
struct Sample {
  std::string id;
  TaskKind task = TaskKind::kAP;
  std::map<std::string, std::string> context;
  std::vector<ImageRef> images;
  std::string gold;
  Split split = Split::kTrain;
  /// Unrecognized top-level fields, kept verbatim for round-trips.
  nlohmann::json extra = nlohmann::json::object();
};

enum class LabelKind { kBinary, kFixedClasses, kPerSampleOptions };

struct LabelSpace {
  TaskKind task = TaskKind::kAP;
  LabelKind kind = LabelKind::kBinary;
  std::vector<std::string> classes;
};

struct LabelConfig {
  std::vector<std::string> sentiment_classes = {
      "very positive", "positive", "neutral", "negative", "very negative"};
};

LabelSpace label_space_for(TaskKind task, const LabelConfig& config = {});

/// Lowercase, trimmed label text.
std::string normalize_label(std::string_view label);

/// Splits an options field on newlines, trimming entries and dropping blanks.
std::vector<std::string> parse_options(std::string_view text);

// Context keys used by the task layouts and templates.
namespace field {
inline constexpr const char* kQuestion = "question";
inline constexpr const char* kReview = "review";
inline constexpr const char* kTitle = "title";
inline constexpr const char* kQuery = "query";
inline constexpr const char* kOptions = "options";
inline constexpr const char* kTitle1 = "title_1";
inline constexpr const char* kTitle2 = "title_2";
}  // namespace field

std::string history_key(std::size_t index, std::string_view attribute);

/// Required context fields for a task. SR additionally requires one
/// title/category/brand triple per history item.
struct TaskFields {
  std::vector<std::string> fields;
  std::vector<std::string> per_history_item;
};

const TaskFields& required_fields(TaskKind task);

/// Number of contiguous history items present ("history.0.title", ...).
std::size_t history_length(const Sample& sample);

/// Every key the sample must carry, including expanded history keys.
std::vector<std::string> expanded_required_fields(const Sample& sample);

/// All invariant violations, empty when the sample is well-formed.
std::vector<std::string> validate_sample(const Sample& sample,
                                         const LabelConfig& config = {});

nlohmann::json to_json(const Sample& sample);
Sample sample_from_json(const nlohmann::json& j);

/// Reads a line-delimited sample file. Throws DataError with line numbers.
std::vector<Sample> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path,
                   const std::vector<Sample>& samples);

/// "<task>_<split>.jsonl"
std::string dataset_file_name(TaskKind task, Split split);

/// Loads every sample file from a list of files or directories. Directory
/// entries are read in file-name order.
std::vector<Sample> load_dataset(
    const std::vector<std::filesystem::path>& paths);

struct ManifestEntry {
  TaskKind task = TaskKind::kAP;
  Split split = Split::kTrain;
  std::size_t count = 0;
  std::string digest;
  std::string file;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 42;

  std::size_t total() const;
  std::size_t split_total(Split split) const;
  const ManifestEntry* find(TaskKind task, Split split) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

struct SplitCaps {
  std::size_t train = 8000;
  std::size_t validation = 1000;
  std::size_t ind_test = 1000;
  std::size_t ood_test = 1000;

  std::size_t cap(Split split) const;
};

/// Checks the full published dataset shape: per-task caps, no OOD for PSI and
/// MPC, and totals 56,000 / 7,000 / 7,000 / 5,000.
std::vector<std::string> check_full_shape(const DatasetManifest& manifest,
                                          const SplitCaps& caps = {});

}  // namespace caslie
