#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caslie/datamodel.hpp"
#include "caslie/pipeline.hpp"

namespace caslie {

/// A label extracted from model output, or the reason none could be.
struct ParsedLabel {
  std::optional<std::string> value;
  std::string failure;

  bool ok() const { return value.has_value(); }
  static ParsedLabel success(std::string v) { return {std::move(v), {}}; }
  static ParsedLabel failed(std::string why) { return {std::nullopt, std::move(why)}; }
};

/// First non-empty line, case-folded, punctuation and underscores turned into
/// spaces, whitespace collapsed.
std::string normalize_output(std::string_view raw);

/// Binary tasks accept a leading yes/no token, else exactly one of the two
/// anywhere in the line. Class and option tasks accept a unique exact match,
/// else a unique word-bounded substring match (a match contained in a longer
/// match is dropped). Option tasks also accept letter references such as
/// "option B" or a bare "B". The returned value is the stored label form.
ParsedLabel parse_prediction(TaskKind task, std::string_view raw, const LabelSpace& space,
                             std::span<const std::string> options = {});

/// Options of a sample in display order.
std::vector<std::string> sample_options(const Sample& sample);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> classes);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  /// Throws DataError for labels outside the class list.
  void add(std::string_view predicted, std::string_view gold);
  void add(std::size_t predicted, std::size_t gold, std::uint64_t n = 1);
  std::uint64_t at(std::size_t predicted, std::size_t gold) const { return counts_[predicted][gold]; }
  std::uint64_t total() const;
  std::size_t index_of(std::string_view label) const;

 private:
  std::vector<std::string> classes_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

/// trace / total; absent when nothing was evaluated.
std::optional<double> accuracy(const ConfusionMatrix& cm);

struct MacroPRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  /// Some class had 0/0 precision or recall, counted as 0.
  bool zero_division = false;
};

/// Unweighted class means; macro F1 is the mean of per-class F1.
std::optional<MacroPRF> macro_prf(const ConfusionMatrix& cm);

struct BinaryF1 {
  double f1 = 0;
  /// No predicted and no gold positives; F1 reported as 0.
  bool degenerate = false;
};

std::optional<BinaryF1> binary_f1(const ConfusionMatrix& cm, std::string_view positive);

struct ScoredPrediction {
  std::string sample_id;
  TaskKind task = TaskKind::kAP;
  Split split = Split::kTrain;
  std::string gold;
  ParsedLabel parsed;
};

/// Hits over evaluated predictions; failures leave the denominator.
std::optional<double> recall_at_1(std::span<const ScoredPrediction> predictions);

/// Joins records with their samples and parses every output. Throws DataError
/// naming sample ids that lack a record, records without a sample, and task
/// mismatches.
std::vector<ScoredPrediction> score_records(std::span<const PipelineRecord> records,
                                            std::span<const Sample> dataset,
                                            const LabelConfig& labels = {});

struct TaskMetrics {
  TaskKind task = TaskKind::kAP;
  Split split = Split::kTrain;
  std::size_t size = 0;
  std::size_t evaluated = 0;
  std::size_t failed = 0;
  std::optional<double> accuracy;
  std::optional<double> binary_f1;
  std::optional<double> macro_precision;
  std::optional<double> macro_recall;
  std::optional<double> macro_f1;
  std::optional<double> recall_at_1;
  bool zero_division = false;
  bool degenerate_f1 = false;
  std::optional<double> caption_usage;

  std::optional<double> primary() const;
};

/// "f1" for AP/PSI, "accuracy" for MPC, "macro_f1" for PRP/SA, "recall@1" for
/// CC/SR.
std::string_view primary_metric(TaskKind task);

struct MetricReport {
  /// Ordered by task, then split.
  std::vector<TaskMetrics> blocks;

  const TaskMetrics* find(TaskKind task, Split split) const;
};

MetricReport build_report(std::span<const PipelineRecord> records, std::span<const Sample> dataset,
                          const LabelConfig& labels = {});
MetricReport build_report(std::span<const ScoredPrediction> predictions,
                          std::span<const PipelineRecord> records, const LabelConfig& labels = {});

nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
MetricReport read_report(const std::filesystem::path& path);

/// Aligned plain-text table, one row per task and split.
std::string format_report(const MetricReport& report);

struct MetricDelta {
  TaskKind task = TaskKind::kAP;
  Split split = Split::kTrain;
  std::string metric;
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> delta;
  /// (a - b) / b, absent when b is absent or zero.
  std::optional<double> relative;
};

struct ReportDiff {
  std::vector<MetricDelta> rows;
  /// Mean of the defined per-row relative improvements of a over b.
  std::optional<double> mean_relative_improvement;
};

/// Compares primary metrics of every task/split block present in either report.
ReportDiff diff_reports(const MetricReport& a, const MetricReport& b);

nlohmann::json to_json(const ReportDiff& diff);
std::string format_diff(const ReportDiff& diff);

}  // namespace caslie
