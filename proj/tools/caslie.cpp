// caslie: curate datasets, run the captioning pipeline, evaluate and compare runs.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "caslie/config.hpp"
#include "caslie/curation.hpp"
#include "caslie/error.hpp"
#include "caslie/eval.hpp"
#include "caslie/pipeline.hpp"
#include "caslie/prompting.hpp"

namespace fs = std::filesystem;
using namespace caslie;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t c = s.find(',', pos);
    if (c == std::string::npos) c = s.size();
    auto item = normalize_label(s.substr(pos, c - pos));
    if (!item.empty()) out.push_back(item);
    pos = c + 1;
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

LabelConfig labels_from(const std::string& sentiment) {
  LabelConfig labels;
  if (!sentiment.empty()) labels.sentiment_classes = split_list(sentiment);
  return labels;
}

void require_valid(const std::vector<Sample>& samples, const LabelConfig& labels) {
  std::vector<std::string> problems;
  for (const auto& s : samples)
    for (const auto& v : validate_sample(s, labels)) problems.push_back(s.id + ": " + v);
  if (problems.empty()) return;
  std::string msg = std::to_string(problems.size()) + " sample violation(s):";
  for (std::size_t i = 0; i < problems.size() && i < 50; ++i) msg += "\n  " + problems[i];
  throw DataError(msg);
}

struct CurateArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::uint64_t seed = 42;
  std::size_t train_cap = 8000;
  std::size_t eval_cap = 1000;
  std::size_t cc_categories = 100;
  std::size_t sr_negatives = 9;
  std::string sentiment;
};

int cmd_curate(const CurateArgs& a) {
  std::vector<RawRecord> records;
  std::vector<std::string> problems;
  for (const auto& in : a.inputs) {
    try {
      auto part = read_raw_records(in);
      records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    } catch (const DataError& e) {
      problems.push_back(in + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    for (const auto& p : problems) std::cerr << "error: " << p << "\n";
    return kExitConfig;
  }
  CurationOptions opts;
  opts.plan.seed = a.seed;
  opts.plan.caps = {a.train_cap, a.eval_cap, a.eval_cap, a.eval_cap};
  opts.cc_ind_categories = a.cc_categories;
  opts.cc_ood_categories = a.cc_categories;
  opts.sr_negatives = a.sr_negatives;
  opts.labels = labels_from(a.sentiment);

  const CuratedDataset dataset = curate(records, opts);
  for (const auto& t : dataset.tasks)
    for (const auto& d : t.diagnostics) spdlog::info("{}: {}", to_string(t.task), d);
  const DatasetManifest manifest = write_dataset(dataset, a.out);
  for (const auto& e : manifest.entries)
    std::cout << dataset_file_name(e.task, e.split) << "\t" << e.count << "\t" << e.digest << "\n";
  std::cout << "total\t" << manifest.total() << "\tseed " << a.seed << "\n";
  return kExitOk;
}

struct RunArgs {
  std::string config;
  std::string strategy;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::optional<int> concurrency;
  std::optional<std::size_t> stop_after;
  bool resume = false;
  bool dry = false;
};

int cmd_run(const RunArgs& a) {
  RunConfig config = load_run_config(a.config);
  if (!a.strategy.empty()) config.strategy = a.strategy;
  if (a.seed) config.seed = *a.seed;
  if (!a.output.empty()) config.output_dir = fs::absolute(a.output);
  if (a.concurrency) config.concurrency = *a.concurrency;
  config.validate();

  const TemplateStore templates = TemplateStore::load(config.templates);
  const std::vector<Sample> dataset = load_dataset(config.datasets);
  require_valid(dataset, config.labels);

  if (a.dry) {
    const auto n = dry_run(templates, dataset, config.output_dir, config.pipeline_config().render);
    std::cout << "rendered " << n << " prompt bundles under " << (config.output_dir / "prompts").string() << "\n";
    return kExitOk;
  }

  EndpointRegistry endpoints;
  for (const auto& e : config.endpoints) endpoints.add(e);
  std::unique_ptr<CompletionCache> cache;
  if (!config.cache_dir.empty()) cache = std::make_unique<CompletionCache>(config.cache_dir);
  const Pipeline pipeline(config.pipeline_config(), templates, endpoints, cache.get());

  RunOptions opts;
  opts.output_dir = config.output_dir;
  opts.resume = a.resume;
  opts.stop_after = a.stop_after;
  opts.seed = config.seed;
  opts.manifest_extra = {{"config_digest", config.digest()}};
  const RunResult result = run_pipeline(pipeline, dataset, opts);

  std::size_t failed = 0;
  for (const auto& r : result.records) failed += r.failed ? 1 : 0;
  std::cout << (result.finished ? "finished" : "stopped") << ": " << result.records.size() << " records ("
            << result.processed << " processed, " << result.resumed << " resumed, " << failed
            << " failed), " << endpoints.requests_sent() << " requests\n";
  for (const auto& [task, rate] : caption_usage_rate(result.records))
    std::cout << "caption used " << to_string(task) << ": " << rate << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string records;
  std::vector<std::string> dataset;
  std::string out;
  std::string sentiment;
};

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

MetricReport evaluate(const std::string& records_path, const std::vector<std::string>& dataset_paths,
                      const LabelConfig& labels) {
  const auto records = read_records(records_path);
  const auto dataset = load_dataset(as_paths(dataset_paths));
  return build_report(records, dataset, labels);
}

int cmd_eval(const EvalArgs& a) {
  const MetricReport report = evaluate(a.records, a.dataset, labels_from(a.sentiment));
  const std::string table = format_report(report);
  if (!a.out.empty()) {
    fs::path json_path = a.out;
    write_file(json_path, to_json(report).dump(2) + "\n");
    write_file(fs::path(json_path).replace_extension(".txt"), table);
  }
  std::cout << table;
  return kExitOk;
}

struct DiffArgs {
  std::string a;
  std::string b;
  std::vector<std::string> dataset;
  std::string out;
  std::string sentiment;
};

MetricReport report_or_records(const std::string& path, const DiffArgs& args) {
  if (fs::path(path).extension() == ".jsonl") {
    if (args.dataset.empty()) throw ConfigError("--dataset is required when diffing record files");
    return evaluate(path, args.dataset, labels_from(args.sentiment));
  }
  return read_report(path);
}

int cmd_diff(const DiffArgs& a) {
  const ReportDiff diff = diff_reports(report_or_records(a.a, a), report_or_records(a.b, a));
  if (!a.out.empty()) write_file(a.out, to_json(diff).dump(2) + "\n");
  std::cout << format_diff(diff);
  return kExitOk;
}

struct ExportArgs {
  std::string records;
  std::vector<std::string> dataset;
  std::string out;
  std::string sentiment;
};

std::string answer_text(const Sample& s, const LabelConfig& labels) {
  if (label_space_for(s.task, labels).kind != LabelKind::kPerSampleOptions) return display_label(s.task, s.gold);
  for (const auto& opt : sample_options(s))
    if (normalize_label(opt) == s.gold) return opt;
  return s.gold;
}

int cmd_export(const ExportArgs& a) {
  const LabelConfig labels = labels_from(a.sentiment);
  const auto records = read_records(a.records);
  const auto dataset = load_dataset(as_paths(a.dataset));
  std::map<std::string, const Sample*> by_id;
  for (const auto& s : dataset) by_id[s.id] = &s;

  std::string out;
  std::size_t written = 0, skipped = 0;
  for (const auto& r : records) {
    auto it = by_id.find(r.sample_id);
    if (it == by_id.end()) throw DataError("record without a sample: " + r.sample_id);
    if (r.fused_prompt.empty()) {
      ++skipped;
      continue;
    }
    const Sample& s = *it->second;
    nlohmann::json line = {{"id", s.id},
                           {"task", to_string(s.task)},
                           {"split", to_string(s.split)},
                           {"prompt", r.fused_prompt},
                           {"completion", answer_text(s, labels)}};
    out += line.dump() + "\n";
    ++written;
  }
  write_file(a.out, out);
  std::cout << "wrote " << written << " pairs to " << a.out;
  if (skipped) std::cout << " (" << skipped << " records without a fused prompt skipped)";
  std::cout << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caslie: context-conditioned captioning, caption gating, and task inference"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  CurateArgs curate_args;
  auto* curate_cmd = app.add_subcommand("curate", "Build per-task split files from raw source records");
  curate_cmd->add_option("-i,--input", curate_args.inputs, "Raw record files (JSON lines)")->required()->check(
      CLI::ExistingFile);
  curate_cmd->add_option("-o,--out", curate_args.out, "Output directory")->required();
  curate_cmd->add_option("--seed", curate_args.seed, "Seed for splitting and downsampling")->capture_default_str();
  curate_cmd->add_option("--train-cap", curate_args.train_cap, "Training samples per task")->capture_default_str();
  curate_cmd->add_option("--eval-cap", curate_args.eval_cap, "Validation and test samples per task")
      ->capture_default_str();
  curate_cmd->add_option("--cc-categories", curate_args.cc_categories, "Categories per CC domain")
      ->capture_default_str();
  curate_cmd->add_option("--sr-negatives", curate_args.sr_negatives, "Negative candidates per SR target")
      ->capture_default_str();
  curate_cmd->add_option("--sentiment-classes", curate_args.sentiment, "Comma-separated SA classes");

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Caption, gate, and predict every sample");
  run_cmd->add_option("-c,--config", run_args.config, "Run configuration file")->required()->check(
      CLI::ExistingFile);
  run_cmd->add_option("--strategy", run_args.strategy, "uia, mv, or single:<voter>");
  run_cmd->add_option("--seed", run_args.seed, "Override the configured seed");
  run_cmd->add_option("-o,--output", run_args.output, "Override the output directory");
  run_cmd->add_option("--concurrency", run_args.concurrency, "Samples processed at once");
  run_cmd->add_option("--stop-after", run_args.stop_after,
                      "Process only the first N samples and leave the run resumable");
  run_cmd->add_flag("--resume", run_args.resume, "Keep records from an earlier partial run");
  run_cmd->add_flag("--dry-run", run_args.dry, "Render prompt bundles without contacting any endpoint");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a record file against its dataset");
  eval_cmd->add_option("-r,--records", eval_args.records, "records.jsonl")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-d,--dataset", eval_args.dataset, "Dataset files or directories")->required()->check(
      CLI::ExistingPath);
  eval_cmd->add_option("-o,--out", eval_args.out, "Report path (.json; a .txt table is written beside it)");
  eval_cmd->add_option("--sentiment-classes", eval_args.sentiment, "Comma-separated SA classes");

  DiffArgs diff_args;
  auto* diff_cmd = app.add_subcommand("diff", "Compare primary metrics of two runs (A relative to B)");
  diff_cmd->add_option("a", diff_args.a, "Report (.json) or records (.jsonl) of run A")->required()->check(
      CLI::ExistingFile);
  diff_cmd->add_option("b", diff_args.b, "Report (.json) or records (.jsonl) of run B")->required()->check(
      CLI::ExistingFile);
  diff_cmd->add_option("-d,--dataset", diff_args.dataset, "Dataset, needed for record files")->check(
      CLI::ExistingPath);
  diff_cmd->add_option("-o,--out", diff_args.out, "Write the diff as JSON");
  diff_cmd->add_option("--sentiment-classes", diff_args.sentiment, "Comma-separated SA classes");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export-finetune", "Write fused prompt / gold answer pairs");
  export_cmd->add_option("-r,--records", export_args.records, "records.jsonl")->required()->check(
      CLI::ExistingFile);
  export_cmd->add_option("-d,--dataset", export_args.dataset, "Dataset files or directories")->required()->check(
      CLI::ExistingPath);
  export_cmd->add_option("-o,--out", export_args.out, "Output JSON lines file")->required();
  export_cmd->add_option("--sentiment-classes", export_args.sentiment, "Comma-separated SA classes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto logger = spdlog::stderr_color_mt("caslie");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*curate_cmd) return cmd_curate(curate_args);
    if (*run_cmd) return cmd_run(run_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*diff_cmd) return cmd_diff(diff_args);
    if (*export_cmd) return cmd_export(export_args);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
