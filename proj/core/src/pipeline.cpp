#include "caslie/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "caslie/digest.hpp"
#include "caslie/error.hpp"

namespace caslie {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string lower_trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_wrapper(char c) {
  return c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':' || c == '"' ||
         c == '\'' || c == '`' || c == '*' || c == ')' || c == '(' ||
         std::isspace(static_cast<unsigned char>(c));
}

std::string strip_wrappers(std::string s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_wrapper(s[b])) ++b;
  while (e > b && is_wrapper(s[e - 1])) --e;
  return s.substr(b, e - b);
}

bool prefix_word(std::string_view line, std::string_view word) {
  if (!line.starts_with(word)) return false;
  if (line.size() == word.size()) return true;
  return !std::isalpha(static_cast<unsigned char>(line[word.size()]));
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

StrategyKind parse_strategy_kind(std::string_view s) {
  if (s == "uia") return StrategyKind::kUseAlways;
  if (s == "single") return StrategyKind::kSingle;
  if (s == "mv") return StrategyKind::kMajority;
  throw DataError("unknown strategy: " + std::string(s));
}

VoteValue parse_vote_value(std::string_view s) {
  if (s == "yes") return VoteValue::kYes;
  if (s == "no") return VoteValue::kNo;
  if (s == "abstain") return VoteValue::kAbstain;
  throw DataError("unknown vote: " + std::string(s));
}

std::string safe_file_stem(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? std::string("_") : out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

nlohmann::json timings_json(const PipelineRecord& r) {
  return {{"sample_id", r.sample_id},
          {"caption_ms", r.timings.caption_ms},
          {"gate_ms", r.timings.gate_ms},
          {"predict_ms", r.timings.predict_ms}};
}

// Records from an earlier run; a torn trailing line is ignored.
std::map<std::string, PipelineRecord> load_previous(const std::filesystem::path& dir) {
  std::map<std::string, PipelineRecord> out;
  for (const char* name : {kRecordsFile, kPartialRecordsFile}) {
    std::ifstream in(dir / name);
    if (!in) continue;
    std::string line;
    while (std::getline(in, line)) {
      if (blank(line)) continue;
      try {
        PipelineRecord r = record_from_json(nlohmann::json::parse(line));
        out.emplace(r.sample_id, std::move(r));
      } catch (const std::exception& e) {
        spdlog::warn("skipping unreadable record line in {}: {}", name, e.what());
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kUseAlways: return "uia";
    case StrategyKind::kSingle: return "single";
    case StrategyKind::kMajority: return "mv";
  }
  return "?";
}

GateStrategy GateStrategy::parse(std::string_view text, const std::vector<std::string>& mv_voters) {
  if (text == "uia") return use_always();
  if (text == "mv") return majority(mv_voters);
  if (text.starts_with("single:") && text.size() > 7) return single(std::string(text.substr(7)));
  throw ConfigError("unknown gate strategy '" + std::string(text) +
                    "' (expected uia, mv, or single:<voter>)");
}

std::string GateStrategy::label() const {
  if (kind == StrategyKind::kSingle) return "single:" + (voters.empty() ? std::string() : voters[0]);
  return std::string(to_string(kind));
}

std::vector<std::string> GateStrategy::validate() const {
  std::vector<std::string> warnings;
  switch (kind) {
    case StrategyKind::kUseAlways:
      break;
    case StrategyKind::kSingle:
      if (voters.size() != 1 || voters[0].empty())
        throw ConfigError("single strategy needs exactly one voter");
      break;
    case StrategyKind::kMajority:
      if (voters.empty()) throw ConfigError("mv strategy needs at least one voter");
      if (voters.size() % 2 == 0)
        warnings.push_back("mv with an even number of voters (" + std::to_string(voters.size()) +
                           ") can tie; ties discard");
      break;
  }
  return warnings;
}

std::string_view to_string(VoteValue v) {
  switch (v) {
    case VoteValue::kYes: return "yes";
    case VoteValue::kNo: return "no";
    case VoteValue::kAbstain: return "abstain";
  }
  return "?";
}

VoteValue parse_vote(std::string_view raw) {
  const std::string whole = strip_wrappers(lower_trim(raw));
  if (whole == "yes") return VoteValue::kYes;
  if (whole == "no") return VoteValue::kNo;

  std::string first = lower_trim(raw);
  if (auto nl = first.find('\n'); nl != std::string::npos) first.resize(nl);
  std::size_t b = 0;
  while (b < first.size() && (first[b] == '"' || first[b] == '\'' || first[b] == '*' ||
                              std::isspace(static_cast<unsigned char>(first[b]))))
    ++b;
  const std::string_view line = std::string_view(first).substr(b);
  if (prefix_word(line, "yes")) return VoteValue::kYes;
  if (prefix_word(line, "no")) return VoteValue::kNo;
  return VoteValue::kAbstain;
}

std::string_view to_string(Decision d) { return d == Decision::kUse ? "use" : "discard"; }

Decision majority_decision(std::span<const VoteValue> votes) {
  std::size_t yes = 0, no = 0;
  for (VoteValue v : votes) {
    if (v == VoteValue::kYes) ++yes;
    if (v == VoteValue::kNo) ++no;
  }
  return yes > no ? Decision::kUse : Decision::kDiscard;
}

nlohmann::json to_json(const PipelineRecord& r) {
  nlohmann::json captions = nlohmann::json::array();
  for (const auto& c : r.captions)
    captions.push_back({{"text", c.text}, {"failed", c.failed}, {"error", c.error}});
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : r.verdicts) {
    nlohmann::json votes = nlohmann::json::array();
    for (const auto& vote : v.votes)
      votes.push_back({{"voter", vote.voter},
                       {"raw", vote.raw},
                       {"parsed", to_string(vote.parsed)},
                       {"error", vote.error}});
    verdicts.push_back({{"strategy", to_string(v.strategy)},
                        {"decision", to_string(v.decision)},
                        {"note", v.note},
                        {"votes", std::move(votes)}});
  }
  return {{"sample_id", r.sample_id},
          {"task", to_string(r.task)},
          {"split", to_string(r.split)},
          {"captions", std::move(captions)},
          {"verdicts", std::move(verdicts)},
          {"fused_prompt", r.fused_prompt},
          {"fused_prompt_digest", r.fused_prompt_digest},
          {"raw_output", r.raw_output},
          {"finish_reason", r.finish_reason},
          {"failed", r.failed},
          {"failure", r.failure}};
}

PipelineRecord record_from_json(const nlohmann::json& j) {
  try {
    PipelineRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.task = parse_task(j.at("task").get<std::string>());
    r.split = parse_split(j.at("split").get<std::string>());
    for (const auto& c : j.at("captions"))
      r.captions.push_back({c.at("text").get<std::string>(), c.at("failed").get<bool>(),
                            c.value("error", std::string())});
    for (const auto& v : j.at("verdicts")) {
      Verdict verdict;
      verdict.strategy = parse_strategy_kind(v.at("strategy").get<std::string>());
      verdict.decision = v.at("decision").get<std::string>() == "use" ? Decision::kUse : Decision::kDiscard;
      verdict.note = v.value("note", std::string());
      for (const auto& vote : v.at("votes"))
        verdict.votes.push_back({vote.at("voter").get<std::string>(), vote.at("raw").get<std::string>(),
                                 parse_vote_value(vote.at("parsed").get<std::string>()),
                                 vote.value("error", std::string())});
      r.verdicts.push_back(std::move(verdict));
    }
    r.fused_prompt = j.value("fused_prompt", std::string());
    r.fused_prompt_digest = j.value("fused_prompt_digest", std::string());
    r.raw_output = j.at("raw_output").get<std::string>();
    r.finish_reason = j.value("finish_reason", std::string());
    r.failed = j.value("failed", false);
    r.failure = j.value("failure", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
}

std::vector<PipelineRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read records: " + path.string());
  std::vector<PipelineRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const PipelineRecord> records) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text(path, text);
}

void EndpointRegistry::add(EndpointConfig config) {
  config.validate();
  if (clients_.count(config.name)) throw ConfigError("duplicate endpoint: " + config.name);
  std::string name = config.name;
  clients_.emplace(std::move(name), std::make_unique<ChatClient>(std::move(config)));
}

ChatClient& EndpointRegistry::at(const std::string& name) const {
  auto it = clients_.find(name);
  if (it == clients_.end()) throw ConfigError("unknown endpoint: " + name);
  return *it->second;
}

std::uint64_t EndpointRegistry::requests_sent() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : clients_) n += c->requests_sent();
  return n;
}

Pipeline::Pipeline(PipelineConfig config, const TemplateStore& templates, EndpointRegistry& endpoints,
                   CompletionCache* cache)
    : config_(std::move(config)), templates_(templates), endpoints_(endpoints), cache_(cache) {
  std::vector<std::string> problems;
  auto require = [&](const std::string& role, const std::string& name) {
    if (name.empty()) problems.push_back(role + ": no endpoint named");
    else if (!endpoints_.contains(name)) problems.push_back(role + ": unknown endpoint '" + name + "'");
  };
  require("captioner", config_.captioner);
  require("task model", config_.task_model);
  for (const auto& v : config_.strategy.voters) require("voter", v);
  if (config_.concurrency < 1) problems.push_back("concurrency must be >= 1");
  try {
    for (const auto& w : config_.strategy.validate()) spdlog::warn("{}", w);
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
  if (problems.empty()) {
    if (!endpoints_.at(config_.captioner).config().vision)
      problems.push_back("captioner '" + config_.captioner + "' is not vision-capable");
    if (config_.render.gate_with_image)
      for (const auto& v : config_.strategy.voters)
        if (!endpoints_.at(v).config().vision)
          problems.push_back("voter '" + v + "' is not vision-capable but gate images are enabled");
  }
  if (!problems.empty()) {
    std::string msg = "invalid pipeline configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

Completion Pipeline::call(const std::string& endpoint, const RenderedPrompt& prompt) const {
  ChatClient& client = endpoints_.at(endpoint);
  return cache_ ? cached_complete(client, prompt, *cache_) : client.complete(prompt);
}

std::vector<CaptionResult> Pipeline::caption_stage(const Sample& sample) const {
  std::vector<CaptionResult> out;
  out.reserve(sample.images.size());
  for (std::size_t i = 0; i < sample.images.size(); ++i) {
    CaptionResult result;
    try {
      const auto prompt = render(templates_, {sample.task, Stage::kCaptioning}, sample, std::nullopt, i,
                                 config_.render);
      Completion c = call(config_.captioner, prompt);
      if (blank(c.text)) {
        result.failed = true;
        result.error = "empty caption (finish_reason: " + c.finish_reason + ")";
      } else {
        result.text = std::move(c.text);
      }
    } catch (const std::exception& e) {
      result.failed = true;
      result.error = e.what();
      spdlog::warn("{}: caption {} failed: {}", sample.id, i, e.what());
    }
    out.push_back(std::move(result));
  }
  return out;
}

Verdict Pipeline::gate_stage(const Sample& sample, std::size_t item, const CaptionResult& caption) const {
  Verdict verdict;
  verdict.strategy = config_.strategy.kind;
  if (caption.failed) {
    verdict.decision = Decision::kDiscard;
    verdict.note = "caption failed";
    return verdict;
  }
  if (config_.strategy.kind == StrategyKind::kUseAlways) {
    verdict.decision = Decision::kUse;
    return verdict;
  }

  RenderedPrompt prompt;
  try {
    prompt = render(templates_, {sample.task, Stage::kGate}, sample, caption.text, item, config_.render);
  } catch (const std::exception& e) {
    verdict.decision = Decision::kDiscard;
    verdict.note = std::string("gate prompt failed: ") + e.what();
    return verdict;
  }

  std::vector<VoteValue> values;
  for (const auto& voter : config_.strategy.voters) {
    Vote vote;
    vote.voter = voter;
    try {
      vote.raw = call(voter, prompt).text;
      vote.parsed = parse_vote(vote.raw);
    } catch (const std::exception& e) {
      vote.parsed = VoteValue::kAbstain;
      vote.error = e.what();
      spdlog::warn("{}: voter {} failed on image {}: {}", sample.id, voter, item, e.what());
    }
    values.push_back(vote.parsed);
    verdict.votes.push_back(std::move(vote));
  }
  verdict.decision = majority_decision(values);
  return verdict;
}

PipelineRecord Pipeline::fuse_and_predict(const Sample& sample, const std::vector<CaptionResult>& captions,
                                          const std::vector<Verdict>& verdicts) const {
  PipelineRecord record;
  record.sample_id = sample.id;
  record.task = sample.task;
  record.split = sample.split;
  record.captions = captions;
  record.verdicts = verdicts;

  std::vector<std::optional<std::string>> accepted(sample.images.size());
  for (std::size_t i = 0; i < accepted.size() && i < captions.size() && i < verdicts.size(); ++i)
    if (verdicts[i].decision == Decision::kUse && !captions[i].failed) accepted[i] = captions[i].text;

  try {
    const auto prompt = render_task(templates_, sample, accepted, config_.render);
    record.fused_prompt = prompt.text;
    record.fused_prompt_digest = sha256_hex(prompt.text);
    Completion c = call(config_.task_model, prompt);
    record.raw_output = std::move(c.text);
    record.finish_reason = std::move(c.finish_reason);
  } catch (const std::exception& e) {
    record.failed = true;
    record.failure = e.what();
    spdlog::warn("{}: prediction failed: {}", sample.id, e.what());
  }
  return record;
}

PipelineRecord Pipeline::process(const Sample& sample) const {
  auto t0 = Clock::now();
  auto captions = caption_stage(sample);
  const double caption_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<Verdict> verdicts;
  verdicts.reserve(captions.size());
  for (std::size_t i = 0; i < captions.size(); ++i) verdicts.push_back(gate_stage(sample, i, captions[i]));
  const double gate_ms = ms_since(t0);

  t0 = Clock::now();
  PipelineRecord record = fuse_and_predict(sample, captions, verdicts);
  record.timings = {caption_ms, gate_ms, ms_since(t0)};
  return record;
}

RunResult run_pipeline(const Pipeline& pipeline, std::span<const Sample> dataset, const RunOptions& options) {
  namespace fs = std::filesystem;
  {
    std::set<std::string> ids;
    for (const auto& s : dataset)
      if (!ids.insert(s.id).second) throw DataError("duplicate sample id: " + s.id);
  }
  fs::create_directories(options.output_dir);

  std::map<std::string, PipelineRecord> previous;
  if (options.resume) previous = load_previous(options.output_dir);

  const std::size_t limit = std::min(dataset.size(), options.stop_after.value_or(dataset.size()));
  std::vector<std::optional<PipelineRecord>> slots(dataset.size());
  std::vector<std::size_t> todo;
  RunResult result;
  for (std::size_t i = 0; i < limit; ++i) {
    auto it = previous.find(dataset[i].id);
    if (it != previous.end() && it->second.task == dataset[i].task) {
      slots[i] = std::move(it->second);
      ++result.resumed;
    } else {
      todo.push_back(i);
    }
  }

  // The partial log keeps every finished record, so an interrupted run can resume.
  std::ofstream partial;
  {
    std::string carried;
    for (std::size_t i = 0; i < limit; ++i)
      if (slots[i]) carried += to_json(*slots[i]).dump() + "\n";
    write_text(options.output_dir / kPartialRecordsFile, carried);
    partial.open(options.output_dir / kPartialRecordsFile, std::ios::binary | std::ios::app);
    if (!partial) throw Error("cannot open partial record log in " + options.output_dir.string());
  }
  std::mutex log_mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const std::size_t i = todo[k];
      try {
        PipelineRecord record = pipeline.process(dataset[i]);
        std::lock_guard lock(log_mu);
        partial << to_json(record).dump() << "\n";
        partial.flush();
        slots[i] = std::move(record);
      } catch (...) {
        std::lock_guard lock(log_mu);
        if (!fatal) fatal = std::current_exception();
        next.store(todo.size());
        return;
      }
    }
  };
  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(pipeline.config().concurrency), todo.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  partial.close();
  if (fatal) std::rethrow_exception(fatal);

  result.processed = todo.size();
  for (std::size_t i = 0; i < limit; ++i) result.records.push_back(std::move(*slots[i]));
  if (limit < dataset.size()) return result;

  write_records(options.output_dir / kRecordsFile, result.records);
  std::string timings;
  for (const auto& r : result.records) timings += timings_json(r).dump() + "\n";
  write_text(options.output_dir / kTimingsFile, timings);

  std::map<std::string, std::size_t> per_task;
  std::size_t failed = 0;
  for (const auto& r : result.records) {
    ++per_task[std::string(to_string(r.task))];
    if (r.failed) ++failed;
  }
  nlohmann::json template_digests = nlohmann::json::object();
  for (TaskKind t : kAllTasks)
    for (Stage s : kAllStages) template_digests[template_file_name({t, s})] = pipeline.templates().digest({t, s});
  result.manifest = options.manifest_extra;
  result.manifest["seed"] = options.seed;
  result.manifest["strategy"] = pipeline.config().strategy.label();
  result.manifest["voters"] = pipeline.config().strategy.voters;
  result.manifest["captioner"] = pipeline.config().captioner;
  result.manifest["task_model"] = pipeline.config().task_model;
  result.manifest["template_digests"] = template_digests;
  result.manifest["counts"] = {{"samples", result.records.size()},
                               {"failed", failed},
                               {"per_task", per_task}};
  std::map<std::string, double> usage;
  for (const auto& [task, rate] : caption_usage_rate(result.records)) usage[std::string(to_string(task))] = rate;
  result.manifest["caption_usage"] = usage;
  write_text(options.output_dir / kRunManifestFile, result.manifest.dump(2) + "\n");
  fs::remove(options.output_dir / kPartialRecordsFile);
  result.finished = true;
  return result;
}

std::size_t dry_run(const TemplateStore& templates, std::span<const Sample> dataset,
                    const std::filesystem::path& output_dir, const RenderOptions& options) {
  const auto dir = output_dir / "prompts";
  std::filesystem::create_directories(dir);
  std::size_t n = 0;
  for (const auto& sample : dataset) {
    nlohmann::json bundle = {{"sample_id", sample.id}, {"task", to_string(sample.task)}};
    nlohmann::json captioning = nlohmann::json::array();
    for (std::size_t i = 0; i < sample.images.size(); ++i) {
      const auto p = render(templates, {sample.task, Stage::kCaptioning}, sample, std::nullopt, i, options);
      nlohmann::json images = nlohmann::json::array();
      for (const auto& img : p.attached_images) images.push_back(img.locator);
      captioning.push_back({{"text", p.text}, {"images", images}});
    }
    bundle["captioning"] = std::move(captioning);
    bundle["task_prompt"] = render_task_without_caption(templates, {sample.task, Stage::kTask}, sample, options).text;
    write_text(dir / (safe_file_stem(sample.id) + ".json"), bundle.dump(2) + "\n");
    ++n;
  }
  return n;
}

std::map<TaskKind, double> caption_usage_rate(std::span<const PipelineRecord> records) {
  std::map<TaskKind, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& r : records)
    for (const auto& v : r.verdicts) {
      auto& [used, total] = counts[r.task];
      ++total;
      if (v.decision == Decision::kUse) ++used;
    }
  std::map<TaskKind, double> out;
  for (const auto& [task, c] : counts)
    if (c.second > 0) out[task] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

}  // namespace caslie
