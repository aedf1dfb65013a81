#include "caslie/datamodel.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "caslie/error.hpp"

namespace caslie {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  auto b = std::find_if(s.begin(), s.end(), not_space);
  auto e = std::find_if(s.rbegin(), s.rend(), not_space).base();
  return b < e ? std::string_view(&*b, static_cast<std::size_t>(e - b))
               : std::string_view{};
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

const std::set<std::string>& known_sample_fields() {
  static const std::set<std::string> kFields = {"id",     "task", "split",
                                                "context", "images", "gold"};
  return kFields;
}

}  // namespace

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kAP: return "AP";
    case TaskKind::kCC: return "CC";
    case TaskKind::kPRP: return "PRP";
    case TaskKind::kPSI: return "PSI";
    case TaskKind::kMPC: return "MPC";
    case TaskKind::kSA: return "SA";
    case TaskKind::kSR: return "SR";
  }
  return "?";
}

std::string task_slug(TaskKind task) { return lower(to_string(task)); }

TaskKind parse_task(std::string_view name) {
  const std::string n = lower(trim(name));
  for (TaskKind t : kAllTasks) {
    if (task_slug(t) == n) return t;
  }
  throw DataError("unknown task: " + std::string(name));
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kIndTest: return "ind_test";
    case Split::kOodTest: return "ood_test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  const std::string n = lower(trim(name));
  for (Split s : kAllSplits) {
    if (to_string(s) == n) return s;
  }
  throw DataError("unknown split: " + std::string(name));
}

bool split_allowed(TaskKind task, Split split) {
  if (split != Split::kOodTest) return true;
  return task != TaskKind::kPSI && task != TaskKind::kMPC;
}

LabelSpace label_space_for(TaskKind task, const LabelConfig& config) {
  switch (task) {
    case TaskKind::kAP:
    case TaskKind::kPSI:
      return {task, LabelKind::kBinary, {"yes", "no"}};
    case TaskKind::kPRP:
      return {task, LabelKind::kFixedClasses, {"also_buy", "also_view", "similar"}};
    case TaskKind::kMPC:
      return {task,
              LabelKind::kFixedClasses,
              {"exact", "substitute", "complement", "irrelevant"}};
    case TaskKind::kSA: {
      std::vector<std::string> classes;
      for (const auto& c : config.sentiment_classes) {
        classes.push_back(normalize_label(c));
      }
      return {task, LabelKind::kFixedClasses, std::move(classes)};
    }
    case TaskKind::kCC:
    case TaskKind::kSR:
      return {task, LabelKind::kPerSampleOptions, {}};
  }
  throw DataError("unknown task");
}

std::string normalize_label(std::string_view label) { return lower(trim(label)); }

std::vector<std::string> parse_options(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto entry = trim(text.substr(pos, nl - pos));
    if (!entry.empty()) out.emplace_back(entry);
    pos = nl + 1;
  }
  return out;
}

std::string history_key(std::size_t index, std::string_view attribute) {
  return "history." + std::to_string(index) + "." + std::string(attribute);
}

const TaskFields& required_fields(TaskKind task) {
  static const std::map<TaskKind, TaskFields> kTable = {
      {TaskKind::kAP, {{field::kQuestion, field::kReview}, {}}},
      {TaskKind::kCC, {{field::kTitle, field::kOptions}, {}}},
      {TaskKind::kPRP, {{field::kTitle1, field::kTitle2}, {}}},
      {TaskKind::kPSI, {{field::kQuery, field::kTitle}, {}}},
      {TaskKind::kMPC, {{field::kQuery, field::kTitle}, {}}},
      {TaskKind::kSA, {{field::kReview}, {}}},
      {TaskKind::kSR, {{field::kOptions}, {"title", "category", "brand"}}},
  };
  return kTable.at(task);
}

std::size_t history_length(const Sample& sample) {
  std::size_t n = 0;
  while (sample.context.count(history_key(n, "title"))) ++n;
  return n;
}

std::vector<std::string> expanded_required_fields(const Sample& sample) {
  const TaskFields& req = required_fields(sample.task);
  std::vector<std::string> keys = req.fields;
  if (!req.per_history_item.empty()) {
    const std::size_t n = std::max<std::size_t>(history_length(sample), 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& attr : req.per_history_item) {
        keys.push_back(history_key(i, attr));
      }
    }
  }
  return keys;
}

std::vector<std::string> validate_sample(const Sample& sample,
                                         const LabelConfig& config) {
  std::vector<std::string> violations;
  if (sample.id.empty()) violations.emplace_back("empty id");
  if (!split_allowed(sample.task, sample.split)) {
    violations.push_back("split " + std::string(to_string(sample.split)) +
                         " not allowed for " + std::string(to_string(sample.task)));
  }

  for (const auto& key : expanded_required_fields(sample)) {
    auto it = sample.context.find(key);
    if (it == sample.context.end()) {
      violations.push_back("missing field: " + key);
    } else if (trim(it->second).empty()) {
      violations.push_back("empty field: " + key);
    }
  }

  if (sample.images.empty()) violations.emplace_back("no images");
  for (std::size_t i = 0; i < sample.images.size(); ++i) {
    const ImageRef& img = sample.images[i];
    if (img.locator.empty()) {
      violations.push_back("image " + std::to_string(i) + ": empty locator");
    }
    if ((img.width && *img.width <= 0) || (img.height && *img.height <= 0)) {
      violations.push_back("image " + std::to_string(i) +
                           ": non-positive dimensions");
    }
  }
  if (sample.task == TaskKind::kPRP && sample.images.size() > 2) {
    violations.emplace_back("PRP carries at most one image per product");
  }
  if (sample.task == TaskKind::kSR && !sample.images.empty() &&
      sample.images.size() != history_length(sample)) {
    violations.emplace_back("SR needs one image per history item");
  }

  const LabelSpace space = label_space_for(sample.task, config);
  const std::string gold = normalize_label(sample.gold);
  if (space.kind == LabelKind::kPerSampleOptions) {
    auto it = sample.context.find(field::kOptions);
    bool found = false;
    if (it != sample.context.end()) {
      for (const auto& opt : parse_options(it->second)) {
        if (normalize_label(opt) == gold) found = true;
      }
    }
    if (!found) violations.emplace_back("gold not among options");
  } else if (std::find(space.classes.begin(), space.classes.end(), gold) ==
             space.classes.end()) {
    violations.push_back("gold not in {" + join(space.classes, ",") + "}");
  }
  return violations;
}

nlohmann::json to_json(const Sample& sample) {
  nlohmann::json j = sample.extra.is_object() ? sample.extra
                                              : nlohmann::json::object();
  j["id"] = sample.id;
  j["task"] = std::string(to_string(sample.task));
  j["split"] = std::string(to_string(sample.split));
  j["context"] = sample.context;
  auto images = nlohmann::json::array();
  for (const auto& img : sample.images) {
    nlohmann::json ij = {{"locator", img.locator}};
    if (img.width) ij["width"] = *img.width;
    if (img.height) ij["height"] = *img.height;
    images.push_back(std::move(ij));
  }
  j["images"] = std::move(images);
  j["gold"] = sample.gold;
  return j;
}

Sample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("sample record is not an object");
  Sample s;
  try {
    s.id = j.at("id").get<std::string>();
    s.task = parse_task(j.at("task").get<std::string>());
    s.split = parse_split(j.at("split").get<std::string>());
    for (const auto& [k, v] : j.at("context").items()) {
      s.context[k] = v.get<std::string>();
    }
    for (const auto& ij : j.at("images")) {
      ImageRef img;
      if (ij.is_string()) {
        img.locator = ij.get<std::string>();
      } else {
        img.locator = ij.at("locator").get<std::string>();
        if (ij.contains("width")) img.width = ij["width"].get<int>();
        if (ij.contains("height")) img.height = ij["height"].get<int>();
      }
      s.images.push_back(std::move(img));
    }
    s.gold = normalize_label(j.at("gold").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed sample: ") + e.what());
  }
  for (const auto& [k, v] : j.items()) {
    if (!known_sample_fields().count(k)) s.extra[k] = v;
  }
  return s;
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return out;
}

void write_samples(const std::filesystem::path& path,
                   const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

std::string dataset_file_name(TaskKind task, Split split) {
  return task_slug(task) + "_" + std::string(to_string(split)) + ".jsonl";
}

std::vector<Sample> load_dataset(
    const std::vector<std::filesystem::path>& paths) {
  std::vector<Sample> out;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") {
          files.push_back(e.path());
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto part = read_samples(f);
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
      }
    } else {
      auto part = read_samples(p);
      out.insert(out.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
  }
  return out;
}

std::size_t DatasetManifest::total() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.count;
  return n;
}

std::size_t DatasetManifest::split_total(Split split) const {
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.split == split) n += e.count;
  }
  return n;
}

const ManifestEntry* DatasetManifest::find(TaskKind task, Split split) const {
  for (const auto& e : entries) {
    if (e.task == task && e.split == split) return &e;
  }
  return nullptr;
}

nlohmann::json to_json(const DatasetManifest& manifest) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    files.push_back({{"task", std::string(to_string(e.task))},
                     {"split", std::string(to_string(e.split))},
                     {"file", e.file},
                     {"count", e.count},
                     {"sha256", e.digest}});
  }
  nlohmann::json totals = nlohmann::json::object();
  for (Split s : kAllSplits) totals[std::string(to_string(s))] = manifest.split_total(s);
  totals["total"] = manifest.total();
  return {{"seed", manifest.seed}, {"files", files}, {"totals", totals}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("files")) {
      ManifestEntry e;
      e.task = parse_task(f.at("task").get<std::string>());
      e.split = parse_split(f.at("split").get<std::string>());
      e.file = f.value("file", "");
      e.count = f.at("count").get<std::size_t>();
      e.digest = f.value("sha256", "");
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::size_t SplitCaps::cap(Split split) const {
  switch (split) {
    case Split::kTrain: return train;
    case Split::kValidation: return validation;
    case Split::kIndTest: return ind_test;
    case Split::kOodTest: return ood_test;
  }
  return 0;
}

std::vector<std::string> check_full_shape(const DatasetManifest& manifest,
                                          const SplitCaps& caps) {
  std::vector<std::string> violations;
  for (TaskKind t : kAllTasks) {
    for (Split s : kAllSplits) {
      const ManifestEntry* e = manifest.find(t, s);
      const std::string where =
          std::string(to_string(t)) + "/" + std::string(to_string(s));
      if (!split_allowed(t, s)) {
        if (e && e->count) violations.push_back(where + ": must be absent");
        continue;
      }
      const std::size_t have = e ? e->count : 0;
      if (have != caps.cap(s)) {
        violations.push_back(where + ": expected " + std::to_string(caps.cap(s)) +
                             ", have " + std::to_string(have));
      }
    }
  }
  std::ostringstream totals;
  const std::size_t train = manifest.split_total(Split::kTrain);
  const std::size_t val = manifest.split_total(Split::kValidation);
  const std::size_t ind = manifest.split_total(Split::kIndTest);
  const std::size_t ood = manifest.split_total(Split::kOodTest);
  if (train != 7 * caps.train || val != 7 * caps.validation ||
      ind != 7 * caps.ind_test || ood != 5 * caps.ood_test) {
    totals << "totals " << train << "/" << val << "/" << ind << "/" << ood
           << " differ from " << 7 * caps.train << "/" << 7 * caps.validation
           << "/" << 7 * caps.ind_test << "/" << 5 * caps.ood_test;
    violations.push_back(totals.str());
  }
  return violations;
}

}  // namespace caslie
