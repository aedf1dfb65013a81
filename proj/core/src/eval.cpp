#include "caslie/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "caslie/error.hpp"
#include "caslie/prompting.hpp"

namespace caslie {
namespace {

std::vector<std::string> tokens_of(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

bool contains_words(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  const std::string h = " " + std::string(haystack) + " ";
  const std::string n = " " + std::string(needle) + " ";
  return h.find(n) != std::string::npos;
}

std::string first_nonempty_line(std::string_view raw) {
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    auto line = raw.substr(pos, nl - pos);
    if (std::any_of(line.begin(), line.end(), [](unsigned char c) { return !std::isspace(c); }))
      return std::string(line);
    pos = nl + 1;
  }
  return {};
}

ParsedLabel pick(const std::set<std::string>& values) {
  if (values.empty()) return ParsedLabel::failed("no label match");
  if (values.size() > 1) return ParsedLabel::failed("ambiguous: " + std::to_string(values.size()) + " matches");
  return ParsedLabel::success(*values.begin());
}

ParsedLabel parse_binary(const std::string& line) {
  const auto toks = tokens_of(line);
  if (!toks.empty() && (toks[0] == "yes" || toks[0] == "no")) return ParsedLabel::success(toks[0]);
  std::set<std::string> found;
  for (const auto& t : toks)
    if (t == "yes" || t == "no") found.insert(t);
  return pick(found);
}

// Option index named by letter: "option b", "answer is b", a bare "b", or a
// raw line opening with "B:" / "B." / "B)".
std::set<std::size_t> letter_references(std::string_view raw_line, const std::string& line,
                                        std::size_t n_options) {
  std::map<std::string, std::size_t> letters;
  for (std::size_t i = 0; i < n_options; ++i) {
    std::string l = option_letter(i);
    for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    letters[l] = i;
  }
  std::set<std::size_t> out;
  const auto toks = tokens_of(line);
  if (toks.size() == 1) {
    if (auto it = letters.find(toks[0]); it != letters.end()) out.insert(it->second);
  }
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (toks[i] != "option" && toks[i] != "answer" && toks[i] != "choice") continue;
    std::size_t j = i + 1;
    if (toks[j] == "is" && j + 1 < toks.size()) ++j;
    if (auto it = letters.find(toks[j]); it != letters.end()) out.insert(it->second);
  }
  std::size_t b = 0;
  while (b < raw_line.size() && std::isspace(static_cast<unsigned char>(raw_line[b]))) ++b;
  std::size_t e = b;
  while (e < raw_line.size() && std::isupper(static_cast<unsigned char>(raw_line[e]))) ++e;
  if (e > b && e < raw_line.size() && (raw_line[e] == ':' || raw_line[e] == '.' || raw_line[e] == ')')) {
    std::string l(raw_line.substr(b, e - b));
    for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (auto it = letters.find(l); it != letters.end()) out.insert(it->second);
  }
  return out;
}

ParsedLabel parse_against(std::string_view raw, const std::string& line,
                          const std::vector<std::string>& labels, bool with_letters) {
  std::vector<std::string> forms;
  forms.reserve(labels.size());
  for (const auto& l : labels) forms.push_back(normalize_output(l));

  for (std::size_t i = 0; i < forms.size(); ++i)
    if (!forms[i].empty() && forms[i] == line) return ParsedLabel::success(normalize_label(labels[i]));

  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < forms.size(); ++i)
    if (contains_words(line, forms[i])) hits.push_back(i);
  std::set<std::size_t> kept;
  for (std::size_t i : hits) {
    const bool dominated = std::any_of(hits.begin(), hits.end(), [&](std::size_t j) {
      return forms[j].size() > forms[i].size() && contains_words(forms[j], forms[i]);
    });
    if (!dominated) kept.insert(i);
  }
  if (with_letters) {
    for (std::size_t i : letter_references(first_nonempty_line(raw), line, labels.size())) kept.insert(i);
  }
  std::set<std::string> values;
  for (std::size_t i : kept) values.insert(normalize_label(labels[i]));
  return pick(values);
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    std::string line;
    for (std::size_t c = 0; c < rows[ri].size(); ++c) {
      if (c) line += "  ";
      std::string cell = rows[ri][c];
      cell.resize(width[c], ' ');
      line += cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (ri == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

}  // namespace

std::string normalize_output(std::string_view raw) {
  const std::string line = first_nonempty_line(raw);
  std::string out;
  bool space = true;
  for (unsigned char c : line) {
    if (std::isalnum(c) || c >= 0x80) {
      out += static_cast<char>(std::tolower(c));
      space = false;
    } else if (!space) {
      out += ' ';
      space = true;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> sample_options(const Sample& sample) {
  auto it = sample.context.find(field::kOptions);
  return it == sample.context.end() ? std::vector<std::string>{} : parse_options(it->second);
}

ParsedLabel parse_prediction(TaskKind task, std::string_view raw, const LabelSpace& space,
                             std::span<const std::string> options) {
  (void)task;
  const std::string line = normalize_output(raw);
  if (line.empty()) return ParsedLabel::failed("empty output");
  switch (space.kind) {
    case LabelKind::kBinary:
      return parse_binary(line);
    case LabelKind::kFixedClasses:
      return parse_against(raw, line, space.classes, false);
    case LabelKind::kPerSampleOptions:
      if (options.empty()) return ParsedLabel::failed("no options to match against");
      return parse_against(raw, line, std::vector<std::string>(options.begin(), options.end()), true);
  }
  return ParsedLabel::failed("unknown label space");
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes)
    : classes_(std::move(classes)), counts_(classes_.size(), std::vector<std::uint64_t>(classes_.size(), 0)) {}

std::size_t ConfusionMatrix::index_of(std::string_view label) const {
  auto it = std::find(classes_.begin(), classes_.end(), label);
  if (it == classes_.end()) throw DataError("label not in class list: " + std::string(label));
  return static_cast<std::size_t>(it - classes_.begin());
}

void ConfusionMatrix::add(std::string_view predicted, std::string_view gold) {
  add(index_of(predicted), index_of(gold));
}

void ConfusionMatrix::add(std::size_t predicted, std::size_t gold, std::uint64_t n) {
  counts_.at(predicted).at(gold) += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts_)
    for (auto v : row) t += v;
  return t;
}

std::optional<double> accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) return std::nullopt;
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < cm.size(); ++i) diag += cm.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(total);
}

std::optional<MacroPRF> macro_prf(const ConfusionMatrix& cm) {
  if (cm.total() == 0 || cm.size() == 0) return std::nullopt;
  MacroPRF m;
  const std::size_t k = cm.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t tp = cm.at(c, c), predicted = 0, gold = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += cm.at(c, o);
      gold += cm.at(o, c);
    }
    double p = 0, r = 0;
    if (predicted) p = static_cast<double>(tp) / static_cast<double>(predicted);
    else m.zero_division = true;
    if (gold) r = static_cast<double>(tp) / static_cast<double>(gold);
    else m.zero_division = true;
    m.precision += p;
    m.recall += r;
    m.f1 += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  m.precision /= static_cast<double>(k);
  m.recall /= static_cast<double>(k);
  m.f1 /= static_cast<double>(k);
  return m;
}

std::optional<BinaryF1> binary_f1(const ConfusionMatrix& cm, std::string_view positive) {
  if (cm.total() == 0) return std::nullopt;
  const std::size_t c = cm.index_of(positive);
  std::uint64_t tp = cm.at(c, c), predicted = 0, gold = 0;
  for (std::size_t o = 0; o < cm.size(); ++o) {
    predicted += cm.at(c, o);
    gold += cm.at(o, c);
  }
  BinaryF1 out;
  if (predicted + gold == 0) {
    out.degenerate = true;
    return out;
  }
  out.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + gold);
  return out;
}

std::optional<double> recall_at_1(std::span<const ScoredPrediction> predictions) {
  std::size_t evaluated = 0, hits = 0;
  for (const auto& p : predictions) {
    if (!p.parsed.ok()) continue;
    ++evaluated;
    if (*p.parsed.value == p.gold) ++hits;
  }
  if (evaluated == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(evaluated);
}

std::vector<ScoredPrediction> score_records(std::span<const PipelineRecord> records,
                                            std::span<const Sample> dataset, const LabelConfig& labels) {
  std::map<std::string, const PipelineRecord*> by_id;
  for (const auto& r : records) by_id[r.sample_id] = &r;

  std::vector<std::string> missing, mismatched;
  std::set<std::string> seen;
  std::vector<ScoredPrediction> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) {
    seen.insert(s.id);
    auto it = by_id.find(s.id);
    if (it == by_id.end()) {
      missing.push_back(s.id);
      continue;
    }
    const PipelineRecord& r = *it->second;
    if (r.task != s.task) {
      mismatched.push_back(s.id);
      continue;
    }
    ScoredPrediction p{s.id, s.task, s.split, normalize_label(s.gold), {}};
    if (r.failed) {
      p.parsed = ParsedLabel::failed("inference failed: " + r.failure);
    } else {
      const auto options = sample_options(s);
      p.parsed = parse_prediction(s.task, r.raw_output, label_space_for(s.task, labels), options);
    }
    out.push_back(std::move(p));
  }
  std::vector<std::string> orphans;
  for (const auto& r : records)
    if (!seen.count(r.sample_id)) orphans.push_back(r.sample_id);

  if (!missing.empty() || !mismatched.empty() || !orphans.empty()) {
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      const std::size_t shown = std::min<std::size_t>(ids.size(), 20);
      for (std::size_t i = 0; i < shown; ++i) s += (i ? ", " : "") + ids[i];
      if (ids.size() > shown) s += ", ... (" + std::to_string(ids.size()) + " total)";
      return s;
    };
    std::string msg = "records do not match the dataset";
    if (!missing.empty()) msg += "\n  missing records for: " + list(missing);
    if (!mismatched.empty()) msg += "\n  task mismatch for: " + list(mismatched);
    if (!orphans.empty()) msg += "\n  records without a sample: " + list(orphans);
    throw DataError(msg);
  }
  return out;
}

std::string_view primary_metric(TaskKind task) {
  switch (task) {
    case TaskKind::kAP:
    case TaskKind::kPSI: return "f1";
    case TaskKind::kMPC: return "accuracy";
    case TaskKind::kPRP:
    case TaskKind::kSA: return "macro_f1";
    case TaskKind::kCC:
    case TaskKind::kSR: return "recall@1";
  }
  return "accuracy";
}

std::optional<double> TaskMetrics::primary() const {
  const auto m = primary_metric(task);
  if (m == "f1") return binary_f1;
  if (m == "macro_f1") return macro_f1;
  if (m == "recall@1") return recall_at_1;
  return accuracy;
}

const TaskMetrics* MetricReport::find(TaskKind task, Split split) const {
  for (const auto& b : blocks)
    if (b.task == task && b.split == split) return &b;
  return nullptr;
}

MetricReport build_report(std::span<const ScoredPrediction> predictions, std::span<const PipelineRecord> records,
                          const LabelConfig& labels) {
  std::map<std::pair<TaskKind, Split>, std::vector<ScoredPrediction>> groups;
  for (const auto& p : predictions) groups[{p.task, p.split}].push_back(p);

  std::map<std::pair<TaskKind, Split>, std::vector<PipelineRecord>> record_groups;
  {
    std::map<std::string, std::pair<TaskKind, Split>> where;
    for (const auto& p : predictions) where[p.sample_id] = {p.task, p.split};
    for (const auto& r : records)
      if (auto it = where.find(r.sample_id); it != where.end()) record_groups[it->second].push_back(r);
  }

  MetricReport report;
  for (const auto& [key, preds] : groups) {
    TaskMetrics m;
    m.task = key.first;
    m.split = key.second;
    m.size = preds.size();
    for (const auto& p : preds) (p.parsed.ok() ? m.evaluated : m.failed)++;

    const LabelSpace space = label_space_for(m.task, labels);
    if (space.kind == LabelKind::kPerSampleOptions) {
      m.recall_at_1 = recall_at_1(preds);
      m.accuracy = m.recall_at_1;
    } else {
      ConfusionMatrix cm(space.kind == LabelKind::kBinary ? std::vector<std::string>{"yes", "no"} : space.classes);
      for (const auto& p : preds)
        if (p.parsed.ok()) cm.add(*p.parsed.value, p.gold);
      m.accuracy = accuracy(cm);
      if (auto prf = macro_prf(cm)) {
        m.macro_precision = prf->precision;
        m.macro_recall = prf->recall;
        m.macro_f1 = prf->f1;
        m.zero_division = prf->zero_division;
      }
      if (space.kind == LabelKind::kBinary) {
        if (auto f = binary_f1(cm, "yes")) {
          m.binary_f1 = f->f1;
          m.degenerate_f1 = f->degenerate;
        }
      }
    }
    if (auto it = record_groups.find(key); it != record_groups.end()) {
      const auto usage = caption_usage_rate(it->second);
      if (auto u = usage.find(m.task); u != usage.end()) m.caption_usage = u->second;
    }
    report.blocks.push_back(std::move(m));
  }
  return report;
}

MetricReport build_report(std::span<const PipelineRecord> records, std::span<const Sample> dataset,
                          const LabelConfig& labels) {
  const auto scored = score_records(records, dataset, labels);
  return build_report(scored, records, labels);
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& m : report.blocks) {
    blocks.push_back({{"task", to_string(m.task)},
                      {"split", to_string(m.split)},
                      {"size", m.size},
                      {"evaluated", m.evaluated},
                      {"failed", m.failed},
                      {"accuracy", opt_json(m.accuracy)},
                      {"f1", opt_json(m.binary_f1)},
                      {"macro_precision", opt_json(m.macro_precision)},
                      {"macro_recall", opt_json(m.macro_recall)},
                      {"macro_f1", opt_json(m.macro_f1)},
                      {"recall@1", opt_json(m.recall_at_1)},
                      {"zero_division", m.zero_division},
                      {"degenerate_f1", m.degenerate_f1},
                      {"caption_usage", opt_json(m.caption_usage)},
                      {"primary_metric", primary_metric(m.task)},
                      {"primary", opt_json(m.primary())}});
  }
  return {{"blocks", std::move(blocks)}};
}

MetricReport report_from_json(const nlohmann::json& j) {
  try {
    MetricReport report;
    for (const auto& b : j.at("blocks")) {
      TaskMetrics m;
      m.task = parse_task(b.at("task").get<std::string>());
      m.split = parse_split(b.at("split").get<std::string>());
      m.size = b.at("size").get<std::size_t>();
      m.evaluated = b.at("evaluated").get<std::size_t>();
      m.failed = b.at("failed").get<std::size_t>();
      m.accuracy = opt_from(b, "accuracy");
      m.binary_f1 = opt_from(b, "f1");
      m.macro_precision = opt_from(b, "macro_precision");
      m.macro_recall = opt_from(b, "macro_recall");
      m.macro_f1 = opt_from(b, "macro_f1");
      m.recall_at_1 = opt_from(b, "recall@1");
      m.zero_division = b.value("zero_division", false);
      m.degenerate_f1 = b.value("degenerate_f1", false);
      m.caption_usage = opt_from(b, "caption_usage");
      report.blocks.push_back(std::move(m));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

MetricReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read report: " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_report(const MetricReport& report) {
  std::vector<std::vector<std::string>> rows = {{"Task", "Split", "Primary", "Value", "Acc", "F1", "M-Pre", "M-Rec",
                                                 "M-F1", "R@1", "#failed", "N", "Caption used"}};
  for (const auto& m : report.blocks) {
    std::string flags;
    if (m.zero_division) flags += "*";
    if (m.degenerate_f1) flags += "!";
    rows.push_back({std::string(to_string(m.task)), std::string(to_string(m.split)),
                    std::string(primary_metric(m.task)), fmt(m.primary()), fmt(m.accuracy), fmt(m.binary_f1),
                    fmt(m.macro_precision), fmt(m.macro_recall), fmt(m.macro_f1) + flags, fmt(m.recall_at_1),
                    std::to_string(m.failed), std::to_string(m.size), fmt(m.caption_usage)});
  }
  std::string out = render_table(rows);
  out += "* some class had an empty precision or recall denominator (counted as 0)\n";
  out += "! no predicted and no gold positives (F1 reported as 0)\n";
  return out;
}

ReportDiff diff_reports(const MetricReport& a, const MetricReport& b) {
  std::set<std::pair<TaskKind, Split>> keys;
  for (const auto& m : a.blocks) keys.insert({m.task, m.split});
  for (const auto& m : b.blocks) keys.insert({m.task, m.split});

  ReportDiff diff;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& [task, split] : keys) {
    MetricDelta d;
    d.task = task;
    d.split = split;
    d.metric = primary_metric(task);
    if (const auto* m = a.find(task, split)) d.a = m->primary();
    if (const auto* m = b.find(task, split)) d.b = m->primary();
    if (d.a && d.b) {
      d.delta = *d.a - *d.b;
      if (*d.b != 0) {
        d.relative = *d.delta / *d.b;
        sum += *d.relative;
        ++n;
      }
    }
    diff.rows.push_back(std::move(d));
  }
  if (n) diff.mean_relative_improvement = sum / static_cast<double>(n);
  return diff;
}

nlohmann::json to_json(const ReportDiff& diff) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& d : diff.rows)
    rows.push_back({{"task", to_string(d.task)},
                    {"split", to_string(d.split)},
                    {"metric", d.metric},
                    {"a", opt_json(d.a)},
                    {"b", opt_json(d.b)},
                    {"delta", opt_json(d.delta)},
                    {"relative", opt_json(d.relative)}});
  return {{"rows", std::move(rows)}, {"mean_relative_improvement", opt_json(diff.mean_relative_improvement)}};
}

std::string format_diff(const ReportDiff& diff) {
  std::vector<std::vector<std::string>> rows = {{"Task", "Split", "Metric", "A", "B", "Delta", "Imprv"}};
  for (const auto& d : diff.rows) {
    std::string rel = "-";
    if (d.relative) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%+.1f%%", *d.relative * 100.0);
      rel = buf;
    }
    rows.push_back({std::string(to_string(d.task)), std::string(to_string(d.split)), d.metric, fmt(d.a), fmt(d.b),
                    fmt(d.delta), rel});
  }
  std::string out = render_table(rows);
  if (diff.mean_relative_improvement) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "mean relative improvement: %+.1f%%\n", *diff.mean_relative_improvement * 100.0);
    out += buf;
  } else {
    out += "mean relative improvement: -\n";
  }
  return out;
}

}  // namespace caslie
