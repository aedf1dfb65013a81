#include "caslie/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "caslie/digest.hpp"
#include "caslie/error.hpp"

namespace caslie {
namespace {

constexpr std::string_view kCaptionPlaceholder = "caption";
constexpr std::string_view kCaptionBlockPrefix =
    "Extra information extracted from the product image: ";

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string template_name(TemplateId id) {
  return task_slug(id.task) + "_" + std::string(to_string(id.stage));
}

const std::string& lookup(const Sample& sample, const std::string& key, TemplateId id) {
  auto it = sample.context.find(key);
  if (it == sample.context.end()) {
    throw DataError(template_name(id) + ": missing field: " + key);
  }
  return it->second;
}

bool is_caption_placeholder(TaskKind task, std::string_view name) {
  return name == kCaptionPlaceholder ||
         (task == TaskKind::kPRP && name == "caption of product 1");
}

bool multi_product(TaskKind task) { return task == TaskKind::kPRP || task == TaskKind::kSR; }

std::string product_title(const Sample& sample, std::size_t item) {
  const std::string key = sample.task == TaskKind::kPRP
                              ? (item == 0 ? field::kTitle1 : field::kTitle2)
                              : history_key(item, "title");
  auto it = sample.context.find(key);
  return it == sample.context.end() ? std::string() : it->second;
}

std::string fixed_options_line(TaskKind task, const LabelConfig& labels) {
  std::vector<std::string> shown;
  for (const auto& c : label_space_for(task, labels).classes) {
    shown.push_back(display_label(task, c));
  }
  return "Options: " + join(shown, ", ");
}

void lettered_options(std::vector<std::string>& lines, const std::string& options) {
  lines.emplace_back("Options:");
  const auto opts = parse_options(options);
  for (std::size_t i = 0; i < opts.size(); ++i) {
    lines.push_back(option_letter(i) + ": " + opts[i]);
  }
}

/// Context lines of the task prompt, in fixed order.
std::vector<std::string> task_lines(const Sample& s, TemplateId id, const LabelConfig& labels) {
  auto get = [&](const std::string& key) -> const std::string& { return lookup(s, key, id); };
  std::vector<std::string> lines;
  switch (s.task) {
    case TaskKind::kAP:
      lines.push_back("Question: " + get(field::kQuestion));
      lines.push_back("Document: " + get(field::kReview));
      break;
    case TaskKind::kCC:
      lines.push_back("Product title: " + get(field::kTitle));
      lettered_options(lines, get(field::kOptions));
      break;
    case TaskKind::kPRP:
      lines.push_back("Product 1 title: " + get(field::kTitle1));
      lines.push_back("Product 2 title: " + get(field::kTitle2));
      lines.push_back(fixed_options_line(s.task, labels));
      break;
    case TaskKind::kPSI:
      lines.push_back("Query: " + get(field::kQuery));
      lines.push_back("Product title: " + get(field::kTitle));
      break;
    case TaskKind::kMPC:
      lines.push_back("Query: " + get(field::kQuery));
      lines.push_back("Product title: " + get(field::kTitle));
      lines.push_back(fixed_options_line(s.task, labels));
      break;
    case TaskKind::kSA:
      lines.push_back("Review: " + get(field::kReview));
      lines.push_back(fixed_options_line(s.task, labels));
      break;
    case TaskKind::kSR: {
      lines.emplace_back("Purchase history:");
      const std::size_t n = history_length(s);
      if (n == 0) get(history_key(0, "title"));
      for (std::size_t i = 0; i < n; ++i) {
        lines.push_back(std::to_string(i + 1) + ". " + get(history_key(i, "title")) + ", " +
                        get(history_key(i, "category")) + ", " + get(history_key(i, "brand")));
      }
      lettered_options(lines, get(field::kOptions));
      break;
    }
  }
  return lines;
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kCaptioning: return "captioning";
    case Stage::kGate: return "gate";
    case Stage::kTask: return "task";
  }
  return "?";
}

std::string template_file_name(TemplateId id) { return template_name(id) + ".txt"; }

std::vector<std::string> extract_placeholders(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find("{{", pos)) != std::string_view::npos) {
    const std::size_t end = text.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    out.emplace_back(text.substr(pos + 2, end - pos - 2));
    pos = end + 2;
  }
  return out;
}

TemplateStore TemplateStore::load(const std::filesystem::path& dir) {
  TemplateStore store;
  store.dir_ = dir;
  std::vector<std::string> problems;
  for (TaskKind t : kAllTasks) {
    for (Stage st : kAllStages) {
      const TemplateId id{t, st};
      const auto path = dir / template_file_name(id);
      std::ifstream in(path, std::ios::binary);
      if (!in) {
        problems.push_back("missing template " + path.string());
        continue;
      }
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string text = buf.str();
      if (!text.empty() && text.back() == '\n') text.pop_back();
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.empty()) {
        problems.push_back("empty template " + path.string());
        continue;
      }
      for (const auto& name : extract_placeholders(text)) {
        if (!is_caption_placeholder(t, name) && placeholder_fields(t, name).empty()) {
          problems.push_back(path.string() + ": unknown placeholder {{" + name + "}}");
        }
      }
      store.digest_[id] = sha256_hex(text);
      store.text_[id] = std::move(text);
    }
  }
  if (!problems.empty()) throw ConfigError(join(problems, "; "));
  return store;
}

const std::string& TemplateStore::text(TemplateId id) const { return text_.at(id); }
const std::string& TemplateStore::digest(TemplateId id) const { return digest_.at(id); }

std::vector<std::string> placeholder_fields(TaskKind task, std::string_view name,
                                            std::size_t item) {
  switch (task) {
    case TaskKind::kPRP: {
      const char* self = item == 0 ? field::kTitle1 : field::kTitle2;
      const char* other = item == 0 ? field::kTitle2 : field::kTitle1;
      if (name == "title of the product") return {self};
      if (name == "title of another product") return {other};
      return {};
    }
    case TaskKind::kSR:
      if (name == "title") return {history_key(item, "title")};
      if (name == "title, category, brand") {
        return {history_key(item, "title"), history_key(item, "category"),
                history_key(item, "brand")};
      }
      return {};
    case TaskKind::kCC:
      if (name == field::kTitle || name == field::kOptions) return {std::string(name)};
      return {};
    case TaskKind::kAP:
      if (name == field::kQuestion || name == field::kReview) return {std::string(name)};
      return {};
    case TaskKind::kPSI:
    case TaskKind::kMPC:
      if (name == field::kQuery || name == field::kTitle) return {std::string(name)};
      return {};
    case TaskKind::kSA:
      if (name == field::kReview) return {std::string(name)};
      return {};
  }
  return {};
}

std::vector<std::string> task_layout_fields(const Sample& sample) {
  switch (sample.task) {
    case TaskKind::kAP: return {field::kQuestion, field::kReview};
    case TaskKind::kCC: return {field::kTitle, field::kOptions};
    case TaskKind::kPRP: return {field::kTitle1, field::kTitle2};
    case TaskKind::kPSI:
    case TaskKind::kMPC: return {field::kQuery, field::kTitle};
    case TaskKind::kSA: return {field::kReview};
    case TaskKind::kSR: {
      std::vector<std::string> keys;
      const std::size_t n = std::max<std::size_t>(history_length(sample), 1);
      for (std::size_t i = 0; i < n; ++i) {
        for (const char* a : {"title", "category", "brand"}) keys.push_back(history_key(i, a));
      }
      keys.emplace_back(field::kOptions);
      return keys;
    }
  }
  return {};
}

std::string option_letter(std::size_t index) {
  std::string out;
  std::size_t n = index + 1;
  while (n > 0) {
    --n;
    out.insert(out.begin(), static_cast<char>('A' + n % 26));
    n /= 26;
  }
  return out;
}

std::string display_label(TaskKind task, std::string_view label) {
  std::string out(label);
  if (task == TaskKind::kPRP) {
    for (auto& c : out) {
      if (c == '_') c = ' ';
    }
  } else if (task == TaskKind::kMPC && !out.empty()) {
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  }
  return out;
}

std::string caption_block(const Sample& sample, std::size_t item, std::string_view caption) {
  std::string block;
  if (multi_product(sample.task)) block = "[" + product_title(sample, item) + "] ";
  block += kCaptionBlockPrefix;
  block += caption;
  return block;
}

RenderedPrompt render(const TemplateStore& store, TemplateId id, const Sample& sample,
                      const std::optional<std::string>& caption, std::size_t item,
                      const RenderOptions& options) {
  if (sample.task != id.task) {
    throw ConfigError(template_name(id) + ": sample " + sample.id + " is " +
                      std::string(to_string(sample.task)));
  }
  if (id.stage == Stage::kTask) {
    std::vector<std::optional<std::string>> accepted(std::max(sample.images.size(), item + 1));
    if (caption) accepted[item] = caption;
    return render_task(store, sample, accepted, options);
  }
  if (id.stage == Stage::kCaptioning && caption) {
    throw ConfigError(template_name(id) + ": captioning stage takes no caption");
  }
  if (id.stage == Stage::kGate && !caption) {
    throw ConfigError(template_name(id) + ": gate stage needs a caption");
  }
  if (item >= sample.images.size()) {
    throw DataError(template_name(id) + ": sample " + sample.id + " has no image " +
                    std::to_string(item));
  }

  const std::string& tmpl = store.text(id);
  RenderedPrompt out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = tmpl.find("{{", pos);
    const std::size_t close = open == std::string::npos ? open : tmpl.find("}}", open + 2);
    if (close == std::string::npos) {
      out.text.append(tmpl, pos, std::string::npos);
      break;
    }
    out.text.append(tmpl, pos, open - pos);
    const std::string name = tmpl.substr(open + 2, close - open - 2);
    if (is_caption_placeholder(id.task, name)) {
      out.text += *caption;
    } else {
      const auto keys = placeholder_fields(id.task, name, item);
      if (keys.empty()) {
        throw ConfigError(template_name(id) + ": unknown placeholder {{" + name + "}}");
      }
      std::vector<std::string> values;
      for (const auto& k : keys) {
        const std::string& v = lookup(sample, k, id);
        values.push_back(k == field::kOptions ? join(parse_options(v), ", ") : v);
      }
      out.text += join(values, ", ");
    }
    out.placeholders_filled.push_back(name);
    pos = close + 2;
  }
  if (id.stage == Stage::kCaptioning ||
      (id.stage == Stage::kGate && options.gate_with_image)) {
    out.attached_images.push_back(sample.images[item]);
  }
  return out;
}

RenderedPrompt render_task(const TemplateStore& store, const Sample& sample,
                           std::span<const std::optional<std::string>> accepted_captions,
                           const RenderOptions& options) {
  const TemplateId id{sample.task, Stage::kTask};
  RenderedPrompt out;
  out.text = store.text(id);
  out.text += "\n\n";
  out.text += join(task_lines(sample, id, options.labels), "\n");
  out.placeholders_filled = task_layout_fields(sample);
  bool any = false;
  for (std::size_t i = 0; i < accepted_captions.size(); ++i) {
    if (!accepted_captions[i]) continue;
    out.text += "\n";
    out.text += caption_block(sample, i, *accepted_captions[i]);
    any = true;
  }
  if (any) out.placeholders_filled.emplace_back(kCaptionPlaceholder);
  return out;
}

RenderedPrompt render_task_without_caption(const TemplateStore& store, TemplateId id,
                                           const Sample& sample,
                                           const RenderOptions& options) {
  if (id.stage != Stage::kTask) {
    throw ConfigError(template_name(id) + ": not a task template");
  }
  if (sample.task != id.task) {
    throw ConfigError(template_name(id) + ": sample " + sample.id + " is " +
                      std::string(to_string(sample.task)));
  }
  return render_task(store, sample, {}, options);
}

}  // namespace caslie
