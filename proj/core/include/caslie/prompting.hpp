#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caslie/datamodel.hpp"

namespace caslie {

enum class Stage { kCaptioning, kGate, kTask };

inline constexpr std::array<Stage, 3> kAllStages = {Stage::kCaptioning, Stage::kGate,
                                                    Stage::kTask};

std::string_view to_string(Stage stage);

struct TemplateId {
  TaskKind task = TaskKind::kAP;
  Stage stage = Stage::kCaptioning;

  friend auto operator<=>(const TemplateId&, const TemplateId&) = default;
};

/// "<task>_<stage>.txt", e.g. "psi_gate.txt".
std::string template_file_name(TemplateId id);

/// Names between {{ and }} in order of appearance.
std::vector<std::string> extract_placeholders(std::string_view text);

/// The 21 instruction templates, read once from a directory and immutable
/// afterwards.
class TemplateStore {
 public:
  /// Throws ConfigError listing every missing or unreadable file.
  static TemplateStore load(const std::filesystem::path& dir);

  const std::string& text(TemplateId id) const;
  /// SHA-256 of the template text.
  const std::string& digest(TemplateId id) const;
  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::map<TemplateId, std::string> text_;
  std::map<TemplateId, std::string> digest_;
};

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> placeholders_filled;
  std::vector<ImageRef> attached_images;
};

struct RenderOptions {
  LabelConfig labels;
  /// Attach the captioned image to gate prompts for vision-capable voters.
  bool gate_with_image = false;
};

/// Context keys a placeholder reads for a given image index.
std::vector<std::string> placeholder_fields(TaskKind task, std::string_view placeholder,
                                            std::size_t item = 0);

/// Context keys consumed by the fixed task-prompt layout.
std::vector<std::string> task_layout_fields(const Sample& sample);

/// Renders one stage for image `item`.
///
/// Captioning takes no caption; gate requires one; for the task stage a
/// caption, when given, is treated as the accepted caption for `item`.
/// Throws DataError naming the template and field when a context field is
/// missing, and ConfigError on stage/caption misuse.
RenderedPrompt render(const TemplateStore& store, TemplateId id, const Sample& sample,
                      const std::optional<std::string>& caption, std::size_t item = 0,
                      const RenderOptions& options = {});

/// Task prompt with one optional accepted caption per image; absent entries
/// contribute no caption block.
RenderedPrompt render_task(const TemplateStore& store, const Sample& sample,
                           std::span<const std::optional<std::string>> accepted_captions,
                           const RenderOptions& options = {});

RenderedPrompt render_task_without_caption(const TemplateStore& store, TemplateId id,
                                           const Sample& sample,
                                           const RenderOptions& options = {});

/// "Extra information extracted from the product image: <caption>", prefixed
/// with "[<product title>] " for multi-product tasks (PRP, SR).
std::string caption_block(const Sample& sample, std::size_t item, std::string_view caption);

/// A, B, ..., Z, AA, AB, ...
std::string option_letter(std::size_t index);

/// Display form of a fixed label ("also_buy" -> "also buy", "exact" -> "Exact").
std::string display_label(TaskKind task, std::string_view label);

}  // namespace caslie
