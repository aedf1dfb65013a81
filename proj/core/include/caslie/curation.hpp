#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caslie/datamodel.hpp"
#include "caslie/digest.hpp"

namespace caslie {

enum class SourceTag { kAmazonReview, kAmazonQa, kMave, kShoppingQueries };

std::string_view to_string(SourceTag tag);
SourceTag parse_source(std::string_view name);

enum class Domain { kInDomain, kOutOfDomain };

/// One line of a raw source file. Which fields matter depends on the task the
/// record feeds; see README for the per-task schema.
struct RawRecord {
  SourceTag source = SourceTag::kAmazonReview;
  std::string id;
  /// Target task; shopping-queries records without one feed both PSI and MPC.
  std::optional<TaskKind> task;
  std::string category;
  Domain domain = Domain::kInDomain;
  /// Original split for sources that ship pre-split ("train", "validation",
  /// "test").
  std::optional<std::string> split;
  std::map<std::string, std::string> context;
  std::vector<ImageRef> images;
  bool image_available = true;
  std::string label;
  bool english = true;
  // SR interactions
  std::string user;
  std::string item;
  std::int64_t position = 0;
  // PRP relation endpoints
  std::string product_a;
  std::string product_b;
};

RawRecord raw_record_from_json(const nlohmann::json& j);
std::vector<RawRecord> read_raw_records(const std::filesystem::path& path);

struct CategoryAssignment {
  std::vector<std::string> in_domain;
  std::vector<std::string> out_of_domain;
};

/// Ranks fine-grained categories by descending frequency (ties broken
/// lexicographically). Ranks 1..ind_count are in-domain, the next ood_count
/// out-of-domain, the rest dropped. Throws ConfigError when fewer than
/// ind_count + ood_count distinct categories exist.
CategoryAssignment rank_and_assign_categories(
    const std::vector<RawRecord>& records, std::size_t ind_count = 100,
    std::size_t ood_count = 100);

struct SplitPlan {
  /// Integer weights for train:validation:test.
  std::array<std::uint32_t, 3> weights = {8, 1, 1};
  SplitCaps caps;
  std::uint64_t seed = 42;
};

/// Sizes for an n-element split by largest remainder; each within 1 of the
/// exact share and summing to n.
std::array<std::size_t, 3> split_sizes(std::size_t n,
                                       const std::array<std::uint32_t, 3>& weights);

template <typename T>
struct SplitParts {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
};

/// Seeded shuffle decides membership; each part keeps input order.
template <typename T>
SplitParts<T> split_ratio(const std::vector<T>& items, const SplitPlan& plan) {
  const auto sizes = split_sizes(items.size(), plan.weights);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SeededRng rng(plan.seed);
  rng.shuffle(order);
  std::vector<int> bucket(items.size(), 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    bucket[order[k]] = k < sizes[0] ? 0 : (k < sizes[0] + sizes[1] ? 1 : 2);
  }
  SplitParts<T> parts;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& dst = bucket[i] == 0 ? parts.train
                               : (bucket[i] == 1 ? parts.validation : parts.test);
    dst.push_back(items[i]);
  }
  return parts;
}

/// Uniform selection of n items without replacement; survivors keep input
/// order. Returns everything when items.size() <= n.
template <typename T>
std::vector<T> downsample(const std::vector<T>& items, std::size_t n,
                          std::uint64_t seed) {
  if (items.size() <= n) return items;
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  SeededRng rng(seed);
  // partial Fisher-Yates: first n slots hold the selection
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

/// One interaction sequence for sequential recommendation.
struct UserSequence {
  std::string user;
  std::vector<std::string> items;
};

struct HeldOutTarget {
  std::string user;
  std::vector<std::string> history;
  std::string target;
};

struct LeaveLastOut {
  /// Per user, the sequence minus its last two items.
  std::vector<UserSequence> train_prefixes;
  std::vector<HeldOutTarget> validation;
  std::vector<HeldOutTarget> test;
  /// "<user>: length<3" for each rejected sequence.
  std::vector<std::string> rejected;
};

LeaveLastOut leave_last_out(const std::vector<UserSequence>& sequences);

enum class SubstituteLabel { kSubstitute, kNonSubstitute };

/// ESCI label ("Exact", "Substitute", "Complement", "Irrelevant"; case
/// insensitive, single-letter codes accepted) to the PSI binary label.
SubstituteLabel relabel_esci(std::string_view label);

struct RelationPair {
  std::string a;
  std::string b;
  std::string relation;

  friend bool operator==(const RelationPair&, const RelationPair&) = default;
};

/// Removes every unordered pair seen with two or more distinct relations and
/// keeps the first occurrence of consistently labelled pairs.
std::vector<RelationPair> dedup_conflicting_relations(
    const std::vector<RelationPair>& pairs);

/// Keep iff the whitespace-token count is strictly greater than threshold.
bool filter_min_words(std::string_view text, std::size_t threshold = 10);

using ImageResolver = std::function<bool(const ImageRef&)>;

/// Default resolver: non-empty locator.
bool image_resolvable(const ImageRef& image);

/// Drops samples with no images or with any unresolvable image.
std::vector<Sample> enforce_image_availability(
    const std::vector<Sample>& samples,
    const ImageResolver& resolvable = image_resolvable);

using SampleKey = std::function<std::string(const Sample&)>;

/// Digest of task, whitespace/case-normalized context fields, and gold.
std::string overlap_key(const Sample& sample);

/// Drops train samples whose key also occurs in test. Test is not touched.
std::vector<Sample> remove_train_test_overlap(const std::vector<Sample>& train,
                                              const std::vector<Sample>& test,
                                              const SampleKey& key = overlap_key);

/// Independent generator seed for one named sampling decision, derived from
/// the run seed so a single --seed reproduces every draw.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

struct CurationOptions {
  SplitPlan plan;
  LabelConfig labels;
  std::size_t cc_ind_categories = 100;
  std::size_t cc_ood_categories = 100;
  std::size_t sa_min_words = 10;
  /// Negatives drawn per SR target to build the candidate list.
  std::size_t sr_negatives = 9;
  /// Most recent history items kept per SR sample.
  std::size_t sr_max_history = 10;
  std::function<bool(const RawRecord&)> english = [](const RawRecord& r) {
    return r.english;
  };
  ImageResolver resolvable = image_resolvable;
};

struct CuratedTask {
  TaskKind task = TaskKind::kAP;
  std::map<Split, std::vector<Sample>> splits;
  /// Per-stage drop reasons, e.g. "sa: 12 reviews with <=10 words".
  std::vector<std::string> diagnostics;
};

struct CuratedDataset {
  std::vector<CuratedTask> tasks;
  std::uint64_t seed = 42;
};

/// Full construction pipeline: filters, relabeling, IND/OOD assignment,
/// splitting, overlap removal, downsampling, validation.
CuratedDataset curate(const std::vector<RawRecord>& records,
                      const CurationOptions& options = {});

/// Writes one file per (task, split) plus manifest.json; returns the manifest.
DatasetManifest write_dataset(const CuratedDataset& dataset,
                              const std::filesystem::path& out_dir);

}  // namespace caslie
