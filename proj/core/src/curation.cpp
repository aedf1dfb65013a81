#include "caslie/curation.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "caslie/error.hpp"

namespace caslie {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string unordered_pair_key(const std::string& a, const std::string& b) {
  return a < b ? a + '\x1f' + b : b + '\x1f' + a;
}

std::string sample_id(TaskKind task, const std::string& raw_id) {
  return task_slug(task) + "-" + raw_id;
}

}  // namespace

std::string_view to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::kAmazonReview: return "amazon_review";
    case SourceTag::kAmazonQa: return "amazon_qa";
    case SourceTag::kMave: return "mave";
    case SourceTag::kShoppingQueries: return "shopping_queries";
  }
  return "?";
}

SourceTag parse_source(std::string_view name) {
  for (auto t : {SourceTag::kAmazonReview, SourceTag::kAmazonQa, SourceTag::kMave,
                 SourceTag::kShoppingQueries}) {
    if (to_string(t) == name) return t;
  }
  throw DataError("unknown source tag: " + std::string(name));
}

RawRecord raw_record_from_json(const nlohmann::json& j) {
  RawRecord r;
  try {
    r.source = parse_source(j.at("source").get<std::string>());
    r.id = j.at("id").get<std::string>();
    if (j.contains("task") && !j["task"].is_null()) {
      r.task = parse_task(j["task"].get<std::string>());
    }
    r.category = j.value("category", "");
    const std::string domain = j.value("domain", "ind");
    if (domain == "ind") {
      r.domain = Domain::kInDomain;
    } else if (domain == "ood") {
      r.domain = Domain::kOutOfDomain;
    } else {
      throw DataError("unknown domain: " + domain);
    }
    if (j.contains("split") && !j["split"].is_null()) {
      r.split = j["split"].get<std::string>();
    }
    if (j.contains("context")) {
      for (const auto& [k, v] : j["context"].items()) r.context[k] = v.get<std::string>();
    }
    if (j.contains("images")) {
      for (const auto& ij : j["images"]) {
        ImageRef img;
        if (ij.is_string()) {
          img.locator = ij.get<std::string>();
        } else {
          img.locator = ij.at("locator").get<std::string>();
          if (ij.contains("width")) img.width = ij["width"].get<int>();
          if (ij.contains("height")) img.height = ij["height"].get<int>();
        }
        r.images.push_back(std::move(img));
      }
    }
    r.image_available = j.value("image_available", true);
    r.label = j.value("label", "");
    r.english = j.value("english", true);
    r.user = j.value("user", "");
    r.item = j.value("item", "");
    r.position = j.value("position", std::int64_t{0});
    r.product_a = j.value("product_a", "");
    r.product_b = j.value("product_b", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed raw record: ") + e.what());
  }
  return r;
}

std::vector<RawRecord> read_raw_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RawRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(raw_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

CategoryAssignment rank_and_assign_categories(const std::vector<RawRecord>& records,
                                              std::size_t ind_count,
                                              std::size_t ood_count) {
  std::map<std::string, std::size_t> freq;
  for (const auto& r : records) {
    if (r.category.empty()) throw DataError("record " + r.id + " has no category");
    ++freq[r.category];
  }
  const std::size_t need = ind_count + ood_count;
  if (freq.size() < need) {
    throw ConfigError("need ≥" + std::to_string(need) + " categories, have " +
                      std::to_string(freq.size()));
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  // map iteration is already lexicographic, so a stable sort on count keeps
  // ties in name order
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  CategoryAssignment out;
  for (std::size_t i = 0; i < need; ++i) {
    (i < ind_count ? out.in_domain : out.out_of_domain).push_back(ranked[i].first);
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n,
                                       const std::array<std::uint32_t, 3>& weights) {
  const std::uint64_t total = std::uint64_t{weights[0]} + weights[1] + weights[2];
  if (total == 0) throw ConfigError("split weights sum to zero");
  std::array<std::size_t, 3> sizes{};
  std::array<std::uint64_t, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const std::uint64_t scaled = static_cast<std::uint64_t>(n) * weights[i];
    sizes[i] = static_cast<std::size_t>(scaled / total);
    remainder[i] = scaled % total;
    assigned += sizes[i];
  }
  // largest remainder first; earlier parts win ties
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

LeaveLastOut leave_last_out(const std::vector<UserSequence>& sequences) {
  LeaveLastOut out;
  for (const auto& seq : sequences) {
    const auto& items = seq.items;
    if (items.size() < 3) {
      out.rejected.push_back(seq.user + ": length<3");
      continue;
    }
    const std::size_t n = items.size();
    std::vector<std::string> prefix(items.begin(), items.end() - 2);
    out.validation.push_back({seq.user, prefix, items[n - 2]});
    std::vector<std::string> test_history(items.begin(), items.end() - 1);
    out.test.push_back({seq.user, std::move(test_history), items[n - 1]});
    out.train_prefixes.push_back({seq.user, std::move(prefix)});
  }
  return out;
}

SubstituteLabel relabel_esci(std::string_view label) {
  const std::string l = lower(label);
  if (l == "substitute" || l == "s") return SubstituteLabel::kSubstitute;
  if (l == "exact" || l == "e" || l == "complement" || l == "c" ||
      l == "irrelevant" || l == "i") {
    return SubstituteLabel::kNonSubstitute;
  }
  throw DataError("unknown ESCI label: " + std::string(label));
}

std::vector<RelationPair> dedup_conflicting_relations(
    const std::vector<RelationPair>& pairs) {
  std::unordered_map<std::string, std::set<std::string>> relations;
  for (const auto& p : pairs) relations[unordered_pair_key(p.a, p.b)].insert(p.relation);
  std::unordered_set<std::string> emitted;
  std::vector<RelationPair> out;
  for (const auto& p : pairs) {
    const std::string key = unordered_pair_key(p.a, p.b);
    if (relations[key].size() > 1) continue;
    if (emitted.insert(key).second) out.push_back(p);
  }
  return out;
}

bool filter_min_words(std::string_view text, std::size_t threshold) {
  std::istringstream in{std::string(text)};
  std::size_t words = 0;
  std::string w;
  while (in >> w) ++words;
  return words > threshold;
}

bool image_resolvable(const ImageRef& image) { return !image.locator.empty(); }

std::vector<Sample> enforce_image_availability(const std::vector<Sample>& samples,
                                               const ImageResolver& resolvable) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.images.empty()) continue;
    if (!std::all_of(s.images.begin(), s.images.end(), resolvable)) continue;
    out.push_back(s);
  }
  return out;
}

std::string overlap_key(const Sample& sample) {
  std::string buf(to_string(sample.task));
  buf.push_back('\x1e');
  for (const auto& [k, v] : sample.context) {
    buf += k;
    buf.push_back('\x1f');
    buf += collapse_ws(v);
    buf.push_back('\x1e');
  }
  buf += normalize_label(sample.gold);
  return sha256_hex(buf);
}

std::vector<Sample> remove_train_test_overlap(const std::vector<Sample>& train,
                                              const std::vector<Sample>& test,
                                              const SampleKey& key) {
  std::unordered_set<std::string> test_keys;
  for (const auto& s : test) test_keys.insert(key(s));
  std::vector<Sample> out;
  for (const auto& s : train) {
    if (!test_keys.count(key(s))) out.push_back(s);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

namespace {

struct TaskBuild {
  TaskKind task;
  std::vector<Sample> presplit_train;
  std::vector<Sample> presplit_validation;
  std::vector<Sample> presplit_test;
  std::vector<Sample> pool;  // IND, needs an 8:1:1 split
  std::vector<Sample> ood;
  std::vector<std::string> diagnostics;
};

void note(TaskBuild& b, std::size_t count, const std::string& what) {
  if (count) b.diagnostics.push_back(task_slug(b.task) + ": " + std::to_string(count) + " " + what);
}

Sample base_sample(TaskKind task, const RawRecord& r) {
  Sample s;
  s.id = sample_id(task, r.id);
  s.task = task;
  s.context = r.context;
  s.images = r.images;
  return s;
}

bool record_has_images(const RawRecord& r, const ImageResolver& resolvable) {
  return r.image_available && !r.images.empty() &&
         std::all_of(r.images.begin(), r.images.end(), resolvable);
}

void route(TaskBuild& b, const RawRecord& r, Sample s) {
  if (r.domain == Domain::kOutOfDomain) {
    b.ood.push_back(std::move(s));
    return;
  }
  if (!r.split) {
    b.pool.push_back(std::move(s));
    return;
  }
  const std::string sp = lower(*r.split);
  if (sp == "train") {
    b.presplit_train.push_back(std::move(s));
  } else if (sp == "validation" || sp == "val" || sp == "dev") {
    b.presplit_validation.push_back(std::move(s));
  } else if (sp == "test") {
    b.presplit_test.push_back(std::move(s));
  } else {
    throw DataError("record " + r.id + ": unknown split " + *r.split);
  }
}

std::string mpc_label(std::string_view raw) {
  const std::string l = lower(raw);
  if (l == "e") return "exact";
  if (l == "s") return "substitute";
  if (l == "c") return "complement";
  if (l == "i") return "irrelevant";
  return l;
}

std::string join_lines(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back('\n');
    out += parts[i];
  }
  return out;
}

void build_simple(TaskBuild& b, const std::vector<const RawRecord*>& records,
                  const CurationOptions& opt) {
  std::size_t no_image = 0, short_review = 0, non_english = 0, ood_dropped = 0;
  for (const RawRecord* r : records) {
    if (!record_has_images(*r, opt.resolvable)) {
      ++no_image;
      continue;
    }
    Sample s = base_sample(b.task, *r);
    switch (b.task) {
      case TaskKind::kAP:
        s.gold = normalize_label(r->label);
        break;
      case TaskKind::kSA: {
        auto it = r->context.find(field::kReview);
        if (it == r->context.end() || !filter_min_words(it->second, opt.sa_min_words)) {
          ++short_review;
          continue;
        }
        s.gold = normalize_label(r->label);
        break;
      }
      case TaskKind::kPSI:
      case TaskKind::kMPC:
        if (!opt.english(*r)) {
          ++non_english;
          continue;
        }
        if (b.task == TaskKind::kPSI) {
          s.gold = relabel_esci(r->label) == SubstituteLabel::kSubstitute ? "yes" : "no";
        } else {
          s.gold = mpc_label(r->label);
        }
        break;
      default:
        throw DataError("unsupported task in simple builder");
    }
    if (!split_allowed(b.task, Split::kOodTest) && r->domain == Domain::kOutOfDomain) {
      ++ood_dropped;
      continue;
    }
    route(b, *r, std::move(s));
  }
  note(b, no_image, "records without available images");
  note(b, short_review, "reviews with <=" + std::to_string(opt.sa_min_words) + " words");
  note(b, non_english, "non-English records");
  note(b, ood_dropped, "out-of-domain records for a task without OOD split");
}

void build_cc(TaskBuild& b, const std::vector<const RawRecord*>& records,
              const CurationOptions& opt) {
  std::vector<RawRecord> flat;
  flat.reserve(records.size());
  for (const RawRecord* r : records) flat.push_back(*r);
  const CategoryAssignment cats =
      rank_and_assign_categories(flat, opt.cc_ind_categories, opt.cc_ood_categories);
  const std::set<std::string> ind(cats.in_domain.begin(), cats.in_domain.end());
  const std::set<std::string> ood(cats.out_of_domain.begin(), cats.out_of_domain.end());
  const std::string ind_options = join_lines({ind.begin(), ind.end()});
  const std::string ood_options = join_lines({ood.begin(), ood.end()});

  std::size_t no_image = 0, unranked = 0;
  for (const RawRecord* r : records) {
    const bool is_ind = ind.count(r->category) > 0;
    const bool is_ood = ood.count(r->category) > 0;
    if (!is_ind && !is_ood) {
      ++unranked;
      continue;
    }
    if (!record_has_images(*r, opt.resolvable)) {
      ++no_image;
      continue;
    }
    Sample s = base_sample(TaskKind::kCC, *r);
    s.gold = normalize_label(r->category);
    if (!s.context.count(field::kOptions)) {
      s.context[field::kOptions] = is_ind ? ind_options : ood_options;
    }
    RawRecord routed = *r;
    routed.domain = is_ind ? Domain::kInDomain : Domain::kOutOfDomain;
    route(b, routed, std::move(s));
  }
  note(b, unranked, "records outside the top-ranked categories");
  note(b, no_image, "records without available images");
}

void build_prp(TaskBuild& b, const std::vector<const RawRecord*>& records,
               const CurationOptions& opt) {
  std::vector<RelationPair> pairs;
  std::vector<const RawRecord*> with_images;
  std::size_t no_image = 0;
  for (const RawRecord* r : records) {
    if (!record_has_images(*r, opt.resolvable)) {
      ++no_image;
      continue;
    }
    with_images.push_back(r);
    pairs.push_back({r->product_a, r->product_b, normalize_label(r->label)});
  }
  const auto kept = dedup_conflicting_relations(pairs);
  std::unordered_set<std::string> kept_keys;
  for (const auto& p : kept) kept_keys.insert(unordered_pair_key(p.a, p.b));
  std::unordered_set<std::string> emitted;
  std::size_t dropped = 0;
  for (const RawRecord* r : with_images) {
    const std::string key = unordered_pair_key(r->product_a, r->product_b);
    if (!kept_keys.count(key) || !emitted.insert(key).second) {
      ++dropped;
      continue;
    }
    Sample s = base_sample(TaskKind::kPRP, *r);
    std::string label = normalize_label(r->label);
    std::replace(label.begin(), label.end(), ' ', '_');
    s.gold = label;
    route(b, *r, std::move(s));
  }
  note(b, no_image, "records without available images");
  note(b, dropped, "duplicate or conflicting product pairs");
}

struct SrItem {
  std::string title, category, brand;
  ImageRef image;
};

void build_sr(TaskBuild& b, const std::vector<const RawRecord*>& records,
              const CurationOptions& opt) {
  for (Domain domain : {Domain::kInDomain, Domain::kOutOfDomain}) {
    std::map<std::string, SrItem> pool;
    std::map<std::string, std::vector<const RawRecord*>> by_user;
    std::size_t no_image = 0;
    for (const RawRecord* r : records) {
      if (r->domain != domain) continue;
      if (!record_has_images(*r, opt.resolvable)) {
        ++no_image;
        continue;
      }
      const std::string item = r->item.empty() ? r->id : r->item;
      auto get = [&](const char* k) {
        auto it = r->context.find(k);
        return it == r->context.end() ? std::string() : it->second;
      };
      pool.emplace(item, SrItem{get("title"), get("category"), get("brand"), r->images.front()});
      by_user[r->user].push_back(r);
    }
    note(b, no_image, "interactions without available images");

    std::vector<UserSequence> sequences;
    for (auto& [user, recs] : by_user) {
      std::stable_sort(recs.begin(), recs.end(),
                       [](const RawRecord* x, const RawRecord* y) { return x->position < y->position; });
      UserSequence seq{user, {}};
      for (const RawRecord* r : recs) seq.items.push_back(r->item.empty() ? r->id : r->item);
      sequences.push_back(std::move(seq));
    }
    const LeaveLastOut split = leave_last_out(sequences);
    note(b, split.rejected.size(), "user sequences shorter than 3");

    // candidate pool keyed by normalized title so options stay distinguishable
    std::vector<std::string> pool_ids;
    for (const auto& [id, _] : pool) pool_ids.push_back(id);
    const bool ood = domain == Domain::kOutOfDomain;
    SeededRng rng(derive_seed(opt.plan.seed, ood ? "sr/options/ood" : "sr/options/ind"));

    auto make = [&](const std::string& user, std::vector<std::string> history,
                    const std::string& target, const std::string& role) {
      if (history.size() > opt.sr_max_history) {
        history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(opt.sr_max_history));
      }
      Sample s;
      s.id = std::string("sr-") + (ood ? "ood-" : "") + user + "-" + role;
      s.task = TaskKind::kSR;
      for (std::size_t i = 0; i < history.size(); ++i) {
        const SrItem& it = pool.at(history[i]);
        s.context[history_key(i, "title")] = it.title;
        s.context[history_key(i, "category")] = it.category;
        s.context[history_key(i, "brand")] = it.brand;
        s.images.push_back(it.image);
      }
      const SrItem& tgt = pool.at(target);
      std::set<std::string> seen_titles = {normalize_label(tgt.title)};
      for (const auto& h : history) seen_titles.insert(normalize_label(pool.at(h).title));
      std::vector<std::string> candidates;
      for (const auto& id : pool_ids) {
        if (!seen_titles.count(normalize_label(pool.at(id).title))) candidates.push_back(id);
      }
      std::vector<std::string> options = {tgt.title};
      std::set<std::string> used = {normalize_label(tgt.title)};
      for (std::size_t i = 0; i < candidates.size() && options.size() <= opt.sr_negatives; ++i) {
        std::size_t j = i + rng.below(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
        const std::string& title = pool.at(candidates[i]).title;
        if (used.insert(normalize_label(title)).second) options.push_back(title);
      }
      rng.shuffle(options);
      s.context[field::kOptions] = join_lines(options);
      s.gold = normalize_label(tgt.title);
      return s;
    };

    for (const auto& t : split.test) {
      Sample s = make(t.user, t.history, t.target, "test");
      (ood ? b.ood : b.presplit_test).push_back(std::move(s));
    }
    if (ood) continue;
    for (const auto& v : split.validation) {
      b.presplit_validation.push_back(make(v.user, v.history, v.target, "val"));
    }
    for (const auto& p : split.train_prefixes) {
      if (p.items.size() < 2) continue;
      std::vector<std::string> history(p.items.begin(), p.items.end() - 1);
      b.presplit_train.push_back(make(p.user, std::move(history), p.items.back(), "train"));
    }
  }
}

std::vector<Sample> keep_valid(TaskBuild& b, std::vector<Sample> samples,
                               const LabelConfig& labels) {
  std::vector<Sample> out;
  std::size_t invalid = 0;
  for (auto& s : samples) {
    if (validate_sample(s, labels).empty()) {
      out.push_back(std::move(s));
    } else {
      ++invalid;
    }
  }
  note(b, invalid, "samples failing validation");
  return out;
}

void sort_by_id(std::vector<Sample>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
}

}  // namespace

CuratedDataset curate(const std::vector<RawRecord>& records, const CurationOptions& options) {
  std::map<TaskKind, std::vector<const RawRecord*>> by_task;
  for (const auto& r : records) {
    if (r.task) {
      by_task[*r.task].push_back(&r);
    } else if (r.source == SourceTag::kShoppingQueries) {
      by_task[TaskKind::kPSI].push_back(&r);
      by_task[TaskKind::kMPC].push_back(&r);
    } else {
      throw DataError("record " + r.id + " does not name a task");
    }
  }

  CuratedDataset out;
  out.seed = options.plan.seed;
  for (auto& [task, recs] : by_task) {
    TaskBuild b{task, {}, {}, {}, {}, {}, {}};
    switch (task) {
      case TaskKind::kCC: build_cc(b, recs, options); break;
      case TaskKind::kPRP: build_prp(b, recs, options); break;
      case TaskKind::kSR: build_sr(b, recs, options); break;
      default: build_simple(b, recs, options); break;
    }

    const std::string slug = task_slug(task);
    for (auto* v : {&b.pool, &b.presplit_train, &b.presplit_validation, &b.presplit_test, &b.ood}) {
      *v = keep_valid(b, std::move(*v), options.labels);
      *v = enforce_image_availability(*v, options.resolvable);
      sort_by_id(*v);
    }

    SplitPlan plan = options.plan;
    plan.seed = derive_seed(options.plan.seed, slug + "/split");
    auto parts = split_ratio(b.pool, plan);

    std::map<Split, std::vector<Sample>> splits;
    auto append = [](std::vector<Sample>& dst, std::vector<Sample>& src) {
      dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
    };
    append(splits[Split::kTrain], b.presplit_train);
    append(splits[Split::kTrain], parts.train);
    append(splits[Split::kValidation], b.presplit_validation);
    append(splits[Split::kValidation], parts.validation);
    append(splits[Split::kIndTest], b.presplit_test);
    append(splits[Split::kIndTest], parts.test);
    if (split_allowed(task, Split::kOodTest)) append(splits[Split::kOodTest], b.ood);
    for (auto& [_, v] : splits) sort_by_id(v);

    auto cap = [&](Split s) {
      auto& v = splits[s];
      v = downsample(v, options.plan.caps.cap(s),
                     derive_seed(options.plan.seed, slug + "/downsample/" + std::string(to_string(s))));
    };
    for (Split s : {Split::kValidation, Split::kIndTest, Split::kOodTest}) {
      if (split_allowed(task, s)) cap(s);
    }

    // drop leaked training samples once the test sets are final
    std::vector<Sample> tests = splits[Split::kIndTest];
    if (split_allowed(task, Split::kOodTest)) {
      tests.insert(tests.end(), splits[Split::kOodTest].begin(), splits[Split::kOodTest].end());
    }
    const std::size_t before = splits[Split::kTrain].size();
    splits[Split::kTrain] = remove_train_test_overlap(splits[Split::kTrain], tests);
    note(b, before - splits[Split::kTrain].size(), "training samples overlapping test data");
    cap(Split::kTrain);

    out.tasks.push_back({task, std::move(splits), std::move(b.diagnostics)});
  }
  return out;
}

DatasetManifest write_dataset(const CuratedDataset& dataset, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.seed = dataset.seed;
  for (const auto& t : dataset.tasks) {
    for (Split s : kAllSplits) {
      if (!split_allowed(t.task, s)) continue;
      auto it = t.splits.find(s);
      static const std::vector<Sample> kEmpty;
      const auto& samples = it == t.splits.end() ? kEmpty : it->second;
      const std::string name = dataset_file_name(t.task, s);
      write_samples(out_dir / name, samples);
      manifest.entries.push_back({t.task, s, samples.size(), sha256_file(out_dir / name), name});
    }
  }
  std::ofstream mf(out_dir / "manifest.json", std::ios::trunc);
  if (!mf) throw DataError("cannot write manifest in " + out_dir.string());
  mf << to_json(manifest).dump(2) << '\n';
  return manifest;
}

}  // namespace caslie
