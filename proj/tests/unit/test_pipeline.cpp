#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "caslie/error.hpp"
#include "caslie/pipeline.hpp"
#include "synthetic.hpp"

using namespace caslie;
namespace t = caslie::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Oracle: count and compare, written without the library helper.
bool oracle_use(const std::vector<VoteValue>& votes) {
  int balance = 0;
  for (auto v : votes) balance += v == VoteValue::kYes ? 1 : (v == VoteValue::kNo ? -1 : 0);
  return balance > 0;
}

std::vector<VoteValue> decode(unsigned code, std::size_t n) {
  std::vector<VoteValue> out;
  for (std::size_t i = 0; i < n; ++i, code /= 3) out.push_back(static_cast<VoteValue>(code % 3));
  return out;
}

std::size_t pow3(std::size_t n) {
  std::size_t r = 1;
  while (n--) r *= 3;
  return r;
}

// Every caption decided "use" is in the fused prompt, every other one is not.
void expect_contained(const PipelineRecord& r, const Sample& s) {
  ASSERT_EQ(r.captions.size(), s.images.size());
  ASSERT_EQ(r.verdicts.size(), s.images.size());
  for (std::size_t i = 0; i < r.captions.size(); ++i) {
    if (r.captions[i].failed) {
      EXPECT_EQ(r.verdicts[i].decision, Decision::kDiscard);
      continue;
    }
    const std::string block = caption_block(s, i, r.captions[i].text);
    const bool present = r.fused_prompt.find(block) != std::string::npos;
    EXPECT_EQ(present, r.verdicts[i].decision == Decision::kUse) << r.sample_id << " image " << i;
  }
}

}  // namespace

TEST(ParseVote, Examples) {
  EXPECT_EQ(parse_vote("Yes."), VoteValue::kYes);
  EXPECT_EQ(parse_vote("no, the caption is generic"), VoteValue::kNo);
  EXPECT_EQ(parse_vote("The caption seems fine"), VoteValue::kAbstain);
}

TEST(ParseVote, HandLabelledAnswers) {
  const std::vector<std::pair<std::string, VoteValue>> table = {
      {"Yes", VoteValue::kYes},
      {"yes", VoteValue::kYes},
      {"YES", VoteValue::kYes},
      {"Yes.", VoteValue::kYes},
      {"Yes!", VoteValue::kYes},
      {"  yes  ", VoteValue::kYes},
      {"\"Yes\"", VoteValue::kYes},
      {"'yes'", VoteValue::kYes},
      {"**Yes**", VoteValue::kYes},
      {"Yes\n", VoteValue::kYes},
      {"Yes, the caption mentions the material.", VoteValue::kYes},
      {"Yes - it adds the color.", VoteValue::kYes},
      {"yes: helpful", VoteValue::kYes},
      {"Yes\nThe image shows the brand logo.", VoteValue::kYes},
      {"(yes)", VoteValue::kYes},
      {"Yes; it describes size.", VoteValue::kYes},
      {"yes it helps", VoteValue::kYes},
      {"Yes it is", VoteValue::kYes},
      {"No", VoteValue::kNo},
      {"no", VoteValue::kNo},
      {"NO.", VoteValue::kNo},
      {"No!", VoteValue::kNo},
      {"  no\n", VoteValue::kNo},
      {"\"No\"", VoteValue::kNo},
      {"**No**", VoteValue::kNo},
      {"No, the caption is generic.", VoteValue::kNo},
      {"No. It only restates the title.", VoteValue::kNo},
      {"no - not relevant", VoteValue::kNo},
      {"No\nThe caption repeats the title.", VoteValue::kNo},
      {"(no)", VoteValue::kNo},
      {"no it does not", VoteValue::kNo},
      {"No; irrelevant.", VoteValue::kNo},
      {"The caption seems fine", VoteValue::kAbstain},
      {"Maybe", VoteValue::kAbstain},
      {"I think so", VoteValue::kAbstain},
      {"It is helpful", VoteValue::kAbstain},
      {"Not helpful", VoteValue::kAbstain},
      {"Nope", VoteValue::kAbstain},
      {"Yeah", VoteValue::kAbstain},
      {"Yesterday's photo", VoteValue::kAbstain},
      {"None of the above", VoteValue::kAbstain},
      {"Nothing useful", VoteValue::kAbstain},
      {"", VoteValue::kAbstain},
      {"   ", VoteValue::kAbstain},
      {"The answer is yes", VoteValue::kAbstain},
      {"Hard to say. Yes or no depends on the query.", VoteValue::kAbstain},
      {"Y", VoteValue::kAbstain},
      {"N", VoteValue::kAbstain},
      {"\nYes", VoteValue::kYes},
      {"Unsure\nYes", VoteValue::kAbstain},
  };
  ASSERT_EQ(table.size(), 50u);
  for (const auto& [raw, want] : table) EXPECT_EQ(parse_vote(raw), want) << "'" << raw << "'";
}

TEST(Majority, AllCombinationsAgainstOracle) {
  for (std::size_t n = 1; n <= 5; ++n)
    for (unsigned code = 0; code < pow3(n); ++code) {
      const auto votes = decode(code, n);
      EXPECT_EQ(majority_decision(votes) == Decision::kUse, oracle_use(votes)) << n << ":" << code;
    }
  EXPECT_EQ(pow3(5), 243u);
}

TEST(Majority, TiesAndAbstentionsDiscard) {
  const std::vector<VoteValue> tie = {VoteValue::kYes, VoteValue::kNo};
  const std::vector<VoteValue> none = {VoteValue::kAbstain, VoteValue::kAbstain, VoteValue::kAbstain};
  const std::vector<VoteValue> lone = {VoteValue::kAbstain, VoteValue::kYes, VoteValue::kAbstain};
  EXPECT_EQ(majority_decision(tie), Decision::kDiscard);
  EXPECT_EQ(majority_decision(none), Decision::kDiscard);
  EXPECT_EQ(majority_decision(lone), Decision::kUse);
  EXPECT_EQ(majority_decision(std::vector<VoteValue>{}), Decision::kDiscard);
}

TEST(Majority, MonotoneInYesVotes) {
  for (unsigned code = 0; code < pow3(5); ++code) {
    const auto votes = decode(code, 5);
    if (majority_decision(votes) != Decision::kUse) continue;
    for (std::size_t i = 0; i < votes.size(); ++i) {
      if (votes[i] == VoteValue::kYes) continue;
      auto more = votes;
      more[i] = VoteValue::kYes;
      EXPECT_EQ(majority_decision(more), Decision::kUse);
    }
  }
}

TEST(Majority, PermutationInvariant) {
  std::mt19937 rng(7);
  for (unsigned code = 0; code < pow3(5); ++code) {
    auto votes = decode(code, 5);
    const auto d = majority_decision(votes);
    for (int k = 0; k < 5; ++k) {
      std::shuffle(votes.begin(), votes.end(), rng);
      EXPECT_EQ(majority_decision(votes), d);
    }
  }
}

TEST(GateStrategy, ParseAndValidate) {
  EXPECT_EQ(GateStrategy::parse("uia", {}).kind, StrategyKind::kUseAlways);
  const auto mv = GateStrategy::parse("mv", {"a", "b", "c"});
  EXPECT_EQ(mv.kind, StrategyKind::kMajority);
  EXPECT_EQ(mv.voters.size(), 3u);
  EXPECT_TRUE(mv.validate().empty());
  const auto single = GateStrategy::parse("single:a", {"x"});
  EXPECT_EQ(single.voters, std::vector<std::string>{"a"});
  EXPECT_EQ(single.label(), "single:a");
  EXPECT_THROW(GateStrategy::parse("vote", {}), ConfigError);
  EXPECT_THROW(GateStrategy::parse("single:", {}), ConfigError);
  EXPECT_THROW(GateStrategy::majority({}).validate(), ConfigError);
  EXPECT_EQ(GateStrategy::majority({"a", "b"}).validate().size(), 1u);
}

TEST(Pipeline, ConstructionChecksEndpoints) {
  t::Rig rig;
  EXPECT_THROW(rig.pipeline(GateStrategy::majority({"v1", "nobody"})), ConfigError);
  PipelineConfig pc;
  pc.captioner = "task";  // text-only
  pc.task_model = "task";
  EXPECT_THROW(Pipeline(pc, rig.templates, rig.endpoints, nullptr), ConfigError);
  pc.captioner = "captioner";
  pc.strategy = GateStrategy::single("v1");
  pc.render.gate_with_image = true;
  EXPECT_THROW(Pipeline(pc, rig.templates, rig.endpoints, nullptr), ConfigError);
}

TEST(Pipeline, UseAlwaysSkipsVoters) {
  t::Rig rig;
  const auto p = rig.pipeline(GateStrategy::use_always());
  const auto samples = t::synthetic_dataset(3);
  for (const auto& s : samples) {
    const auto r = p.process(s);
    for (const auto& v : r.verdicts) {
      EXPECT_EQ(v.decision, Decision::kUse);
      EXPECT_TRUE(v.votes.empty());
    }
    expect_contained(r, s);
  }
  for (const auto& v : rig.voters) EXPECT_EQ(rig.server.requests_for(v), 0u);
}

TEST(Pipeline, MajorityGatingContainment) {
  t::Rig rig;
  const auto p = rig.pipeline(GateStrategy::majority(rig.voters));
  std::size_t used = 0, discarded = 0;
  for (const auto& s : t::synthetic_dataset(8)) {
    const auto r = p.process(s);
    expect_contained(r, s);
    for (const auto& v : r.verdicts) {
      ASSERT_EQ(v.votes.size(), 3u);
      std::vector<VoteValue> values;
      for (const auto& vote : v.votes) {
        EXPECT_EQ(vote.parsed, parse_vote(vote.raw));
        values.push_back(vote.parsed);
      }
      EXPECT_EQ(v.decision == Decision::kUse, oracle_use(values));
      (v.decision == Decision::kUse ? used : discarded)++;
    }
  }
  // the scripted voters disagree often enough to exercise both branches
  EXPECT_GT(used, 0u);
  EXPECT_GT(discarded, 0u);
}

TEST(Pipeline, SingleVoterDecides) {
  t::Rig rig;
  const auto p = rig.pipeline(GateStrategy::single("v2"));
  for (const auto& s : t::synthetic_dataset(4)) {
    const auto r = p.process(s);
    for (const auto& v : r.verdicts) {
      ASSERT_EQ(v.votes.size(), 1u);
      EXPECT_EQ(v.votes[0].voter, "v2");
      EXPECT_EQ(v.decision == Decision::kUse, v.votes[0].parsed == VoteValue::kYes);
    }
    expect_contained(r, s);
  }
  EXPECT_EQ(rig.server.requests_for("v1"), 0u);
}

TEST(Pipeline, CaptionFailureIsIsolatedToItsImage) {
  t::Rig rig;
  Sample s = t::make_sample(TaskKind::kSR, 1);
  ASSERT_EQ(s.images.size(), 3u);
  const std::string slow_title = s.context.at("history.1.title");
  rig.server.set_handler([&](const t::MockCall& c) {
    t::MockReply r = t::scripted_reply(c);
    if (t::classify_prompt(c.text) == t::PromptStage::kCaptioning) {
      if (c.text.find(slow_title) != std::string::npos) r.delay = std::chrono::milliseconds(1500);
    } else if (t::classify_prompt(c.text) == t::PromptStage::kGate) {
      r.content = "Yes";
    }
    return r;
  });

  EndpointRegistry endpoints;
  auto cap = rig.server.endpoint("captioner", "cap-model");
  cap.timeout_seconds = 0.3;
  cap.max_retries = 0;
  endpoints.add(cap);
  endpoints.add(rig.server.endpoint("task", "task-model", false));
  for (const auto& v : rig.voters) endpoints.add(rig.server.endpoint(v, v, false));
  PipelineConfig pc;
  pc.captioner = "captioner";
  pc.task_model = "task";
  pc.strategy = GateStrategy::majority(rig.voters);
  Pipeline p(pc, rig.templates, endpoints, nullptr);

  const auto r = p.process(s);
  EXPECT_FALSE(r.failed);
  EXPECT_FALSE(r.captions[0].failed);
  EXPECT_TRUE(r.captions[1].failed);
  EXPECT_FALSE(r.captions[1].error.empty());
  EXPECT_FALSE(r.captions[2].failed);
  EXPECT_EQ(r.verdicts[1].decision, Decision::kDiscard);
  EXPECT_EQ(r.verdicts[1].note, "caption failed");
  EXPECT_TRUE(r.verdicts[1].votes.empty());
  EXPECT_EQ(r.verdicts[0].decision, Decision::kUse);
  EXPECT_EQ(r.verdicts[2].decision, Decision::kUse);
  for (const auto& v : rig.voters) EXPECT_EQ(rig.server.requests_for(v), 2u);
  expect_contained(r, s);
}

TEST(Pipeline, FourImageSequenceGatedPerImage) {
  t::Rig rig;
  Sample s = t::make_sample(TaskKind::kSR, 2);
  const std::size_t n0 = history_length(s);
  for (std::size_t i = n0; i < 4; ++i) {
    s.context[history_key(i, "title")] = "Extra item " + std::to_string(i);
    s.context[history_key(i, "category")] = "Category";
    s.context[history_key(i, "brand")] = "Brand";
    s.images.push_back({"https://img.example/extra/" + std::to_string(i) + ".jpg", 500, 500});
  }
  ASSERT_TRUE(validate_sample(s).empty());
  ASSERT_EQ(s.images.size(), 4u);
  const auto p = rig.pipeline(GateStrategy::majority(rig.voters));
  const auto caps = p.caption_stage(s);
  ASSERT_EQ(caps.size(), 4u);
  // accept the captions of images 0 and 2 only
  rig.server.set_handler([&](const t::MockCall& c) {
    t::MockReply r = t::scripted_reply(c);
    if (t::classify_prompt(c.text) == t::PromptStage::kGate) {
      const bool keep = c.text.find(caps[0].text) != std::string::npos ||
                        c.text.find(caps[2].text) != std::string::npos;
      r.content = keep ? "Yes" : "No";
    }
    return r;
  });
  std::vector<Verdict> verdicts;
  for (std::size_t i = 0; i < 4; ++i) verdicts.push_back(p.gate_stage(s, i, caps[i]));
  for (const auto& v : rig.voters) EXPECT_EQ(rig.server.requests_for(v), 4u);
  EXPECT_EQ(verdicts[0].decision, Decision::kUse);
  EXPECT_EQ(verdicts[1].decision, Decision::kDiscard);
  EXPECT_EQ(verdicts[2].decision, Decision::kUse);
  EXPECT_EQ(verdicts[3].decision, Decision::kDiscard);
  const auto r = p.fuse_and_predict(s, caps, verdicts);
  expect_contained(r, s);
  std::vector<std::optional<std::string>> accepted(4);
  for (std::size_t i = 0; i < 4; ++i)
    if (verdicts[i].decision == Decision::kUse) accepted[i] = caps[i].text;
  EXPECT_EQ(r.fused_prompt, render_task(rig.templates, s, accepted).text);
}

TEST(Pipeline, VoterFailureAbstains) {
  t::Rig rig;
  rig.server.set_handler([](const t::MockCall& c) {
    t::MockReply r = t::scripted_reply(c);
    if (t::classify_prompt(c.text) == t::PromptStage::kGate) {
      r.content = "Yes";
      if (c.model == "v2") r.status = 400;
    }
    return r;
  });
  const auto p = rig.pipeline(GateStrategy::majority(rig.voters));
  const auto r = p.process(t::make_sample(TaskKind::kAP, 0));
  ASSERT_EQ(r.verdicts.size(), 1u);
  const auto& votes = r.verdicts[0].votes;
  ASSERT_EQ(votes.size(), 3u);
  EXPECT_EQ(votes[1].parsed, VoteValue::kAbstain);
  EXPECT_FALSE(votes[1].error.empty());
  EXPECT_EQ(r.verdicts[0].decision, Decision::kUse);
}

TEST(Pipeline, TaskFailureMarksRecord) {
  t::Rig rig;
  rig.server.set_handler([](const t::MockCall& c) {
    t::MockReply r = t::scripted_reply(c);
    if (c.model == "task-model") r.status = 400;
    return r;
  });
  const auto r = rig.pipeline(GateStrategy::use_always()).process(t::make_sample(TaskKind::kPSI, 0));
  EXPECT_TRUE(r.failed);
  EXPECT_FALSE(r.failure.empty());
  EXPECT_TRUE(r.raw_output.empty());
  EXPECT_FALSE(r.fused_prompt.empty());
}

TEST(Records, JsonRoundTrip) {
  t::Rig rig;
  const auto r = rig.pipeline(GateStrategy::majority(rig.voters)).process(t::make_sample(TaskKind::kPRP, 4));
  const auto back = record_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_FALSE(to_json(r).contains("timings"));
}

TEST(Run, OutputsInInputOrderAndReproducible) {
  auto samples = t::synthetic_dataset(5);
  std::reverse(samples.begin(), samples.end());
  t::Rig rig;
  const auto p = rig.pipeline(GateStrategy::majority(rig.voters), nullptr, 6);
  RunOptions o1;
  o1.output_dir = t::fresh_dir("run-a");
  const auto a = run_pipeline(p, samples, o1);
  EXPECT_TRUE(a.finished);
  ASSERT_EQ(a.records.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) EXPECT_EQ(a.records[i].sample_id, samples[i].id);
  EXPECT_TRUE(std::filesystem::exists(o1.output_dir / kRecordsFile));
  EXPECT_TRUE(std::filesystem::exists(o1.output_dir / kTimingsFile));
  EXPECT_TRUE(std::filesystem::exists(o1.output_dir / kRunManifestFile));
  EXPECT_FALSE(std::filesystem::exists(o1.output_dir / kPartialRecordsFile));

  const auto manifest = nlohmann::json::parse(slurp(o1.output_dir / kRunManifestFile));
  EXPECT_EQ(manifest["strategy"], "mv");
  EXPECT_EQ(manifest["counts"]["samples"], samples.size());
  EXPECT_EQ(manifest["template_digests"].size(), 21u);
  EXPECT_EQ(manifest["template_digests"]["ap_gate.txt"], rig.templates.digest({TaskKind::kAP, Stage::kGate}));

  RunOptions o2;
  o2.output_dir = t::fresh_dir("run-b");
  run_pipeline(rig.pipeline(GateStrategy::majority(rig.voters), nullptr, 1), samples, o2);
  EXPECT_EQ(slurp(o1.output_dir / kRecordsFile), slurp(o2.output_dir / kRecordsFile));
  EXPECT_EQ(read_records(o1.output_dir / kRecordsFile).size(), samples.size());
}

TEST(Run, DuplicateIdsRejected) {
  t::Rig rig;
  std::vector<Sample> samples = {t::make_sample(TaskKind::kAP, 1), t::make_sample(TaskKind::kAP, 1)};
  RunOptions o;
  o.output_dir = t::fresh_dir("run-dup");
  EXPECT_THROW(run_pipeline(rig.pipeline(GateStrategy::use_always()), samples, o), DataError);
  EXPECT_EQ(rig.server.requests(), 0u);
}

TEST(Run, ResumeSkipsFinishedSamples) {
  const auto samples = t::synthetic_dataset(10);
  ASSERT_EQ(samples.size(), 70u);
  t::Rig rig;
  const auto p = rig.pipeline(GateStrategy::majority(rig.voters));

  RunOptions ref;
  ref.output_dir = t::fresh_dir("resume-ref");
  run_pipeline(p, samples, ref);

  RunOptions o;
  o.output_dir = t::fresh_dir("resume");
  o.stop_after = 40;
  const auto first = run_pipeline(p, samples, o);
  EXPECT_FALSE(first.finished);
  EXPECT_EQ(first.processed, 40u);
  EXPECT_TRUE(std::filesystem::exists(o.output_dir / kPartialRecordsFile));
  EXPECT_FALSE(std::filesystem::exists(o.output_dir / kRecordsFile));

  // a torn final line from the interruption
  {
    std::ofstream out(o.output_dir / kPartialRecordsFile, std::ios::app);
    out << R"({"sample_id":"torn)";
  }
  rig.server.reset_counters();
  o.stop_after.reset();
  o.resume = true;
  const auto second = run_pipeline(p, samples, o);
  EXPECT_TRUE(second.finished);
  EXPECT_EQ(second.resumed, 40u);
  EXPECT_EQ(second.processed, 30u);
  EXPECT_EQ(rig.server.requests_for("task-model"), 30u);
  EXPECT_EQ(slurp(o.output_dir / kRecordsFile), slurp(ref.output_dir / kRecordsFile));
}

TEST(Run, CachedRerunSendsNothing) {
  const auto samples = t::synthetic_dataset(2);
  t::Rig rig;
  CompletionCache cache(t::fresh_dir("run-cache"));
  const auto p = rig.pipeline(GateStrategy::majority(rig.voters), &cache);
  RunOptions o;
  o.output_dir = t::fresh_dir("run-c1");
  run_pipeline(p, samples, o);
  rig.server.reset_counters();
  RunOptions o2;
  o2.output_dir = t::fresh_dir("run-c2");
  run_pipeline(p, samples, o2);
  EXPECT_EQ(rig.server.requests(), 0u);
  EXPECT_EQ(slurp(o.output_dir / kRecordsFile), slurp(o2.output_dir / kRecordsFile));
}

TEST(Usage, RateCountsEveryVerdict) {
  std::vector<PipelineRecord> records;
  for (std::size_t i = 0; i < 1000; ++i) {
    PipelineRecord r;
    r.sample_id = "s" + std::to_string(i);
    r.task = TaskKind::kSA;
    Verdict v;
    v.decision = i < 745 ? Decision::kUse : Decision::kDiscard;
    r.verdicts.push_back(v);
    records.push_back(r);
  }
  PipelineRecord multi;
  multi.task = TaskKind::kSR;
  for (int k = 0; k < 4; ++k) {
    Verdict v;
    v.decision = k == 0 ? Decision::kUse : Decision::kDiscard;
    multi.verdicts.push_back(v);
  }
  records.push_back(multi);
  PipelineRecord empty;
  empty.task = TaskKind::kAP;
  records.push_back(empty);

  const auto rates = caption_usage_rate(records);
  EXPECT_DOUBLE_EQ(rates.at(TaskKind::kSA), 0.745);
  EXPECT_DOUBLE_EQ(rates.at(TaskKind::kSR), 0.25);
  EXPECT_FALSE(rates.count(TaskKind::kAP));
}

TEST(Usage, UiaIsOneAndMajorityMatchesVotes) {
  const auto samples = t::synthetic_dataset(6);
  t::Rig rig;
  std::vector<PipelineRecord> uia, mv;
  const auto pu = rig.pipeline(GateStrategy::use_always());
  const auto pm = rig.pipeline(GateStrategy::majority(rig.voters));
  for (const auto& s : samples) {
    uia.push_back(pu.process(s));
    mv.push_back(pm.process(s));
  }
  for (const auto& [task, rate] : caption_usage_rate(uia)) EXPECT_DOUBLE_EQ(rate, 1.0) << to_string(task);

  std::map<TaskKind, std::pair<double, double>> oracle;
  for (const auto& r : mv)
    for (const auto& v : r.verdicts) {
      std::vector<VoteValue> values;
      for (const auto& vote : v.votes) values.push_back(parse_vote(vote.raw));
      oracle[r.task].first += oracle_use(values) ? 1 : 0;
      oracle[r.task].second += 1;
    }
  const auto rates = caption_usage_rate(mv);
  for (const auto& [task, c] : oracle) EXPECT_DOUBLE_EQ(rates.at(task), c.first / c.second);

  // UIA and MV see identical captions; only the gate differs
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ASSERT_EQ(uia[i].captions.size(), mv[i].captions.size());
    for (std::size_t k = 0; k < uia[i].captions.size(); ++k) EXPECT_EQ(uia[i].captions[k].text, mv[i].captions[k].text);
  }
}

TEST(DryRun, WritesBundlesWithoutRequests) {
  t::Rig rig;
  auto samples = t::synthetic_dataset(1);
  samples.resize(5);
  const auto dir = t::fresh_dir("dry");
  EXPECT_EQ(dry_run(rig.templates, samples, dir), 5u);
  EXPECT_EQ(rig.server.requests(), 0u);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "prompts")) {
    ++files;
    const auto j = nlohmann::json::parse(slurp(e.path()));
    EXPECT_FALSE(j["task_prompt"].get<std::string>().empty());
    EXPECT_FALSE(j["captioning"].empty());
  }
  EXPECT_EQ(files, 5u);
}
