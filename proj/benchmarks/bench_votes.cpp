#include <benchmark/benchmark.h>

#include <random>

#include "caslie/pipeline.hpp"

using namespace caslie;

namespace {

void BM_MajorityDecision(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<VoteValue> votes(static_cast<std::size_t>(state.range(0)));
  for (auto& v : votes) v = static_cast<VoteValue>(rng() % 3);
  for (auto _ : state) benchmark::DoNotOptimize(majority_decision(votes));
}
BENCHMARK(BM_MajorityDecision)->Arg(3)->Arg(5)->Arg(9);

void BM_ParseVote(benchmark::State& state) {
  const std::string raw = "  \"Yes.\" The caption describes the case. ";
  for (auto _ : state) benchmark::DoNotOptimize(parse_vote(raw));
}
BENCHMARK(BM_ParseVote);

}  // namespace
