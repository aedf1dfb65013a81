#include <benchmark/benchmark.h>

#include <random>

#include "caslie/eval.hpp"

using namespace caslie;

namespace {

ConfusionMatrix random_matrix(std::size_t classes, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("c" + std::to_string(k));
  ConfusionMatrix cm(names);
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < n; ++i) cm.add(rng() % classes, rng() % classes);
  return cm;
}

void BM_MacroPrf(benchmark::State& state) {
  const auto cm = random_matrix(static_cast<std::size_t>(state.range(0)), 10000);
  for (auto _ : state) benchmark::DoNotOptimize(macro_prf(cm));
}
BENCHMARK(BM_MacroPrf)->Arg(2)->Arg(4)->Arg(6);

void BM_ParsePrediction(benchmark::State& state) {
  const auto space = label_space_for(TaskKind::kMPC);
  const std::string raw = "After reading the query, the relevance is: Substitute.";
  for (auto _ : state) benchmark::DoNotOptimize(parse_prediction(TaskKind::kMPC, raw, space, {}));
}
BENCHMARK(BM_ParsePrediction);

}  // namespace
