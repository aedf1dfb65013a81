#include <benchmark/benchmark.h>

#include "caslie/prompting.hpp"

using namespace caslie;

namespace {

Sample sr_sample(std::size_t history) {
  Sample s;
  s.id = "sr-bench";
  s.task = TaskKind::kSR;
  s.split = Split::kIndTest;
  std::string options;
  for (std::size_t i = 0; i < history; ++i) {
    s.context[history_key(i, "title")] = "Item " + std::to_string(i);
    s.context[history_key(i, "category")] = "Tools";
    s.context[history_key(i, "brand")] = "Acme";
    s.images.push_back(ImageRef{"https://img.example/" + std::to_string(i) + ".jpg", 500, 500});
  }
  for (int k = 0; k < 10; ++k) options += "Candidate " + std::to_string(k) + "\n";
  s.context["options"] = options;
  s.gold = "candidate 0";
  return s;
}

void BM_RenderTaskPrompt(benchmark::State& state) {
  const auto store = TemplateStore::load(CASLIE_TEMPLATE_DIR);
  const auto s = sr_sample(static_cast<std::size_t>(state.range(0)));
  std::vector<std::optional<std::string>> captions(s.images.size(), std::string("A cordless drill with two batteries."));
  for (auto _ : state) benchmark::DoNotOptimize(render_task(store, s, captions));
}
BENCHMARK(BM_RenderTaskPrompt)->Arg(1)->Arg(5)->Arg(10);

}  // namespace
