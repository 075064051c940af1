#include <benchmark/benchmark.h>

#include <memory>

#include "dmicf/eval.hpp"
#include "dmicf/synthetic.hpp"
#include "dmicf/trainer.hpp"

using namespace dmicf;

namespace {

std::shared_ptr<const InteractionGraph> planted_graph(std::size_t users, std::size_t items) {
  PlantedBlocksConfig c;
  c.users = users;
  c.items = items;
  c.blocks = 4;
  c.density = 0.2;
  const PlantedBlocks d = make_planted_blocks(c);
  return std::make_shared<const InteractionGraph>(
      InteractionGraph::from_edges(d.num_users, d.num_items, d.train));
}

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.num_prototypes = 8;
  cfg.intent_dim = 16;
  cfg.align_dim = 8;
  return cfg;
}

}  // namespace

// Arg: negatives per positive.
static void BM_TrainStep(benchmark::State& state) {
  auto g = planted_graph(200, 200);
  DmicfModel model(small_model(), g, 1);
  TrainConfig t;
  t.negatives = static_cast<std::size_t>(state.range(0));
  Trainer trainer(model, t);
  const auto edges = g->edges();
  const auto batch = trainer.make_batch(std::span(edges).first(std::min<std::size_t>(256, edges.size())));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch));
  state.SetItemsProcessed(state.iterations() * batch.positives.size() * (t.negatives + 1));
}
BENCHMARK(BM_TrainStep)->Arg(10)->Arg(20)->Arg(40)->Arg(60)->Unit(benchmark::kMillisecond);

static void BM_Propagate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto g = planted_graph(n, n);
  const Tensor2 eu = xavier_init(n, 32, 1), ev = xavier_init(n, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(propagate(*g, eu, ev));
  state.SetItemsProcessed(state.iterations() * g->num_edges());
}
BENCHMARK(BM_Propagate)->Arg(1000)->Arg(4000)->Unit(benchmark::kMicrosecond);

static void BM_Evaluate(benchmark::State& state) {
  auto g = planted_graph(200, 200);
  const DmicfModel model(small_model(), g, 1);
  std::vector<std::vector<std::size_t>> relevant(g->num_users());
  for (std::size_t u = 0; u < relevant.size(); ++u) relevant[u] = {u % g->num_items()};
  const std::size_t cutoffs[] = {20, 40};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(model, *g, relevant, cutoffs));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
