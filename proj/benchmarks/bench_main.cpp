#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "grapht5/chem/smiles.hpp"
#include "grapht5/harness/model.hpp"
#include "grapht5/harness/dataset.hpp"
#include "grapht5/harness/trainer.hpp"
#include "grapht5/metrics/metrics.hpp"
#include "grapht5/numerics/ops.hpp"

using namespace grapht5;

namespace {

numerics::Tensor<float> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64 &rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(rows * cols);
  for (auto &x : v) x = u(rng);
  return numerics::Tensor<float>::matrix(rows, cols, std::move(v));
}

void BM_Matmul(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const auto a = random_matrix(n, n, rng);
  const auto b = random_matrix(n, n, rng);
  numerics::NoGradScope<float> no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(numerics::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_ParseSmiles(benchmark::State &state) {
  const std::vector<std::string> molecules{
      "CC(=O)OC1=CC=CC=C1C(=O)O", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", "c1ccc2ccccc2c1",
      "OC(=O)CC(O)(CC(O)=O)C(O)=O", "[Cu+2].[O-]S(=O)(=O)[O-]"};
  for (auto _ : state)
    for (const auto &s : molecules) benchmark::DoNotOptimize(chem::smiles_to_graph(s));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(molecules.size()));
}
BENCHMARK(BM_ParseSmiles);

void BM_Metrics(benchmark::State &state) {
  const auto records = harness::synthetic_corpus(64, 5);
  std::vector<std::string> refs, cands;
  for (std::size_t i = 0; i < records.size(); ++i) {
    refs.push_back(records[i].description);
    cands.push_back(records[(i + 1) % records.size()].description);
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::score_corpus(cands, refs));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(refs.size()));
}
BENCHMARK(BM_Metrics);

void BM_ForwardLoss(benchmark::State &state) {
  auto run = harness::RunConfig::tiny();
  run.width = static_cast<std::size_t>(state.range(0));
  const auto records = harness::synthetic_corpus(4, 7);
  const auto vocab = harness::build_vocabulary(records, run.vocab_size);
  harness::GraphT5Model<float> model(run, harness::AblationConfig{}, vocab.size());
  model.set_training(false);
  const auto ex = model.prepare(records[0], vocab);
  numerics::NoGradScope<float> no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.loss(ex));
}
BENCHMARK(BM_ForwardLoss)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
