#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "nemo/cnml.hpp"
#include "nemo/models.hpp"
#include "nemo/numerics.hpp"
#include "nemo/optimizer.hpp"
#include "nemo/tasks.hpp"

namespace {

using namespace nemo;

void BM_MlpForward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng(1);
  const Mlp mlp = Mlp::random({8, {width, width}, 1}, rng);
  const std::vector<double> x(8, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(mlp, x));
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(256);

void BM_BceLossAndGrad(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  Rng rng(2);
  const auto m = DiscretizedLogisticModel::random(8, {64, 64}, K, K, rng);
  const std::vector<double> x(8, 0.3);
  std::vector<double> grad(m.mlp().num_params());
  for (auto _ : state) {
    benchmark::DoNotOptimize(m.loss_and_grad(x, K / 2, grad, 1.0));
  }
}
BENCHMARK(BM_BceLossAndGrad)->Arg(8)->Arg(32);

// One augmented update of all K models on a 32-row minibatch.
void BM_NmlInnerStep(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const GeneratedTask g = gen_narrow_support(4, 64, 0);
  NemoConfig c;
  c.K = K;
  c.pretrain_epochs = 0;
  NemoState st = nemo_setup(c, g.data);
  const auto mb = sample_minibatch(g.data.size(), 32, st.rng);
  const std::vector<double> q = st.batch.x.front();
  for (auto _ : state) {
    nml_inner_step(st.ensemble, g.data, st.bins, std::span<const double>(q), mb);
  }
  state.SetItemsProcessed(state.iterations() * K);
}
BENCHMARK(BM_NmlInnerStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_CnmlEstimate(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const GeneratedTask g = gen_narrow_support(4, 64, 0);
  NemoConfig c;
  c.K = K;
  c.pretrain_epochs = 0;
  const NemoState st = nemo_setup(c, g.data);
  const std::vector<double> q = st.batch.x.front();
  for (auto _ : state) benchmark::DoNotOptimize(cnml_estimate(st.ensemble, q));
}
BENCHMARK(BM_CnmlEstimate)->Arg(8)->Arg(32);

void BM_NemoIteration(benchmark::State& state) {
  const GeneratedTask g = gen_narrow_support(4, 64, 0);
  NemoConfig c;
  c.pretrain_epochs = 0;
  NemoState st = nemo_setup(c, g.data);
  std::vector<RunEvent> events;
  for (auto _ : state) nemo_iteration(st, g.data, c, events);
}
BENCHMARK(BM_NemoIteration)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
