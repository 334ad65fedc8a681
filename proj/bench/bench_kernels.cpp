// Serial reference vs OpenMP variant of each parallel kernel.

#include <benchmark/benchmark.h>

#include <random>

#include "lgwae/metrics.hpp"
#include "lgwae/refiner.hpp"
#include "lgwae/scene_synth.hpp"
#include "lgwae/trainer.hpp"

using namespace lgwae;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Tensor t(Shape{r, c});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

const std::vector<SceneSample>& scenes() {
  static const std::vector<SceneSample> s = [] {
    SynthOptions o;
    o.count = 16;
    o.seed = 1;
    return synthesize(o);
  }();
  return s;
}

std::vector<const LaneGraph*> gt_batch() {
  std::vector<const LaneGraph*> batch;
  for (const auto& s : scenes()) {
    if (!s.gt.empty() && batch.size() < 8) batch.push_back(&s.gt);
  }
  return batch;
}

Tensor prior(std::size_t n, std::size_t d) {
  Tensor t(Shape{n, d});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (double& v : t.data()) v = n01(rng);
  return t;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Tensor out(Shape{n, n});
  for (auto _ : state) {
    if (Parallel) {
      kernels::matmul(a, false, b, false, out, false);
    } else {
      kernels::matmul_serial(a, false, b, false, out, false);
    }
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <bool Parallel>
void BM_BatchGradient(benchmark::State& state) {
  const ModelParams p = init_params(ModelConfig{}, 1);
  const auto batch = gt_batch();
  const Tensor z = prior(batch.size(), p.config().d_model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? batch_gradient(p, batch, z) : batch_gradient_serial(p, batch, z));
  }
}

template <bool Parallel>
void BM_RefineBatch(benchmark::State& state) {
  const ModelParams p = init_params(ModelConfig{}, 2);
  std::vector<RefineInput> inputs;
  for (const auto& s : scenes()) inputs.push_back({scene_stem(s.index), s.estimate.graph});
  RefineConfig rc;
  rc.iterations = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? refine_batch(inputs, p, rc) : refine_batch_serial(inputs, p, rc));
  }
}

template <bool Parallel>
void BM_Evaluate(benchmark::State& state) {
  std::vector<EvalPair> pairs;
  for (const auto& s : scenes()) pairs.push_back({scene_stem(s.index), filter_existing(s.estimate.graph, 0.5), s.gt});
  for (auto _ : state) benchmark::DoNotOptimize(Parallel ? evaluate(pairs) : evaluate_serial(pairs));
}

template <bool Parallel>
void BM_Synthesize(benchmark::State& state) {
  SynthOptions o;
  o.count = static_cast<std::size_t>(state.range(0));
  o.seed = 4;
  for (auto _ : state) benchmark::DoNotOptimize(Parallel ? synthesize(o) : synthesize_serial(o));
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_BatchGradient<false>)->Name("batch_gradient/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<true>)->Name("batch_gradient/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RefineBatch<false>)->Name("refine_batch/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RefineBatch<true>)->Name("refine_batch/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate<false>)->Name("evaluate/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate<true>)->Name("evaluate/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Synthesize<false>)->Name("synthesize/serial")->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Synthesize<true>)->Name("synthesize/parallel")->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
