#include "bnp/evalsuite.hpp"
#include "bnp/objectives.hpp"
#include "bnp/train.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

namespace {

bnp::TrainConfig config(bnp::ModelKind kind) {
  bnp::TrainConfig c;
  c.model = kind;
  c.hidden = 64;
  c.batch_tasks = 16;
  c.seed = 3;
  return c;
}

void gradient(benchmark::State& state, bnp::ModelKind kind, bnp::Execution exec) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto c = config(kind);
  bnp::Model model(kind, c.arch(), c.seed);
  const auto tasks = bnp::training_batch(c, 0);
  const auto noise = bnp::training_noise(c, model, 0, tasks);
  const bnp::LossOptions opts{c.k_train, c.flags, true};
  for (auto _ : state) benchmark::DoNotOptimize(bnp::loss_and_grad(model, tasks, noise, opts, exec));
  state.SetItemsProcessed(state.iterations() * c.batch_tasks);
}

void evaluation(benchmark::State& state, bnp::ModelKind kind, bnp::Execution exec) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto c = config(kind);
  bnp::Model model(kind, c.arch(), c.seed);
  bnp::EvalSpec spec;
  spec.n_batches = 4;
  spec.batch_tasks = 4;
  spec.k = 50;
  for (auto _ : state) benchmark::DoNotOptimize(bnp::evaluate(model, spec, exec).target_ll);
  state.SetItemsProcessed(state.iterations() * spec.n_batches * spec.batch_tasks);
}

}  // namespace

BENCHMARK_CAPTURE(gradient, cnp_serial, bnp::ModelKind::Cnp, bnp::Execution::Serial)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(gradient, cnp_parallel, bnp::ModelKind::Cnp, bnp::Execution::Parallel)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(gradient, bnp_serial, bnp::ModelKind::Bnp, bnp::Execution::Serial)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(gradient, bnp_parallel, bnp::ModelKind::Bnp, bnp::Execution::Parallel)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(evaluation, bnp_serial, bnp::ModelKind::Bnp, bnp::Execution::Serial)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(evaluation, bnp_parallel, bnp::ModelKind::Bnp, bnp::Execution::Parallel)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
