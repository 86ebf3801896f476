#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "proxrl/agents.hpp"
#include "proxrl/bidclick.hpp"
#include "proxrl/constraints.hpp"
#include "proxrl/implicit.hpp"
#include "proxrl/mlp.hpp"
#include "proxrl/rng.hpp"

namespace {

Eigen::VectorXd random_row(proxrl::Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-2.0, 2.0);
  return v;
}

void BM_ConeProjection(benchmark::State& state) {
  proxrl::Rng rng(1, 0);
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < 1024; ++i) rows.push_back(random_row(rng, 5));
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(proxrl::project_monotone_cone(rows[i++ & 1023]));
  }
}
BENCHMARK(BM_ConeProjection);

void BM_ProxNewton(benchmark::State& state) {
  proxrl::Rng rng(2, 0);
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < 1024; ++i) rows.push_back(random_row(rng, 5));
  const double lambda = static_cast<double>(state.range(0)) / 10.0;
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(proxrl::prox_monotone_penalty(rows[i++ & 1023], lambda, 1e-10));
  }
}
BENCHMARK(BM_ProxNewton)->Arg(1)->Arg(10)->Arg(100);

void BM_CgCurvatureSolve(benchmark::State& state) {
  proxrl::Rng rng(3, 0);
  const Eigen::VectorXd u = random_row(rng, 5);
  const Eigen::VectorXd b = random_row(rng, 5);
  const double lambda = 1.0;
  for (auto _ : state) {
    auto apply = [&](const Eigen::Ref<const Eigen::VectorXd>& w) {
      return (w + lambda * proxrl::monotone_penalty_hess_vec(u, w)).eval();
    };
    benchmark::DoNotOptimize(proxrl::cg_solve(apply, b, 1e-10, 5));
  }
}
BENCHMARK(BM_CgCurvatureSolve);

void BM_MlpForwardBatch(benchmark::State& state) {
  const auto p = proxrl::make_mlp({2, 64, 64, 5}, proxrl::Activation::Tanh, 4);
  proxrl::Rng rng(5, 0);
  Eigen::MatrixXd x(2, state.range(0));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    x(0, j) = rng.uniform();
    x(1, j) = 0.2 + 0.2 * rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(proxrl::forward_batch(p, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBatch)->Arg(64)->Arg(256);

void BM_MlpVjpBatch(benchmark::State& state) {
  const auto p = proxrl::make_mlp({2, 64, 64, 5}, proxrl::Activation::Tanh, 6);
  proxrl::Rng rng(7, 0);
  Eigen::MatrixXd x(2, 256), cots(5, 256);
  for (Eigen::Index j = 0; j < 256; ++j) {
    x(0, j) = rng.uniform();
    x(1, j) = 0.2 + 0.2 * rng.uniform();
    cots.col(j) = random_row(rng, 5);
  }
  proxrl::ForwardTrace trace;
  proxrl::forward_batch_traced(p, x, trace);
  for (auto _ : state) benchmark::DoNotOptimize(proxrl::vjp_batch(p, trace, cots));
}
BENCHMARK(BM_MlpVjpBatch);

void BM_DatasetGeneration(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(proxrl::generate_dataset(state.range(0), 12345));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DatasetGeneration)->Arg(10000);

void BM_TrainingStep(benchmark::State& state) {
  const proxrl::Dataset data = proxrl::generate_dataset(4096, 9);
  proxrl::TrainConfig cfg;
  cfg.steps = 1;
  cfg.eval_every = 0;
  cfg.batch_size = 256;
  for (auto _ : state) {
    state.PauseTiming();
    proxrl::TrainConfig one = cfg;
    one.steps = 8;
    state.ResumeTiming();
    benchmark::DoNotOptimize(proxrl::train_constraint_aware(data, one));
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
