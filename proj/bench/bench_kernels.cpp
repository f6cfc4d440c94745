#include <map>

#include <benchmark/benchmark.h>

#include "dro/gcivr.hpp"
#include "dro/kernels.hpp"
#include "dro/problems.hpp"
#include "dro/reductions.hpp"

using namespace dro;

namespace {

struct Fixture {
  TabularDataset data;
  CompositeProblem problem;
  Vector x;
  Vector x_prev;
};

const Fixture& fixture(Index m, bool mlp) {
  static std::map<std::pair<Index, bool>, Fixture> cache;
  auto it = cache.find({m, mlp});
  if (it != cache.end()) return it->second;
  Fixture f;
  if (mlp) {
    f.data = problems::make_nonconvex_toy(m, 1);
  } else {
    f.data = problems::make_synthetic(problems::SyntheticKind::TwoGroupBias, m, 20, 1).data;
  }
  const auto losses = problems::make_losses(mlp ? problems::LossKind::Mlp2 : problems::LossKind::Logistic, f.data, 16);
  f.problem = reductions::build_chi2(losses, {1.0});
  f.x = Vector::Constant(f.problem.dim_x, 0.05);
  f.x_prev = Vector::Constant(f.problem.dim_x, 0.04);
  return cache.emplace(std::make_pair(m, mlp), std::move(f)).first->second;
}

template <bool Parallel>
void BM_full_batch(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0), state.range(1) != 0);
  const auto ids = kernels::IndexSet::range(0, f.problem.m);
  for (auto _ : state) {
    auto s = Parallel ? kernels::parallel::sums(f.problem, f.x, ids) : kernels::serial::sums(f.problem, f.x, ids);
    benchmark::DoNotOptimize(s.g.data());
  }
  state.SetItemsProcessed(state.iterations() * f.problem.m);
}

template <bool Parallel>
void BM_delta(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0), state.range(1) != 0);
  const auto ids = kernels::IndexSet::range(0, f.problem.m);
  for (auto _ : state) {
    auto s = Parallel ? kernels::parallel::delta_sums(f.problem, f.x, f.x_prev, ids)
                      : kernels::serial::delta_sums(f.problem, f.x, f.x_prev, ids);
    benchmark::DoNotOptimize(s.g.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * f.problem.m);
}

template <bool Parallel>
void BM_solve(benchmark::State& state) {
  const Fixture& f = fixture(state.range(0), state.range(1) != 0);
  gcivr::GcivrConfig cfg;
  cfg.eta = 0.05;
  cfg.T = 5;
  cfg.K = 1;
  cfg.record_every = 0;
  cfg.exec.parallel = Parallel;
  for (auto _ : state) {
    auto rep = gcivr::solve(f.problem, Vector::Zero(f.problem.dim_x), cfg);
    benchmark::DoNotOptimize(rep.final_psi);
  }
}

void sizes(benchmark::internal::Benchmark* b) {
  for (long m : {1024, 8192, 65536}) b->Args({m, 0});
  for (long m : {1024, 8192}) b->Args({m, 1});
  b->ArgNames({"m", "mlp"});
  b->Unit(benchmark::kMicrosecond);
  b->UseRealTime();
}

}  // namespace

BENCHMARK(BM_full_batch<false>)->Apply(sizes);
BENCHMARK(BM_full_batch<true>)->Apply(sizes);
BENCHMARK(BM_delta<false>)->Apply(sizes);
BENCHMARK(BM_delta<true>)->Apply(sizes);
BENCHMARK(BM_solve<false>)->Apply(sizes);
BENCHMARK(BM_solve<true>)->Apply(sizes);

BENCHMARK_MAIN();
