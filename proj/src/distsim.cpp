#include "dro/distsim.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>

namespace dro::distsim {

Partition Partition::contiguous(Index m, Index p) {
  if (p == 0 || p > m) throw std::invalid_argument("partition: need 1 <= p <= m");
  std::vector<Index> sizes(p, m / p);
  sizes.back() += m % p;
  return from_sizes(sizes);
}

Partition Partition::from_sizes(const std::vector<Index>& sizes) {
  Partition part;
  Index at = 0;
  for (Index s : sizes) {
    if (s == 0) throw std::invalid_argument("partition: empty shard");
    part.begin.push_back(at);
    part.size.push_back(s);
    at += s;
  }
  return part;
}

Index Partition::total() const {
  Index t = 0;
  for (Index s : size) t += s;
  return t;
}

Index batch_share(Index B, Index p, Index i) {
  const Index base = B / p;
  return std::max<Index>(1, i + 1 == p ? base + B % p : base);
}

Partition DistConfig::partition(Index m) const {
  return shard_sizes.empty() ? Partition::contiguous(m, p) : Partition::from_sizes(shard_sizes);
}

void DistConfig::validate(Index m) const {
  base.validate();
  if (p == 0 || p > m) throw std::invalid_argument("dist: need 1 <= p <= m");
  const Partition part = partition(m);
  if (part.workers() != p) throw std::invalid_argument("dist: shard count differs from p");
  if (part.total() != m) throw std::invalid_argument("dist: shards do not cover every index exactly once");
}

namespace {

void worker_batch(const CompositeProblem& problem, const Vector& x, WorkerState& wk, Index begin, Index n,
                  Index count, bool full) {
  kernels::ComponentSums s;
  if (full) {
    s = kernels::serial::sums(problem, x, kernels::IndexSet::range(begin, begin + n));
    count = n;
  } else {
    std::vector<Index> ids;
    sample_indices(wk.rng, count, begin, begin + n, ids);
    s = kernels::serial::sums(problem, x, kernels::IndexSet::list(ids));
  }
  const double d = static_cast<double>(count);
  wk.y = s.g / d;
  wk.z = s.jac / d;
  wk.w = s.h_grad / d;
  wk.counter.add_components(count);
}

void worker_delta(const CompositeProblem& problem, const Vector& x, const Vector& x_prev, WorkerState& wk,
                  Index begin, Index n, Index S) {
  std::vector<Index> ids;
  sample_indices(wk.rng, S, begin, begin + n, ids);
  const kernels::ComponentSums s = kernels::serial::delta_sums(problem, x, x_prev, kernels::IndexSet::list(ids));
  const double d = static_cast<double>(S);
  wk.y += s.g / d;
  wk.z += s.jac / d;
  wk.w += s.h_grad / d;
  wk.counter.add_components(2 * S);
}

template <class Fn>
void for_workers(Index p, bool parallel, Fn&& fn) {
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(p); ++i) fn(static_cast<Index>(i));
  } else {
    for (Index i = 0; i < p; ++i) fn(i);
  }
}

// Server aggregation in fixed worker order.
void aggregate(const CompositeProblem& problem, DistState& state, const Partition& part) {
  EpochState& sv = state.server;
  sv.y = Vector::Zero(problem.dim_g);
  sv.z = Matrix::Zero(problem.dim_g, problem.dim_x);
  sv.w = Vector::Zero(problem.dim_x);
  const double m = static_cast<double>(problem.m);
  for (Index i = 0; i < part.workers(); ++i) {
    const double weight = static_cast<double>(part.size[i]) / m;
    sv.y += weight * state.workers[i].y;
    sv.z += weight * state.workers[i].z;
    sv.w += weight * state.workers[i].w;
  }
}

void sync_total(const DistState& state, const std::vector<OracleCounter>& before, OracleCounter& total) {
  for (Index i = 0; i < state.workers.size(); ++i) {
    const OracleCounter& now = state.workers[i].counter;
    total.g_value_calls += now.g_value_calls - before[i].g_value_calls;
    total.g_jacobian_calls += now.g_jacobian_calls - before[i].g_jacobian_calls;
    total.h_gradient_calls += now.h_gradient_calls - before[i].h_gradient_calls;
  }
}

}  // namespace

void dist_run_epoch(const CompositeProblem& problem, DistState& state, const gcivr::EpochSize& size, double eta,
                    const Partition& part, const DistConfig& dcfg, OracleCounter& total,
                    const std::function<void(Index)>& on_step) {
  if (size.tau < 1 || size.S < 1 || size.B < 1) throw std::invalid_argument("dist: epoch sizes must be at least 1");
  const Index p = part.workers();
  const bool full_batch = size.B == problem.m;
  const bool full_inner = size.S == problem.m;
  EpochState& sv = state.server;

  auto snapshot = [&] {
    std::vector<OracleCounter> c(p);
    for (Index i = 0; i < p; ++i) c[i] = state.workers[i].counter;
    return c;
  };
  auto step = [&](Index j) {
    Vector fprime(problem.dim_g);
    problem.f(sv.y, &fprime);
    total.f_outer_calls += 1;
    const Vector grad = sv.z.transpose() * fprime + sv.w;
    sv.x_prev = sv.x;
    sv.x = problem.r.prox(eta, sv.x - eta * grad);
    total.prox_calls += 1;
    if (on_step) on_step(j);
  };

  auto before = snapshot();
  for_workers(p, dcfg.parallel_workers, [&](Index i) {
    worker_batch(problem, sv.x, state.workers[i], part.begin[i], part.size[i], batch_share(size.B, p, i),
                 full_batch);
  });
  sync_total(state, before, total);
  aggregate(problem, state, part);
  step(1);

  for (Index j = 2; j <= size.tau; ++j) {
    before = snapshot();
    for_workers(p, dcfg.parallel_workers, [&](Index i) {
      if (full_inner) {
        worker_batch(problem, sv.x, state.workers[i], part.begin[i], part.size[i], 0, true);
      } else {
        worker_delta(problem, sv.x, sv.x_prev, state.workers[i], part.begin[i], part.size[i], size.S);
      }
    });
    sync_total(state, before, total);
    aggregate(problem, state, part);
    step(j);
  }
}

DistReport dist_solve_restarted(const gcivr::ProblemBuilder& builder, const Vector& x0, const DistConfig& dcfg) {
  auto devices = std::make_shared<std::vector<OracleCounter>>(dcfg.p);
  auto factory = [&dcfg, devices](const CompositeProblem& problem, std::uint64_t stage_seed) -> gcivr::EpochRunner {
    dcfg.validate(problem.m);
    auto state = std::make_shared<DistState>();
    state->workers.resize(dcfg.p);
    for (Index i = 0; i < dcfg.p; ++i) {
      state->workers[i].rng = Rng(derive_seed(stage_seed, i));
      state->workers[i].counter = (*devices)[i];
    }
    const Partition part = dcfg.partition(problem.m);
    return [&problem, &dcfg, state, part, devices](EpochState& es, const gcivr::EpochSize& size,
                                                   OracleCounter& counter,
                                                   const std::function<void(Index)>& on_step) {
      state->server.x = es.x;
      state->server.x_prev = es.x_prev;
      // Keep the driver's view of x current so its recording sees every step.
      auto relay = [&](Index j) {
        es.x = state->server.x;
        es.x_prev = state->server.x_prev;
        es.y = state->server.y;
        es.z = state->server.z;
        es.w = state->server.w;
        if (on_step) on_step(j);
      };
      dist_run_epoch(problem, *state, size, dcfg.base.eta, part, dcfg, counter, relay);
      for (Index i = 0; i < dcfg.p; ++i) (*devices)[i] = state->workers[i].counter;
    };
  };
  DistReport out;
  out.report = gcivr::solve_restarted_with(builder, x0, dcfg.base, factory);
  out.per_device = *devices;
  for (const OracleCounter& c : out.per_device) {
    out.max_device_g_calls = std::max(out.max_device_g_calls, c.g_value_calls);
  }
  return out;
}

DistReport dist_solve(const CompositeProblem& problem, const Vector& x0, const DistConfig& dcfg) {
  return dist_solve_restarted([&problem](Index, const Vector&) { return problem; }, x0, dcfg);
}

std::uint64_t analytic_device_calls(const gcivr::Schedule& schedule, Index m, const Partition& part, Index i,
                                    Index T) {
  const Index p = part.workers();
  std::uint64_t total = 0;
  for (Index t = 1; t <= T; ++t) {
    const gcivr::EpochSize e = schedule.at(t, m);
    const std::uint64_t batch = e.B == m ? part.size[i] : batch_share(e.B, p, i);
    const std::uint64_t inner = e.S == m ? part.size[i] : 2 * e.S;
    total += batch + inner * (e.tau - 1);
  }
  return total;
}

}  // namespace dro::distsim
