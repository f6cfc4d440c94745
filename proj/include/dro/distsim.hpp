#pragma once

#include <vector>

#include "dro/gcivr.hpp"

/// In-process simulation of synchronous p-worker training with server-side averaging.
namespace dro::distsim {

/// Contiguous shards; shard i covers [begin[i], begin[i] + size[i]).
struct Partition {
  std::vector<Index> begin;
  std::vector<Index> size;

  /// Equal split with the remainder on the last worker.
  static Partition contiguous(Index m, Index p);
  static Partition from_sizes(const std::vector<Index>& sizes);
  Index workers() const { return size.size(); }
  Index total() const;
};

/// Share of a batch of size B held by worker i under an equal split (remainder to the last).
Index batch_share(Index B, Index p, Index i);

struct DistConfig {
  gcivr::GcivrConfig base;
  Index p = 1;
  std::vector<Index> shard_sizes;  // empty: contiguous equal split
  bool parallel_workers = false;   // run each round's worker updates concurrently

  Partition partition(Index m) const;
  void validate(Index m) const;
};

struct WorkerState {
  Vector y;
  Matrix z;
  Vector w;
  Rng rng;
  OracleCounter counter;
};

struct DistState {
  EpochState server;  // x, x_prev and the averaged estimators
  std::vector<WorkerState> workers;
};

/// One epoch of the distributed scheme. Every worker samples from its own shard; the server
/// averages worker estimators weighted by shard size in ascending worker order and takes the step.
/// Worker calls go to each worker's counter and to `total`.
void dist_run_epoch(const CompositeProblem& problem, DistState& state, const gcivr::EpochSize& size,
                    double eta, const Partition& part, const DistConfig& dcfg, OracleCounter& total,
                    const std::function<void(Index)>& on_step = {});

struct DistReport {
  gcivr::SolverReport report;  // counters are summed over devices
  std::vector<OracleCounter> per_device;
  std::uint64_t max_device_g_calls = 0;
};

DistReport dist_solve(const CompositeProblem& problem, const Vector& x0, const DistConfig& dcfg);
DistReport dist_solve_restarted(const gcivr::ProblemBuilder& builder, const Vector& x0, const DistConfig& dcfg);

/// Per-device g-value calls of one stage: sum_t (share_i(B_t) + c S_t (tau_t - 1)), c = 1 for a
/// full pass (S_t = m, worker evaluates its shard once) and 2 otherwise.
std::uint64_t analytic_device_calls(const gcivr::Schedule& schedule, Index m, const Partition& part, Index i,
                                    Index T);

}  // namespace dro::distsim
