#include "doctest.h"

#include "dro/distsim.hpp"
#include "fixtures.hpp"

using namespace dro;
using namespace dro::distsim;
using fixtures::vec;

namespace {

std::vector<Vector> iterates(const std::function<void(gcivr::GcivrConfig&)>& run, gcivr::GcivrConfig& cfg) {
  std::vector<Vector> xs;
  cfg.after_step = [&](const gcivr::StepInfo& info) { xs.push_back(info.state->x); };
  run(cfg);
  cfg.after_step = {};
  return xs;
}

}  // namespace

TEST_CASE("partitions") {
  const Partition p = Partition::contiguous(10, 3);
  CHECK(p.begin == std::vector<Index>{0, 3, 6});
  CHECK(p.size == std::vector<Index>{3, 3, 4});
  CHECK(p.total() == 10);
  CHECK(batch_share(10, 3, 0) == 3);
  CHECK(batch_share(10, 3, 2) == 4);
  CHECK(batch_share(2, 4, 1) == 1);
  DistConfig d;
  d.p = 5;
  CHECK_THROWS(d.validate(4));
  d.p = 2;
  d.shard_sizes = {1, 2};
  CHECK_THROWS(d.validate(4));
  d.shard_sizes = {1, 3};
  CHECK_NOTHROW(d.validate(4));
}

TEST_CASE("one worker reproduces the centralized solver bit for bit") {
  const auto q = fixtures::quad_composite(20, 3, 4);
  DistConfig d;
  d.base.eta = 0.02;
  d.base.T = 5;
  d.base.K = 2;
  d.base.seed = 11;
  d.p = 1;
  std::vector<Vector> central, dist;
  d.base.after_step = [&](const gcivr::StepInfo& i) { central.push_back(i.state->x); };
  const auto c = gcivr::solve(q.problem, Vector::Zero(3), d.base);
  d.base.after_step = [&](const gcivr::StepInfo& i) { dist.push_back(i.state->x); };
  const auto r = dist_solve(q.problem, Vector::Zero(3), d);
  REQUIRE(central.size() == dist.size());
  for (std::size_t k = 0; k < central.size(); ++k) CHECK(central[k] == dist[k]);
  CHECK(r.report.final_x == c.final_x);
  CHECK(r.report.counters == c.counters);
  CHECK(r.per_device.size() == 1);
  CHECK(r.per_device[0].g_value_calls == c.counters.g_value_calls);
}

TEST_CASE("full-batch distributed runs track the centralized run") {
  const auto q = fixtures::quad_composite(16, 3, 5);
  gcivr::GcivrConfig base;
  base.eta = 0.05;
  base.T = 10;
  base.schedule = gcivr::Schedule::constant_size(5, 16, 16);
  const auto central =
      iterates([&](gcivr::GcivrConfig& c) { gcivr::solve(q.problem, Vector::Ones(3), c); }, base);
  for (Index p : {2, 4}) {
    DistConfig d;
    d.base = base;
    d.p = p;
    const auto dist =
        iterates([&](gcivr::GcivrConfig& c) { d.base = c; dist_solve(q.problem, Vector::Ones(3), d); }, base);
    REQUIRE(dist.size() == central.size());
    double worst = 0;
    for (std::size_t k = 0; k < dist.size(); ++k) worst = std::max(worst, (dist[k] - central[k]).cwiseAbs().maxCoeff());
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("server average of worker batch means") {
  const auto pr = fixtures::scalar_linear(vec({1, 2, 3, 4}), fixtures::identity_outer());
  DistConfig d;
  d.p = 2;
  DistState state;
  state.server.x = vec({1});
  state.server.x_prev = state.server.x;
  state.workers.resize(2);
  OracleCounter total;
  double y0 = 0;
  dist_run_epoch(pr, state, {1, 4, 4}, 0.0, d.partition(4), d, total, [&](Index) { y0 = state.server.y(0); });
  CHECK(y0 == doctest::Approx(2.5));
  CHECK(state.workers[0].y(0) == doctest::Approx(1.5));
  CHECK(state.workers[1].y(0) == doctest::Approx(3.5));
  CHECK(total.g_value_calls == 4);
}

TEST_CASE("unequal shards are weighted by size") {
  const auto pr = fixtures::scalar_linear(vec({1, 2, 3, 4, 10}), fixtures::identity_outer());
  DistConfig d;
  d.p = 2;
  d.shard_sizes = {1, 4};
  DistState state;
  state.server.x = vec({1});
  state.server.x_prev = state.server.x;
  state.workers.resize(2);
  OracleCounter total;
  dist_run_epoch(pr, state, {1, 5, 5}, 0.0, d.partition(5), d, total);
  CHECK(state.server.y(0) == doctest::Approx(4.0));
}

TEST_CASE("per-device counters follow the sharded formula") {
  const auto q = fixtures::quad_composite(16, 2, 3);
  DistConfig d;
  d.base.eta = 0.01;
  d.base.T = 2;
  d.p = 4;
  const auto r = dist_solve(q.problem, Vector::Zero(2), d);
  for (Index i = 0; i < 4; ++i) {
    CHECK(r.per_device[i].g_value_calls == 56);
    CHECK(analytic_device_calls(d.base.schedule, 16, d.partition(16), i, 2) == 56);
  }
  CHECK(r.max_device_g_calls == 56);
  CHECK(r.report.counters.g_value_calls == 4 * 56);

  // Doubling p halves the batch share and leaves the inner term alone: 2 * (2 + 24) = 52.
  d.p = 8;
  const auto r8 = dist_solve(q.problem, Vector::Zero(2), d);
  for (Index i = 0; i < 8; ++i) CHECK(r8.per_device[i].g_value_calls == 52);

  // Adaptive schedule with sampled batches.
  const auto big = fixtures::quad_composite(64, 2, 3);
  d.p = 4;
  d.base.T = 9;
  d.base.schedule = gcivr::Schedule::adaptive(1.0, 0.5);
  const auto ra = dist_solve(big.problem, Vector::Zero(2), d);
  for (Index i = 0; i < 4; ++i)
    CHECK(ra.per_device[i].g_value_calls == analytic_device_calls(d.base.schedule, 64, d.partition(64), i, 9));
}

TEST_CASE("concurrent worker rounds give identical results") {
  const auto q = fixtures::quad_composite(40, 3, 9);
  DistConfig d;
  d.base.eta = 0.02;
  d.base.T = 4;
  d.base.seed = 3;
  d.p = 4;
  const auto a = dist_solve(q.problem, Vector::Zero(3), d);
  d.parallel_workers = true;
  const auto b = dist_solve(q.problem, Vector::Zero(3), d);
  CHECK(a.report.final_x == b.report.final_x);
  CHECK(a.per_device == b.per_device);
}
