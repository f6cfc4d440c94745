#include "doctest.h"

#include <cmath>

#include "dro/diagnostics.hpp"
#include "dro/gcivr.hpp"
#include "fixtures.hpp"

using namespace dro;
using namespace dro::gcivr;
using fixtures::vec;

TEST_CASE("step size rules") {
  SmoothnessSpec s;
  s.L_h = 1;
  CHECK(derive_step_size(s, Regime::StronglyConvex) == doctest::Approx(0.9));
  CHECK(derive_step_size(s, Regime::Nonconvex) == doctest::Approx(1.8));
  // L_phi = 2 with G0 = 1 via l_h^2 = 1/3.
  s.L_h = 2;
  s.l_h = std::sqrt(1.0 / 3.0);
  CHECK(s.G0() == doctest::Approx(1.0));
  CHECK(derive_step_size(s, Regime::StronglyConvex) == doctest::Approx(0.9 * 2 / (2 + std::sqrt(40.0))));
  CHECK(derive_step_size(s, Regime::StronglyConvex) == doctest::Approx(0.21623).epsilon(1e-4));
  CHECK_THROWS(derive_step_size(SmoothnessSpec{}, Regime::Nonconvex));
}

TEST_CASE("theorem epoch and stage counts round up") {
  CHECK(theorem_epochs(16, 1.0, 0.5) == 3);  // 5 / (4 * 0.5) = 2.5
  CHECK(theorem_epochs(16, 100.0, 0.5) == 1);
  CHECK(theorem_stages(0.01) == 5);
  CHECK(theorem_stages(2.0) == 1);
}

TEST_CASE("schedules") {
  const Schedule f = Schedule::fixed();
  const EpochSize e = f.at(3, 10);
  CHECK(e.tau == 4);
  CHECK(e.S == 4);
  CHECK(e.B == 10);

  const Schedule a = Schedule::adaptive(1.0, 1.0);
  CHECK(a.T0(64) == 7);
  CHECK(a.at(1, 64).tau == 2);
  CHECK(a.at(1, 64).B == 4);
  CHECK(a.at(7, 64).tau == 8);
  CHECK(a.at(7, 64).B == 64);
  CHECK(a.at(8, 64).tau == 8);
  CHECK(a.at(8, 64).B == 64);
  CHECK_THROWS(Schedule::adaptive(0.0, 1.0).validate(64));
  CHECK_THROWS(Schedule::adaptive(1.0, 8.0).validate(64));
  CHECK(Schedule::adaptive(0.1, 0.0).at(30, 100).tau == 3);
}

TEST_CASE("full-batch epochs reproduce deterministic proximal gradient bit for bit") {
  auto q = fixtures::quad_composite(9, 3, 31);
  q.problem.r = SimpleTerm::l1(0.05);
  GcivrConfig cfg;
  cfg.eta = 0.05;
  cfg.T = 10;
  cfg.schedule = Schedule::constant_size(5, 9, 9);
  Vector x = Vector::Ones(3);
  std::vector<Vector> reference;
  for (int j = 0; j < 50; ++j) {
    x = q.problem.r.prox(cfg.eta, x - cfg.eta * full_phi_gradient(q.problem, x));
    reference.push_back(x);
  }
  std::vector<Vector> got;
  cfg.after_step = [&](const StepInfo& info) {
    got.push_back(info.state->x);
    CHECK(full_phi_gradient(q.problem, info.state->x_prev) ==
          full_phi_gradient(q.problem, info.state->x_prev));  // determinism of the oracle
  };
  const SolverReport rep = solve(q.problem, Vector::Ones(3), cfg);
  REQUIRE(got.size() == 50);
  for (int j = 0; j < 50; ++j) CHECK(got[static_cast<std::size_t>(j)] == reference[static_cast<std::size_t>(j)]);
  CHECK(rep.final_x == reference.back());
}

TEST_CASE("full-pass estimators equal the exact component means") {
  const auto q = fixtures::quad_composite(7, 3, 3);
  EpochState s;
  s.x = fixtures::gaussian(3, 1, 1);
  s.x_prev = s.x;
  Rng rng(1);
  OracleCounter c;
  batch_estimate(q.problem, s, 7, rng, c);
  s.x_prev = s.x;
  s.x = fixtures::gaussian(3, 1, 2);
  inner_update(q.problem, s, 7, rng, c);
  const auto exact = kernels::serial::sums(q.problem, s.x, kernels::IndexSet::range(0, 7));
  CHECK((s.y - exact.g / 7.0).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((s.z - exact.jac / 7.0).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((s.w - exact.h_grad / 7.0).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(c.g_value_calls == 14);
}

TEST_CASE("zero step leaves the estimators unchanged") {
  const auto q = fixtures::quad_composite(8, 3, 3);
  EpochState s;
  s.x = fixtures::gaussian(3, 1, 4);
  s.x_prev = s.x;
  Rng rng(2);
  OracleCounter c;
  batch_estimate(q.problem, s, 3, rng, c);
  const Vector y = s.y;
  const Matrix z = s.z;
  const Vector w = s.w;
  prox_update(q.problem, s, estimated_gradient(q.problem, s, c), 0.0, c);
  CHECK(s.x == s.x_prev);
  inner_update(q.problem, s, 3, rng, c);
  CHECK(s.y == y);
  CHECK(s.z == z);
  CHECK(s.w == w);
}

TEST_CASE("hand-unrolled delta recursion") {
  const auto p = fixtures::scalar_linear(vec({1, 3}), fixtures::identity_outer());
  EpochState s;
  const double x0 = 0.7, x1 = -0.4;
  s.x = vec({x0});
  s.x_prev = s.x;
  Rng rng(0);
  OracleCounter c;
  batch_estimate(p, s, 2, rng, c);
  CHECK(s.y(0) == doctest::Approx(2 * x0));
  CHECK(s.z(0, 0) == doctest::Approx(2));
  s.x_prev = s.x;
  s.x = vec({x1});
  const std::vector<Index> xi = {1};  // the second component
  delta_update(p, s, xi, c);
  CHECK(s.y(0) == doctest::Approx(2 * x0 + 3 * (x1 - x0)));
  CHECK(s.z(0, 0) == doctest::Approx(2));
}

TEST_CASE("estimators telescope exactly") {
  const auto q = fixtures::quad_composite(12, 3, 8);
  EpochState s;
  s.x = fixtures::gaussian(3, 1, 1);
  s.x_prev = s.x;
  Rng rng(3);
  OracleCounter c;
  batch_estimate(q.problem, s, 12, rng, c);
  Vector y_sum = s.y;
  Vector w_sum = s.w;
  for (int j = 0; j < 5; ++j) {
    s.x_prev = s.x;
    s.x = fixtures::gaussian(3, 1, 10 + j);
    std::vector<Index> ids;
    sample_indices(rng, 4, 0, 12, ids);
    const auto d = kernels::serial::delta_sums(q.problem, s.x, s.x_prev, kernels::IndexSet::list(ids));
    y_sum += d.g / 4.0;
    w_sum += d.h_grad / 4.0;
    delta_update(q.problem, s, ids, c);
    CHECK(s.y == y_sum);
    CHECK(s.w == w_sum);
  }
}

TEST_CASE("minimal stage is one proximal step from the batch gradient") {
  const auto q = fixtures::quad_composite(6, 2, 5);
  GcivrConfig cfg;
  cfg.eta = 0.1;
  cfg.schedule = Schedule::constant_size(1, 1, 6);
  const Vector x0 = vec({0.3, -0.2});
  const SolverReport rep = solve(q.problem, x0, cfg);
  CHECK(rep.final_x == Vector(x0 - 0.1 * full_phi_gradient(q.problem, x0)));
  CHECK(rep.trajectory.size() == 1);
  CHECK(rep.counters.prox_calls == 1);
}

TEST_CASE("counters follow the schedule formula") {
  const auto q = fixtures::quad_composite(4, 2, 9);
  for (Index T : {1, 2, 5}) {
    GcivrConfig cfg;
    cfg.eta = 0.05;
    cfg.T = T;
    const SolverReport rep = solve(q.problem, vec({0, 0}), cfg);
    // tau = S = 2, B = 4.
    CHECK(rep.counters.g_value_calls == 8 * T);
    CHECK(rep.counters.g_jacobian_calls == 8 * T);
    CHECK(rep.counters.h_gradient_calls == 8 * T);
    CHECK(analytic_stage_calls(cfg.schedule, 4, T) == 8 * T);
    CHECK(rep.trajectory.size() == 2 * T);
  }
  const auto big = fixtures::quad_composite(50, 2, 9);
  GcivrConfig cfg;
  cfg.eta = 0.01;
  cfg.T = 9;
  cfg.K = 2;
  cfg.schedule = Schedule::adaptive(0.7, 0.5);
  const SolverReport rep = solve(big.problem, vec({0, 0}), cfg);
  CHECK(rep.counters.g_value_calls == 2 * analytic_stage_calls(cfg.schedule, 50, 9));
  CHECK(rep.counters.h_gradient_calls == rep.counters.g_value_calls);
  CHECK(rep.trajectory.size() == 2 * stage_steps(cfg.schedule, 50, 9));
}

TEST_CASE("runs are deterministic and the random output rule is reproducible") {
  const auto q = fixtures::quad_composite(20, 3, 2);
  GcivrConfig cfg;
  cfg.eta = 0.02;
  cfg.T = 6;
  cfg.K = 3;
  cfg.seed = 99;
  cfg.output_rule = OutputRule::UniformRandomIterate;
  const SolverReport a = solve(q.problem, Vector::Zero(3), cfg);
  const SolverReport b = solve(q.problem, Vector::Zero(3), cfg);
  CHECK(a.final_x == b.final_x);
  CHECK(a.selected_iterate == b.selected_iterate);
  CHECK(a.counters == b.counters);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) CHECK(a.trajectory[i].psi == b.trajectory[i].psi);
  cfg.seed = 100;
  const SolverReport c = solve(q.problem, Vector::Zero(3), cfg);
  CHECK(c.final_x != a.final_x);
}

TEST_CASE("output rule defaults follow the regime") {
  GcivrConfig cfg;
  CHECK(cfg.resolved_output_rule() == OutputRule::LastIterate);
  cfg.regime = Regime::Nonconvex;
  CHECK(cfg.resolved_output_rule() == OutputRule::UniformRandomIterate);
  cfg.output_rule = OutputRule::LastIterate;
  CHECK(cfg.resolved_output_rule() == OutputRule::LastIterate);
}

TEST_CASE("single stage restart equals run_stage") {
  const auto q = fixtures::quad_composite(10, 3, 6);
  GcivrConfig cfg;
  cfg.eta = 0.03;
  cfg.T = 4;
  cfg.seed = 5;
  SolverReport direct;
  const Vector x = run_stage(q.problem, Vector::Zero(3), cfg, 0, direct);
  const SolverReport rep = solve(q.problem, Vector::Zero(3), cfg);
  CHECK(rep.final_x == x);
  CHECK(rep.counters == direct.counters);
}

TEST_CASE("parallel kernels do not change the trajectory") {
  const auto q = fixtures::quad_composite(200, 3, 6);
  GcivrConfig cfg;
  cfg.eta = 0.01;
  cfg.T = 3;
  cfg.seed = 1;
  const SolverReport serial = solve(q.problem, Vector::Zero(3), cfg);
  cfg.exec.parallel = true;
  cfg.exec.min_parallel = 1;
  const SolverReport par = solve(q.problem, Vector::Zero(3), cfg);
  CHECK(serial.final_x == par.final_x);
}

TEST_CASE("the y update is unbiased over fresh index draws") {
  const auto q = fixtures::quad_composite(8, 3, 12);
  EpochState base;
  base.x_prev = fixtures::gaussian(3, 1, 1);
  base.x = fixtures::gaussian(3, 1, 2);
  Rng rng0(0);
  OracleCounter c;
  std::swap(base.x, base.x_prev);
  batch_estimate(q.problem, base, 3, rng0, c);
  std::swap(base.x, base.x_prev);
  const auto d = kernels::serial::delta_sums(q.problem, base.x, base.x_prev, kernels::IndexSet::range(0, 8));
  const Vector expect = base.y + d.g / 8.0;

  Rng rng(77);
  const int trials = 10000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int t = 0; t < trials; ++t) {
    EpochState s = base;
    inner_update(q.problem, s, 2, rng, c);
    sum += s.y;
    sq += s.y.cwiseProduct(s.y);
  }
  const Vector mean = sum / trials;
  const Vector se = ((sq / trials - mean.cwiseProduct(mean)) / trials).cwiseSqrt();
  for (int k = 0; k < 2; ++k) CHECK(std::abs(mean(k) - expect(k)) <= 4 * se(k) + 1e-14);
}

TEST_CASE("variance of the gradient estimator shrinks over epochs") {
  const auto fx = fixtures::chi2_quadratic(16, 5, 7, 4.0);
  GcivrConfig cfg;
  cfg.eta = 0.02;
  cfg.T = 40;
  cfg.seed = 3;
  std::vector<double> first, last;
  cfg.after_step = [&](const StepInfo& info) {
    if (info.step == 1) return;  // batch steps carry no sampling error
    OracleCounter c;
    const Vector est = estimated_gradient(fx.problem, *info.state, c);
    const double err = (est - full_phi_gradient(fx.problem, info.state->x)).squaredNorm();
    if (info.epoch == 1) first.push_back(err);
    if (info.epoch >= 35) last.push_back(err);
  };
  solve(fx.problem, Vector::Zero(5), cfg);
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double e : v) s += e;
    return s / static_cast<double>(v.size());
  };
  CHECK(mean(last) <= 0.1 * mean(first));
}

TEST_CASE("constrained toy projects once onto the optimum") {
  Matrix A = Matrix::Identity(2, 2);
  const auto cons = constraints::affine(A, vec({1, 1}));
  const SimpleTerm r = SimpleTerm::squared_norm(1.0, vec({2, 2}));
  const Index K = 4;
  const auto wcfg = reductions::WassersteinConfig::from_restarts(2.5, K, 2);
  GcivrConfig cfg;
  cfg.K = K;
  cfg.eta = 0.9 / (1.0 + wcfg.alpha * wcfg.alpha / wcfg.gamma);
  cfg.T = theorem_epochs(2, 1.0, cfg.eta);
  cfg.record_every = 1000;
  const ConstrainedReport rep = solve_constrained_wasserstein(r, cons, wcfg, vec({0, 0}), cfg);
  CHECK((rep.x_projected - vec({1, 1})).norm() <= 1e-3);
  CHECK(rep.max_violation_after <= 1e-8);
  CHECK(rep.run.counters.projection_calls == 1);
  CHECK(rep.gap >= 0);
  for (const auto& rec : rep.run.trajectory) CHECK(rec.max_violation.has_value());
}

TEST_CASE("constrained solve with a feasible end point leaves it in place") {
  Matrix A = Matrix::Identity(2, 2);
  const auto cons = constraints::affine(A, vec({5, 5}));
  const SimpleTerm r = SimpleTerm::squared_norm(1.0, vec({2, 2}));
  const reductions::WassersteinConfig wcfg{2.0, 0.01, 1};
  GcivrConfig cfg;
  cfg.eta = 0.5;
  cfg.T = 200;
  const ConstrainedReport rep = solve_constrained_wasserstein(r, cons, wcfg, vec({0, 0}), cfg);
  CHECK(rep.x_projected == rep.x_unprojected);
  CHECK(rep.gap == 0);
  CHECK(rep.run.counters.projection_calls == 1);
}

TEST_CASE("alpha below G/rho raises a warning, not an error") {
  const auto cons = constraints::affine(Matrix::Identity(1, 1), vec({1}));
  GcivrConfig cfg;
  cfg.eta = 0.1;
  ConstrainedOptions opts;
  SmoothnessSpec spec;
  spec.G_r = 3;
  spec.rho = 1;
  opts.spec = spec;
  const auto rep = solve_constrained_wasserstein(SimpleTerm::squared_norm(1.0), cons, {1.0, 0.1, 1}, vec({0}), cfg, opts);
  CHECK(rep.run.warnings.size() == 1);
}

TEST_CASE("restarted solver contracts geometrically on a chi-square quadratic") {
  const auto fx = fixtures::chi2_quadratic(16, 5, 7, 20.0);
  const auto ref = diagnostics::baseline_solve(fx.problem, diagnostics::BaselineKind::FullProxGradient,
                                               Vector::Zero(5), 20000, 0.05, 0, {.record_every = 0});
  const double psi_star = ref.final_psi;
  GcivrConfig cfg;
  cfg.eta = 0.05;
  cfg.T = 10;
  cfg.K = 8;
  cfg.record_every = 0;
  const auto rep = solve(fx.problem, Vector::Zero(5), cfg);
  std::vector<double> errs;
  for (double v : rep.stage_psi) errs.push_back(v - psi_star);
  const auto fit = diagnostics::fit_rate(errs);
  CHECK(fit.slope < 0);
  CHECK(fit.r_squared >= 0.95);
}

TEST_CASE("chi-square solve matches a long full-batch reference") {
  const auto fx = fixtures::chi2_quadratic(8, 3, 2, 10.0);
  const auto ref = diagnostics::baseline_solve(fx.problem, diagnostics::BaselineKind::FullProxGradient,
                                               Vector::Zero(3), 20000, 0.05, 0, {.record_every = 0});
  GcivrConfig cfg;
  cfg.eta = 0.05;
  cfg.T = 100;
  cfg.K = 4;
  cfg.record_every = 0;
  const auto rep = solve(fx.problem, Vector::Zero(3), cfg);
  CHECK(std::abs(rep.final_psi - ref.final_psi) <= 1e-4);
}
