#include "doctest.h"

#include <cmath>

#include "dro/diagnostics.hpp"
#include "dro/gcivr.hpp"
#include "dro/problems.hpp"
#include "fixtures.hpp"

using namespace dro;
using namespace dro::diagnostics;
using fixtures::vec;

TEST_CASE("constant probes on a linear map") {
  const auto p = fixtures::scalar_linear(vec({3}), fixtures::identity_outer());
  const auto c = estimate_constants(p, 50, 1);
  CHECK(c.l_g == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(c.L_g == 0);
  CHECK(c.l_f == doctest::Approx(1.0));
  CHECK(c.L_f == 0);
}

TEST_CASE("outer smoothness probe approaches the true constant") {
  auto p = fixtures::scalar_linear(vec({1}), [](const Vector& u, Vector* d) {
    if (d) *d = u;
    return 0.5 * u.squaredNorm();
  });
  const auto c = estimate_constants(p, 1000, 2);
  CHECK(c.L_f >= 0.95);
  CHECK(c.L_f <= 1.0 + 1e-12);
}

TEST_CASE("smoothness probe recovers a known Hessian norm") {
  // h_i = 0.5 x^T H x with H = diag(1, 4).
  CompositeProblem p;
  p.dim_x = 2;
  p.m = 3;
  p.g = [](Index, const Vector&, Vector& v, Matrix* j) {
    v = Vector::Zero(1);
    if (j) *j = Matrix::Zero(1, 2);
  };
  p.h = [](Index, const Vector& x, Vector* g) {
    const Vector hx = vec({x(0), 4 * x(1)});
    if (g) *g = hx;
    return 0.5 * x.dot(hx);
  };
  p.f = fixtures::identity_outer();
  const auto c = estimate_constants(p, 200, 3);
  CHECK(c.L_h >= 0.9 * 4);
  CHECK(c.L_h <= 4 + 1e-9);
}

TEST_CASE("more probes never lower an estimate") {
  const auto q = fixtures::quad_composite(6, 3, 2);
  auto prev = estimate_constants(q.problem, 5, 9);
  for (Index n : {10, 20, 40}) {
    const auto c = estimate_constants(q.problem, n, 9);
    CHECK(c.l_g >= prev.l_g);
    CHECK(c.L_h >= prev.L_h);
    CHECK(c.l_h >= prev.l_h);
    CHECK(c.L_f >= prev.L_f);
    CHECK(c.l_f >= prev.l_f);
    prev = c;
  }
}

TEST_CASE("variance estimates") {
  const auto p = fixtures::scalar_linear(vec({1, 2, 3, 4}), fixtures::identity_outer());
  const auto v1 = estimate_variance(p, vec({1}), 1, 20000, 1);
  CHECK(std::abs(v1.value - 1.25) <= 3 * v1.std_error);
  CHECK(estimate_variance(p, vec({1}), 4, 100, 1).value == 0);
  const auto same = fixtures::scalar_linear(vec({2, 2, 2}), fixtures::identity_outer());
  CHECK(estimate_variance(same, vec({1}), 1, 100, 1).value == 0);

  const auto wide = fixtures::scalar_linear(fixtures::gaussian(64, 1, 5).col(0), fixtures::identity_outer());
  const double b1 = estimate_variance(wide, vec({1}), 1, 20000, 2).value;
  const double b4 = estimate_variance(wide, vec({1}), 4, 20000, 3).value;
  const double b16 = estimate_variance(wide, vec({1}), 16, 20000, 4).value;
  CHECK(b1 / b4 >= 3);
  CHECK(b1 / b4 <= 5.5);
  CHECK(b4 / b16 >= 3);
  CHECK(b4 / b16 <= 5.5);
}

TEST_CASE("full proximal gradient baseline converges on the quadratic") {
  const auto fx = problems::make_quadratic(16, 5, 7);
  const CompositeProblem p = problems::erm_problem(problems::quadratic_losses(fx.A, fx.b));
  const double eta = 1.0 / fx.eigenvalues.maxCoeff();
  BaselineOptions o;
  o.grad_map_every = 1;
  const auto rep = baseline_solve(p, BaselineKind::FullProxGradient, Vector::Zero(5), 500, eta, 0, o);
  CHECK(gradient_mapping(p, eta, rep.final_x).sq_norm <= 1e-10);
  CHECK(rep.counters.g_value_calls == 500 * 16);
  CHECK(rep.trajectory.size() == 500);
  CHECK(rep.trajectory.back().grad_map_sq.value() <= 1e-10);
}

TEST_CASE("full baseline equals the solver's full-batch path") {
  const auto q = fixtures::quad_composite(6, 2, 1);
  gcivr::GcivrConfig cfg;
  cfg.eta = 0.05;
  cfg.T = 4;
  cfg.schedule = gcivr::Schedule::constant_size(5, 6, 6);
  const auto g = gcivr::solve(q.problem, Vector::Ones(2), cfg);
  const auto b = baseline_solve(q.problem, BaselineKind::FullProxGradient, Vector::Ones(2), 20, 0.05, 0);
  CHECK(g.final_x == b.final_x);
}

TEST_CASE("naive stochastic baseline is unbiased with a linear outer map") {
  // Psi = mean(a) * x + 0.5 x^2 through r; naive SGD averages to the exact step.
  const Vector a = vec({1, 2, 3, 4});
  auto p = fixtures::scalar_linear(a, fixtures::identity_outer());
  p.r = SimpleTerm::squared_norm(1.0);
  const double eta = 0.1;
  Vector mean = Vector::Zero(1);
  const int runs = 4000;
  for (int s = 0; s < runs; ++s) {
    BaselineOptions o;
    o.record_every = 0;
    mean += baseline_solve(p, BaselineKind::NaiveBiasedSgd, vec({1}), 1, eta, s, o).final_x;
  }
  mean /= runs;
  const double exact = (1 - eta * 2.5) / (1 + eta);
  // Per-run std is eta * sqrt(1.25) / (1 + eta).
  CHECK(std::abs(mean(0) - exact) <= 4 * eta * std::sqrt(1.25) / (1 + eta) / std::sqrt(runs));
}

TEST_CASE("rate fits") {
  const auto f = fit_rate({1, 0.1, 0.01});
  CHECK(f.slope == doctest::Approx(-std::log(10.0)));
  CHECK(f.r_squared == doctest::Approx(1.0));
  const auto c = fit_rate({0.5, 0.5, 0.5, 0.5});
  CHECK(c.slope == doctest::Approx(0.0));
  CHECK(c.r_squared == 1.0);
  CHECK_THROWS(fit_rate({1, 0, 2}));
}
