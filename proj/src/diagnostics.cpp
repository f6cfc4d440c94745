#include "dro/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "dro/kernels.hpp"
#include "dro/rng.hpp"

namespace dro::diagnostics {
namespace {

Vector ball_point(Rng& rng, const Vector& center, double radius, Eigen::Index d) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Vector v(d);
  for (Eigen::Index k = 0; k < d; ++k) v(k) = normal(rng);
  const double n = v.norm();
  if (n > 0) v *= radius * std::pow(unif(rng), 1.0 / static_cast<double>(d)) / n;
  return center.size() == d ? Vector(center + v) : v;
}

double spectral_norm(const Matrix& M) {
  if (M.rows() == 1 || M.cols() == 1) return M.norm();
  return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
}

}  // namespace

ConstantEstimates estimate_constants(const CompositeProblem& problem, Index num_probes, std::uint64_t seed,
                                     const ProbeOptions& opts) {
  problem.validate();
  const auto d = static_cast<Eigen::Index>(problem.dim_x);
  const auto p = static_cast<Eigen::Index>(problem.dim_g);
  ConstantEstimates est;
  Vector g1(p), g2(p), hg1(d), hg2(d), f1(p), f2(p);
  Matrix j1(p, d), j2(p, d);
  for (Index k = 0; k < num_probes; ++k) {
    Rng rng(derive_seed(seed, k));
    const Index i = std::uniform_int_distribution<Index>(0, problem.m - 1)(rng);
    const Vector x1 = ball_point(rng, opts.center, opts.radius, d);
    const Vector x2 = ball_point(rng, opts.center, opts.radius, d);
    const double dx = (x1 - x2).norm();
    problem.g(i, x1, g1, &j1);
    problem.g(i, x2, g2, &j2);
    const double h1 = problem.h(i, x1, &hg1);
    const double h2 = problem.h(i, x2, &hg2);
    est.l_g = std::max({est.l_g, spectral_norm(j1), spectral_norm(j2)});
    est.l_h = std::max({est.l_h, hg1.norm(), hg2.norm()});
    if (dx > 0) {
      est.l_g = std::max(est.l_g, (g1 - g2).norm() / dx);
      est.l_h = std::max(est.l_h, std::abs(h1 - h2) / dx);
      est.L_g = std::max(est.L_g, spectral_norm(j1 - j2) / dx);
      est.L_h = std::max(est.L_h, (hg1 - hg2).norm() / dx);
    }
    std::uniform_real_distribution<double> ub(opts.u_lo, opts.u_hi);
    Vector u1(p), u2(p);
    for (Eigen::Index c = 0; c < p; ++c) u1(c) = ub(rng);
    for (Eigen::Index c = 0; c < p; ++c) u2(c) = ub(rng);
    const double v1 = problem.f(u1, &f1);
    const double v2 = problem.f(u2, &f2);
    const double du = (u1 - u2).norm();
    est.l_f = std::max({est.l_f, f1.norm(), f2.norm()});
    if (du > 0) {
      est.l_f = std::max(est.l_f, std::abs(v1 - v2) / du);
      est.L_f = std::max(est.L_f, (f1 - f2).norm() / du);
    }
  }
  return est;
}

VarianceEstimate estimate_variance(const CompositeProblem& problem, const Vector& x, Index B, Index num_trials,
                                   std::uint64_t seed) {
  problem.validate();
  if (B == 0 || num_trials == 0) throw std::invalid_argument("estimate_variance: B and num_trials must be positive");
  if (B == problem.m) return {};
  const kernels::ComponentSums full = kernels::serial::sums(problem, x, kernels::IndexSet::range(0, problem.m));
  const Matrix J = full.jac / static_cast<double>(problem.m);
  Rng rng(derive_seed(seed, 0x766172ULL));
  std::vector<Index> ids;
  double sum = 0, sum_sq = 0;
  for (Index t = 0; t < num_trials; ++t) {
    ids.clear();
    sample_indices(rng, B, 0, problem.m, ids);
    const kernels::ComponentSums s = kernels::serial::sums(problem, x, kernels::IndexSet::list(ids));
    const double e = (s.jac / static_cast<double>(B) - J).squaredNorm();
    sum += e;
    sum_sq += e * e;
  }
  const double n = static_cast<double>(num_trials);
  VarianceEstimate out;
  out.value = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * out.value * out.value) / (n - 1)) : 0.0;
  out.std_error = std::sqrt(var / n);
  return out;
}

gcivr::SolverReport baseline_solve(const CompositeProblem& problem, BaselineKind kind, const Vector& x0, Index iters,
                                   double eta, std::uint64_t seed, const BaselineOptions& opts) {
  problem.validate();
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  gcivr::SolverReport report;
  Rng rng(derive_seed(seed, 0x62617365ULL));
  Vector x = x0;
  std::vector<Index> ids;
  for (Index it = 1; it <= iters; ++it) {
    Vector grad;
    if (kind == BaselineKind::FullProxGradient) {
      grad = full_phi_gradient(problem, x, &report.counters);
    } else {
      ids.clear();
      sample_indices(rng, opts.batch, 0, problem.m, ids);
      const kernels::ComponentSums s = kernels::serial::sums(problem, x, kernels::IndexSet::list(ids));
      const double n = static_cast<double>(opts.batch);
      const Vector y = s.g / n;
      const Matrix z = s.jac / n;
      const Vector w = s.h_grad / n;
      Vector fprime(problem.dim_g);
      problem.f(y, &fprime);
      report.counters.add_components(opts.batch);
      report.counters.f_outer_calls += 1;
      grad = z.transpose() * fprime + w;
    }
    x = problem.r.prox(eta, x - eta * grad);
    report.counters.prox_calls += 1;

    const bool want_row = opts.record_every > 0 && (it % opts.record_every == 0 || it == iters);
    const bool want_gm = opts.grad_map_every > 0 && it % opts.grad_map_every == 0;
    if (want_row || want_gm) {
      gcivr::TrajectoryRecord rec;
      rec.epoch = it;
      rec.step = 1;
      rec.oracle_g_calls = report.counters.g_value_calls;
      rec.oracle_h_calls = report.counters.h_gradient_calls;
      if (opts.record_psi) rec.psi = psi(problem, x);
      if (want_gm && eta > 0) rec.grad_map_sq = gradient_mapping(problem, eta, x).sq_norm;
      if (opts.violation) rec.max_violation = opts.violation(x);
      rec.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
      report.trajectory.push_back(std::move(rec));
    }
    if (opts.after_step) opts.after_step(it, x, report.counters);
  }
  report.final_x = x;
  report.final_psi = psi(problem, x);
  report.stage_x.push_back(x);
  report.stage_psi.push_back(report.final_psi);
  report.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

RateFit fit_rate(const std::vector<double>& errors) {
  if (errors.empty()) throw std::invalid_argument("fit_rate: empty sequence");
  for (double e : errors) {
    if (!(e > 0)) throw std::invalid_argument("fit_rate: errors must be positive");
  }
  const auto n = static_cast<double>(errors.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    sx += static_cast<double>(i);
    sy += std::log(errors[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double dx = static_cast<double>(i) - mx;
    const double dy = std::log(errors[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RateFit fit;
  fit.slope = sxx > 0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  if (syy <= 1e-300) {
    fit.r_squared = 1.0;
  } else {
    fit.r_squared = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  }
  return fit;
}

}  // namespace dro::diagnostics
