#include "dro/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dro/kernels.hpp"
#include "dro/rng.hpp"

namespace dro {

OracleCounter& OracleCounter::operator+=(const OracleCounter& o) {
  g_value_calls += o.g_value_calls;
  g_jacobian_calls += o.g_jacobian_calls;
  h_gradient_calls += o.h_gradient_calls;
  f_outer_calls += o.f_outer_calls;
  prox_calls += o.prox_calls;
  projection_calls += o.projection_calls;
  return *this;
}

void CompositeProblem::validate() const {
  if (dim_x == 0 || dim_g == 0 || m == 0) {
    throw std::invalid_argument("composite problem '" + name + "' has a zero dimension");
  }
  if (!g || !h || !f) throw std::invalid_argument("composite problem '" + name + "' is missing an oracle");
}

HOracle zero_h(Index dim_x) {
  return [dim_x](Index, const Vector&, Vector* grad) {
    if (grad) grad->setZero(static_cast<Eigen::Index>(dim_x));
    return 0.0;
  };
}

double SmoothnessSpec::L_phi() const { return (l_g * l_g * L_f + l_f * L_g) + L_h; }

double SmoothnessSpec::G0() const {
  const double lg2 = l_g * l_g;
  return 3.0 * (lg2 * lg2 * L_f * L_f + l_f * l_f * L_g * L_g + l_h * l_h);
}

double SmoothnessSpec::kappa() const {
  if (mu <= 0) throw std::domain_error("kappa is undefined when mu == 0");
  return L_phi() / mu;
}

void SmoothnessSpec::validate() const {
  for (double v : {l_f, L_f, l_g, L_g, l_h, L_h, mu, G_r, rho}) {
    if (!(v >= 0) || !std::isfinite(v)) {
      throw std::invalid_argument("smoothness constants must be finite and nonnegative");
    }
  }
}

double phi(const CompositeProblem& problem, const Vector& x) {
  if (problem.stable_value) return problem.stable_value(x);
  const auto all = kernels::IndexSet::range(0, problem.m);
  const kernels::ValueSums s = kernels::serial::value_sums(problem, x, all);
  const double inv_m = 1.0 / static_cast<double>(problem.m);
  const Vector u = s.g * inv_m;
  return s.h * inv_m + problem.f(u, nullptr);
}

double psi(const CompositeProblem& problem, const Vector& x) {
  return problem.r.value(x) + phi(problem, x);
}

Vector full_phi_gradient(const CompositeProblem& problem, const Vector& x, OracleCounter* counter) {
  const auto all = kernels::IndexSet::range(0, problem.m);
  const kernels::ComponentSums s = kernels::serial::sums(problem, x, all);
  const double n = static_cast<double>(problem.m);
  const Vector y = s.g / n;
  const Matrix z = s.jac / n;
  const Vector w = s.h_grad / n;
  Vector fprime(problem.dim_g);
  problem.f(y, &fprime);
  if (counter) {
    counter->add_components(problem.m);
    counter->f_outer_calls += 1;
  }
  return z.transpose() * fprime + w;
}

GradientMapping gradient_mapping(const CompositeProblem& problem, double eta, const Vector& x) {
  if (!(eta > 0)) throw std::invalid_argument("gradient mapping needs eta > 0");
  const Vector grad = full_phi_gradient(problem, x);
  const Vector next = problem.r.prox(eta, x - eta * grad);
  GradientMapping out;
  out.vector = (x - next) / eta;
  out.sq_norm = out.vector.squaredNorm();
  return out;
}

double JacobianReport::max_rel_error() const {
  return std::max({g_max_rel_error, h_max_rel_error, f_max_rel_error});
}

namespace {

double rel_err(const Matrix& analytic, const Matrix& numeric) {
  if (!analytic.allFinite() || !numeric.allFinite()) return std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

JacobianReport check_jacobians(const CompositeProblem& problem, const JacobianCheckOptions& opts) {
  problem.validate();
  const auto d = static_cast<Eigen::Index>(problem.dim_x);
  const auto p = static_cast<Eigen::Index>(problem.dim_g);
  Rng rng(derive_seed(opts.seed, 0x6a61636fULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<Index> pick(0, problem.m - 1);

  JacobianReport rep;
  Vector gv(p), gp(p), gm(p), hg(d), tmp(d);
  Matrix jac(p, d), jfd(p, d);
  Vector hfd(d);
  for (Index probe = 0; probe < opts.probes; ++probe) {
    const Index i = pick(rng);
    Vector x(d);
    for (Eigen::Index k = 0; k < d; ++k) x(k) = opts.scale * normal(rng);
    if (opts.center.size() == d) x += opts.center;
    const double h = 1e-6 * (1.0 + x.cwiseAbs().maxCoeff());

    problem.g(i, x, gv, &jac);
    problem.h(i, x, &hg);
    for (Eigen::Index k = 0; k < d; ++k) {
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      problem.g(i, xp, gp, nullptr);
      problem.g(i, xm, gm, nullptr);
      jfd.col(k) = (gp - gm) / (2 * h);
      hfd(k) = (problem.h(i, xp, nullptr) - problem.h(i, xm, nullptr)) / (2 * h);
    }
    rep.g_max_rel_error = std::max(rep.g_max_rel_error, rel_err(jac, jfd));
    rep.h_max_rel_error = std::max(rep.h_max_rel_error, rel_err(hg, hfd));

    // Outer map, probed at the component value.
    Vector fprime(p);
    problem.f(gv, &fprime);
    const double umax = gv.cwiseAbs().maxCoeff();
    const double hu = 1e-6 * (umax > 0 ? umax : 1.0);
    Vector ffd(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      Vector up = gv, um = gv;
      up(k) += hu;
      um(k) -= hu;
      ffd(k) = (problem.f(up, nullptr) - problem.f(um, nullptr)) / (2 * hu);
    }
    rep.f_max_rel_error = std::max(rep.f_max_rel_error, rel_err(fprime, ffd));
    ++rep.probes;
  }
  return rep;
}

}  // namespace dro
