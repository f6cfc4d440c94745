#include "dro/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dro/rng.hpp"

namespace dro::constraints {

bool ConstraintSet::all_affine() const {
  return std::all_of(kinds.begin(), kinds.end(), [](ConstraintKind k) { return k == ConstraintKind::Affine; });
}

void ConstraintSet::validate() const {
  if (m == 0 || dim == 0) throw std::invalid_argument("constraint set has a zero dimension");
  if (!eval) throw std::invalid_argument("constraint set has no oracle");
  if (kinds.size() != m) throw std::invalid_argument("constraint set needs one kind tag per constraint");
}

ConstraintSet affine(Matrix A, Vector b) {
  if (A.rows() != b.size() || A.rows() == 0) throw std::invalid_argument("affine constraints: shape mismatch");
  ConstraintSet set;
  set.m = static_cast<Index>(A.rows());
  set.dim = static_cast<Index>(A.cols());
  set.kinds.assign(set.m, ConstraintKind::Affine);
  set.eval = [A = std::move(A), b = std::move(b)](Index i, const Vector& x, Vector* grad) {
    const auto r = static_cast<Eigen::Index>(i);
    if (grad) *grad = A.row(r).transpose();
    return A.row(r).dot(x) - b(r);
  };
  return set;
}

ConstraintSet concat(const ConstraintSet& a, const ConstraintSet& b) {
  if (a.dim != b.dim) throw std::invalid_argument("concat: constraint sets live in different spaces");
  ConstraintSet out;
  out.m = a.m + b.m;
  out.dim = a.dim;
  out.kinds = a.kinds;
  out.kinds.insert(out.kinds.end(), b.kinds.begin(), b.kinds.end());
  out.eval = [a, b](Index i, const Vector& x, Vector* grad) {
    return i < a.m ? a.eval(i, x, grad) : b.eval(i - a.m, x, grad);
  };
  return out;
}

Vector values(const ConstraintSet& set, const Vector& x) {
  Vector v(set.m);
  for (Index i = 0; i < set.m; ++i) v(static_cast<Eigen::Index>(i)) = set.eval(i, x, nullptr);
  return v;
}

double max_violation(const ConstraintSet& set, const Vector& x) {
  double worst = 0;
  for (Index i = 0; i < set.m; ++i) {
    const double v = set.eval(i, x, nullptr);
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, v);
  }
  return worst;
}

bool affine_tags_consistent(const ConstraintSet& set, std::uint64_t seed, double tol) {
  Rng rng(derive_seed(seed, 0x616666ULL));
  std::normal_distribution<double> normal;
  Vector x1(set.dim), x2(set.dim), g1, g2;
  for (Eigen::Index k = 0; k < x1.size(); ++k) x1(k) = normal(rng);
  for (Eigen::Index k = 0; k < x2.size(); ++k) x2(k) = normal(rng);
  for (Index i = 0; i < set.m; ++i) {
    if (set.kinds[i] != ConstraintKind::Affine) continue;
    set.eval(i, x1, &g1);
    set.eval(i, x2, &g2);
    const double scale = std::max(1.0, g1.cwiseAbs().maxCoeff());
    if ((g1 - g2).cwiseAbs().maxCoeff() > tol * scale) return false;
  }
  return true;
}

namespace {

ProjectionResult dykstra(const ConstraintSet& set, const Vector& x0, const ProjectionOptions& opts) {
  // Halfspaces a_i^T y <= b_i read off the oracle at x0.
  const auto m = static_cast<Eigen::Index>(set.m);
  Matrix A(m, x0.size());
  Vector b(m);
  Vector grad;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double v = set.eval(static_cast<Index>(i), x0, &grad);
    A.row(i) = grad.transpose();
    b(i) = grad.dot(x0) - v;
  }
  const Vector row_sq = A.rowwise().squaredNorm();

  Vector y = x0;
  Matrix corr = Matrix::Zero(x0.size(), m);
  ProjectionResult res;
  for (Index it = 1; it <= opts.max_iter; ++it) {
    const Vector before = y;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vector u = y + corr.col(i);
      Vector p = u;
      if (row_sq(i) > 0) {
        const double excess = A.row(i).dot(u) - b(i);
        if (excess > 0) p -= (excess / row_sq(i)) * A.row(i).transpose();
      }
      corr.col(i) = u - p;
      y = p;
    }
    res.iterations = it;
    const double change = (y - before).norm();
    if (change < opts.step_tol) {
      res.residual = max_violation(set, y);
      if (res.residual <= opts.tol) {
        res.x = y;
        return res;
      }
    }
  }
  throw NonconvergenceError("Dykstra projection did not converge", max_violation(set, y));
}

// gamma * ln(1 + sum_i exp(alpha g_i / gamma)) with the softmax weights of the nonzero terms.
double smoothed_penalty(const Vector& vals, double alpha, double gamma, Vector& weights) {
  const Vector a = vals * (alpha / gamma);
  const double top = std::max(0.0, a.maxCoeff());
  weights = (a.array() - top).exp().matrix();
  const double denom = std::exp(-top) + weights.sum();
  weights /= denom;
  return gamma * (top + std::log(denom));
}

struct PenaltyEval {
  double value = 0;
  Vector grad;
  Matrix hess;  // Gauss-Newton
  double mass = 0;  // total weight on the constraint terms
};

PenaltyEval penalty_objective(const ConstraintSet& set, const Vector& x, const Vector& y, double alpha,
                              double gamma, bool second_order) {
  const auto m = static_cast<Eigen::Index>(set.m);
  const auto d = y.size();
  Vector vals(m);
  Matrix G(d, m);
  Vector g;
  for (Eigen::Index i = 0; i < m; ++i) {
    vals(i) = set.eval(static_cast<Index>(i), y, second_order ? &g : nullptr);
    if (second_order) G.col(i) = g;
  }
  PenaltyEval out;
  Vector w;
  out.value = 0.5 * (y - x).squaredNorm() + smoothed_penalty(vals, alpha, gamma, w);
  out.mass = w.sum();
  if (second_order) {
    const Vector mean_grad = G * w;
    out.grad = (y - x) + alpha * mean_grad;
    const Matrix Gw = G * w.asDiagonal();
    out.hess = Matrix::Identity(d, d) +
               (alpha * alpha / gamma) * (Gw * G.transpose() - mean_grad * mean_grad.transpose());
  }
  return out;
}

ProjectionResult penalty_continuation(const ConstraintSet& set, const Vector& x,
                                      const ProjectionOptions& opts) {
  double gamma = opts.gamma0;
  double alpha = opts.alpha0;
  Vector y = x;
  ProjectionResult res;
  Index used = 0;
  while (used < opts.max_iter) {
    // Damped Gauss-Newton on the smoothed program at fixed (alpha, gamma).
    for (int inner = 0; inner < 200 && used < opts.max_iter; ++inner) {
      ++used;
      const PenaltyEval cur = penalty_objective(set, x, y, alpha, gamma, true);
      const Vector step = -cur.hess.ldlt().solve(cur.grad);
      const double slope = cur.grad.dot(step);
      if (!(slope < 0)) break;
      double t = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector trial = y + t * step;
        const double v = penalty_objective(set, x, trial, alpha, gamma, false).value;
        if (v <= cur.value + 1e-4 * t * slope) {
          y = trial;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved || (t * step).norm() <= 1e-15 * (1.0 + y.norm())) break;
    }
    res.residual = max_violation(set, y);
    const double mass = penalty_objective(set, x, y, alpha, gamma, false).mass;
    if (res.residual > opts.tol && mass > 0.5) {
      alpha *= 2;  // the penalty is too weak to hold the iterate on the boundary
    } else if (gamma > opts.gamma_min) {
      gamma = std::max(gamma * 0.1, opts.gamma_min);
    } else if (res.residual <= opts.tol) {
      res.x = y;
      res.iterations = used;
      return res;
    } else {
      alpha *= 2;
    }
  }
  throw NonconvergenceError("penalty projection did not converge", max_violation(set, y));
}

}  // namespace

ProjectionResult project_feasible(const ConstraintSet& set, const Vector& x, const ProjectionOptions& opts) {
  set.validate();
  ProjectionResult res;
  res.residual = max_violation(set, x);
  if (res.residual <= opts.tol) {
    res.x = x;
    return res;
  }
  return set.all_affine() ? dykstra(set, x, opts) : penalty_continuation(set, x, opts);
}

double estimate_rho(const ConstraintSet& set, const Vector& center, double radius, Index samples,
                    std::uint64_t seed, double band) {
  Rng rng(derive_seed(seed, 0x72686fULL));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  const auto d = static_cast<Eigen::Index>(set.dim);
  double best = std::numeric_limits<double>::infinity();
  Vector x(d), grad;
  for (Index s = 0; s < samples; ++s) {
    for (Eigen::Index k = 0; k < d; ++k) x(k) = normal(rng);
    x *= radius * std::pow(unif(rng), 1.0 / static_cast<double>(d)) / x.norm();
    x += center;
    Index arg = 0;
    double top = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < set.m; ++i) {
      const double v = set.eval(i, x, nullptr);
      if (v > top) {
        top = v;
        arg = i;
      }
    }
    if (std::abs(top) > band) continue;
    set.eval(arg, x, &grad);
    best = std::min(best, grad.norm());
  }
  return best;
}

}  // namespace dro::constraints
