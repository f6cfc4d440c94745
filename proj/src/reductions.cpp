#include "dro/reductions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dro::reductions {
namespace {

constexpr double kMaxExponent = 700.0;

void require_gamma(double gamma, const char* who) {
  if (!(gamma > 0) || !std::isfinite(gamma)) {
    throw std::invalid_argument(std::string(who) + ": gamma must be positive and finite");
  }
}

double log_sum_exp(const Vector& a) {
  const double top = a.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((a.array() - top).exp().sum());
}

double log_add_exp(double a, double b) {
  const double top = std::max(a, b);
  if (top == -std::numeric_limits<double>::infinity()) return top;
  return top + std::log(std::exp(a - top) + std::exp(b - top));
}

WorstCaseWeights clip_to_simplex(Vector raw) {
  WorstCaseWeights out;
  out.feasible = (raw.array() >= 0).all() && (raw.array() <= 1).all();
  if (!out.feasible) {
    raw = raw.cwiseMax(0.0).cwiseMin(1.0);
    const double s = raw.sum();
    if (s > 0) {
      raw /= s;
    } else {
      raw.setConstant(1.0 / static_cast<double>(raw.size()));
    }
  }
  out.p = std::move(raw);
  return out;
}

}  // namespace

WassersteinConfig WassersteinConfig::from_restarts(double alpha, Index K, Index m) {
  WassersteinConfig cfg;
  cfg.alpha = alpha;
  cfg.K = K;
  cfg.gamma = std::exp(-static_cast<double>(K)) / std::log(static_cast<double>(m) + 1.0);
  return cfg;
}

CompositeProblem build_chi2(const LossSet& losses, const Chi2Config& cfg) {
  require_gamma(cfg.gamma, "build_chi2");
  const double gamma = cfg.gamma;
  CompositeProblem p;
  p.dim_x = losses.dim;
  p.dim_g = 1;
  p.m = losses.m;
  p.name = "chi2";
  p.g = [losses](Index i, const Vector& x, Vector& value, Matrix* jac) {
    value.resize(1);
    if (jac) {
      Vector grad;
      value(0) = losses.eval(i, x, &grad);
      *jac = grad.transpose();
    } else {
      value(0) = losses.eval(i, x, nullptr);
    }
  };
  p.h = [losses, gamma](Index i, const Vector& x, Vector* grad) {
    const double fi = losses.eval(i, x, grad);
    if (grad) *grad *= 1.0 + fi / gamma;
    return fi + fi * fi / (2 * gamma);
  };
  p.f = [gamma](const Vector& u, Vector* d) {
    if (d) *d = -u / gamma;
    return -u.squaredNorm() / (2 * gamma);
  };
  p.validate();
  return p;
}

WorstCaseWeights chi2_worst_case_weights(const Vector& f, double gamma) {
  require_gamma(gamma, "chi2_worst_case_weights");
  const double m = static_cast<double>(f.size());
  const double mean = f.mean();
  Vector raw = (((f.array() - mean) / gamma) + 1.0) / m;
  return clip_to_simplex(std::move(raw));
}

CompositeProblem build_kl(const LossSet& losses, const KlConfig& cfg, const Vector& anchor) {
  require_gamma(cfg.gamma, "build_kl");
  const double gamma = cfg.gamma;
  const Vector a0 = anchor.size() == 0 ? Vector::Zero(losses.dim) : anchor;
  double c = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < losses.m; ++i) c = std::max(c, losses.eval(i, a0, nullptr) / gamma);
  if (!std::isfinite(c)) throw NumericalRangeError("build_kl: non-finite loss at the anchor");

  CompositeProblem p;
  p.dim_x = losses.dim;
  p.dim_g = 1;
  p.m = losses.m;
  p.name = "kl";
  p.g = [losses, gamma, c](Index i, const Vector& x, Vector& value, Matrix* jac) {
    Vector grad;
    const double a = losses.eval(i, x, jac ? &grad : nullptr) / gamma - c;
    if (a > kMaxExponent) {
      throw NumericalRangeError("kl reduction: exponent exceeds range after shift; increase gamma or re-anchor");
    }
    value.resize(1);
    value(0) = std::exp(a);
    if (jac) *jac = (value(0) / gamma) * grad.transpose();
  };
  p.h = zero_h(losses.dim);
  p.f = [c](const Vector& u, Vector* d) {
    const double v = std::max(u(0), std::numeric_limits<double>::min());
    if (d) {
      d->resize(1);
      (*d)(0) = 1.0 / v;
    }
    return c + std::log(v);
  };
  p.stable_value = [losses, gamma](const Vector& x) {
    Vector a(losses.m);
    for (Index i = 0; i < losses.m; ++i) a(static_cast<Eigen::Index>(i)) = losses.eval(i, x, nullptr) / gamma;
    return log_sum_exp(a) - std::log(static_cast<double>(losses.m));
  };
  p.validate();
  return p;
}

double kl_dro_value(const Vector& f, double gamma) {
  require_gamma(gamma, "kl_dro_value");
  return gamma * log_sum_exp(f / gamma);
}

WorstCaseWeights kl_worst_case_weights(const Vector& f, double gamma) {
  require_gamma(gamma, "kl_worst_case_weights");
  const Vector a = f / gamma;
  Vector p = (a.array() - a.maxCoeff()).exp().matrix();
  p /= p.sum();
  return {std::move(p), true};
}

double wasserstein_penalty(const Vector& vals, double alpha, double gamma) {
  require_gamma(gamma, "wasserstein_penalty");
  const Vector a = vals * (alpha / gamma);
  const double top = std::max(0.0, a.maxCoeff());
  return gamma * (top + std::log(std::exp(-top) + (a.array() - top).exp().sum()));
}

CompositeProblem build_wasserstein(const SimpleTerm& objective, const constraints::ConstraintSet& cons,
                                   const WassersteinConfig& cfg, const Vector& anchor) {
  require_gamma(cfg.gamma, "build_wasserstein");
  if (!(cfg.alpha > 0)) throw std::invalid_argument("build_wasserstein: alpha must be positive");
  cons.validate();
  const double alpha = cfg.alpha;
  const double gamma = cfg.gamma;
  const double scale = alpha / gamma;
  const double m = static_cast<double>(cons.m);
  const double log_m1 = std::log(m + 1.0);

  const Vector a0 = anchor.size() == 0 ? Vector::Zero(cons.dim) : anchor;
  double c = 0.0;
  for (Index i = 0; i < cons.m; ++i) c = std::max(c, scale * cons.eval(i, a0, nullptr));
  if (!std::isfinite(c)) throw NumericalRangeError("build_wasserstein: non-finite constraint at the anchor");

  CompositeProblem p;
  p.dim_x = cons.dim;
  p.dim_g = 1;
  p.m = cons.m;
  p.r = objective;
  p.name = "wasserstein";
  p.g = [cons, scale, c](Index i, const Vector& x, Vector& value, Matrix* jac) {
    Vector grad;
    const double a = scale * cons.eval(i, x, jac ? &grad : nullptr) - c;
    if (a > kMaxExponent) {
      throw NumericalRangeError(
          "wasserstein reduction: alpha*g/gamma exceeds the shifted range; use a larger gamma");
    }
    value.resize(1);
    value(0) = std::exp(a);
    if (jac) *jac = (value(0) * scale) * grad.transpose();
  };
  p.h = zero_h(cons.dim);
  p.f = [gamma, m, c, log_m1](const Vector& u, Vector* d) {
    // Estimator drift can push u below zero; the true argument is never below e^{-c}.
    const double mu = m * std::max(u(0), 0.0);
    const double log_den = mu > 0 ? log_add_exp(-c, std::log(mu)) : -c;
    if (d) {
      d->resize(1);
      (*d)(0) = gamma * m * std::exp(std::min(-log_den, kMaxExponent));
    }
    return gamma * (c + log_den - log_m1);
  };
  p.stable_value = [cons, alpha, gamma, log_m1](const Vector& x) {
    return wasserstein_penalty(constraints::values(cons, x), alpha, gamma) - gamma * log_m1;
  };
  p.validate();
  return p;
}

double logistic_loss(double margin) {
  return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

namespace {

// d/dmargin of logistic_loss.
double logistic_slope(double margin) {
  if (margin > 0) {
    const double e = std::exp(-margin);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(margin));
}

}  // namespace

Vector DrLogistic::pack(const Vector& beta, double lambda, const Vector& s) const {
  Vector x(dim());
  x.head(beta.size()) = beta;
  x(static_cast<Eigen::Index>(dim_beta)) = lambda;
  x.tail(s.size()) = s;
  return x;
}

DrLogistic build_dr_logistic(const TabularDataset& data, double eps_radius, double kappa_flip) {
  if (data.rows() == 0) throw std::invalid_argument("build_dr_logistic: empty dataset");
  if (!(eps_radius > 0) || !(kappa_flip > 0)) {
    throw std::invalid_argument("build_dr_logistic: eps_radius and kappa_flip must be positive");
  }
  data.validate();
  DrLogistic out;
  out.dim_beta = data.cols();
  out.m = data.rows();
  const auto d = static_cast<Eigen::Index>(out.dim_beta);
  const auto m = static_cast<Eigen::Index>(out.m);
  const Eigen::Index n = d + 1 + m;

  Vector c = Vector::Zero(n);
  c(d) = eps_radius;
  c.tail(m).setConstant(1.0 / static_cast<double>(m));
  out.objective = SimpleTerm::linear(c);

  const Matrix Z = data.features;
  const Vector y = data.labels;
  constraints::ConstraintSet& cs = out.constraints;
  cs.m = 2 * out.m + 1;
  cs.dim = static_cast<Index>(n);
  cs.kinds.assign(cs.m, constraints::ConstraintKind::ConvexSmooth);
  cs.eval = [Z, y, d, m, n, kappa_flip](Index idx, const Vector& x, Vector* grad) {
    const auto k = static_cast<Eigen::Index>(idx);
    const auto beta = x.head(d);
    const double lambda = x(d);
    if (grad) grad->setZero(n);
    if (k < 2 * m) {
      const bool flipped = k >= m;
      const Eigen::Index i = flipped ? k - m : k;
      const double label = flipped ? -y(i) : y(i);
      const double margin = label * Z.row(i).dot(beta);
      double v = logistic_loss(margin) - x(d + 1 + i);
      if (flipped) v -= lambda * kappa_flip;
      if (grad) {
        grad->head(d) = (logistic_slope(margin) * label) * Z.row(i).transpose();
        (*grad)(d + 1 + i) = -1.0;
        if (flipped) (*grad)(d) = -kappa_flip;
      }
      return v;
    }
    const double norm = beta.norm();
    if (grad) {
      if (norm > 0) grad->head(d) = beta / norm;
      (*grad)(d) = -1.0;
    }
    return norm - lambda;
  };
  return out;
}

constraints::ConstraintSet convexify_constraints(const constraints::ConstraintSet& cons, const Vector& mu) {
  if (mu.size() != static_cast<Eigen::Index>(cons.m)) {
    throw std::invalid_argument("convexify_constraints: need one mu per constraint");
  }
  if ((mu.array() < 0).any()) throw std::invalid_argument("convexify_constraints: mu must be nonnegative");
  constraints::ConstraintSet out = cons;
  for (Index i = 0; i < cons.m; ++i) {
    if (mu(static_cast<Eigen::Index>(i)) > 0 && out.kinds[i] == constraints::ConstraintKind::Affine) {
      out.kinds[i] = constraints::ConstraintKind::ConvexSmooth;
    }
  }
  out.eval = [cons, mu](Index i, const Vector& x, Vector* grad) {
    const double mi = mu(static_cast<Eigen::Index>(i));
    const double v = cons.eval(i, x, grad);
    if (grad) *grad += (2.0 * mi) * x;
    return v + mi * x.squaredNorm();
  };
  return out;
}

Vector project_simplex(const Vector& v, double floor) {
  const auto n = v.size();
  const double mass = 1.0 - static_cast<double>(n) * floor;
  if (mass < 0) throw std::invalid_argument("project_simplex: floor too large");
  const Vector shifted = v.array() - floor;
  std::vector<double> u(shifted.data(), shifted.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0, theta = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - mass) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0) theta = t;
  }
  return (shifted.array() - theta).cwiseMax(0.0).matrix().array() + floor;
}

double penalized_inner(const Vector& f, const Vector& p, Divergence div, double gamma) {
  const double m = static_cast<double>(f.size());
  if (div == Divergence::Chi2) {
    return p.dot(f) - 0.5 * gamma * m * (p.array() - 1.0 / m).square().sum();
  }
  double entropy = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0) entropy -= p(i) * std::log(p(i));
  }
  return p.dot(f) + gamma * entropy;
}

double brute_force_penalized_max(const Vector& f, Divergence div, double gamma) {
  require_gamma(gamma, "brute_force_penalized_max");
  const auto n = f.size();
  if (n == 0 || n > 12) throw std::invalid_argument("brute_force_penalized_max: need 1 <= m <= 12");
  const double m = static_cast<double>(n);
  const double step = 1.0 / (10.0 * gamma * m);
  const double floor = div == Divergence::Kl ? 1e-12 : 0.0;

  Vector p = Vector::Constant(n, 1.0 / m);
  Vector grad(n);
  for (int it = 0; it < 100000; ++it) {
    if (div == Divergence::Chi2) {
      grad = f.array() - gamma * m * (p.array() - 1.0 / m);
    } else {
      grad = f.array() - gamma * (p.array().log() + 1.0);
    }
    p = project_simplex(p + step * grad, floor);
  }
  double best = penalized_inner(f, p, div, gamma);
  if (n <= 3) {
    for (Eigen::Index i = 0; i < n; ++i) {
      best = std::max(best, penalized_inner(f, Vector::Unit(n, i), div, gamma));
    }
  }
  return best;
}

}  // namespace dro::reductions
