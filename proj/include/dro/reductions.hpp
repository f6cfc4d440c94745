#pragma once

#include <functional>

#include "dro/constraints.hpp"
#include "dro/core.hpp"
#include "dro/dataset.hpp"

/// Compilers from DRO formulations to CompositeProblem, plus worst-case weights and small
/// brute-force reference solvers.
namespace dro::reductions {

struct Chi2Config {
  double gamma = 1.0;
};

struct KlConfig {
  double gamma = 1.0;
};

struct WassersteinConfig {
  double alpha = 1.0;
  double gamma = 1.0;
  Index K = 1;

  /// gamma = exp(-K) / ln(m + 1).
  static WassersteinConfig from_restarts(double alpha, Index K, Index m);
};

struct WorstCaseWeights {
  Vector p;
  bool feasible = true;
};

/// sup_p sum p_i f_i - (gamma m / 2) sum (p_i - 1/m)^2 over the simplex, as a composite problem:
///   h_i = f_i + f_i^2 / (2 gamma),  g_i = f_i,  f(u) = -u^2 / (2 gamma),  r = 0,
/// so Psi = mean(f) + (1 / (2 gamma m)) sum (f_i - mean f)^2.
CompositeProblem build_chi2(const LossSet& losses, const Chi2Config& cfg);

/// Closed-form maximizer p_i = (1/m)((f_i - mean f)/gamma + 1), clipped and renormalized when it
/// leaves the simplex.
WorstCaseWeights chi2_worst_case_weights(const Vector& loss_values, double gamma);

/// Psi = ln((1/m) sum exp(f_i / gamma)) with g_i = exp(f_i/gamma - c), f(u) = c + ln u.
///
/// The shift c is max_i f_i(anchor)/gamma (anchor defaults to the origin). psi() uses a stable
/// log-sum-exp evaluation that does not depend on c.
CompositeProblem build_kl(const LossSet& losses, const KlConfig& cfg, const Vector& anchor = {});

/// gamma ln sum exp(f_i / gamma) = gamma Psi + gamma ln m, the exact penalized worst-case value.
double kl_dro_value(const Vector& loss_values, double gamma);

/// softmax(f / gamma).
WorstCaseWeights kl_worst_case_weights(const Vector& loss_values, double gamma);

/// gamma ln(1 + sum_i exp(alpha g_i / gamma)), evaluated stably.
double wasserstein_penalty(const Vector& constraint_values, double alpha, double gamma);

/// Smoothed constrained problem Psi(x) = r(x) + penalty(x) - gamma ln(m + 1):
///   g_i = exp(alpha g~_i / gamma - c),  f(u) = gamma [c + ln(e^{-c} + m u) - ln(m + 1)],  h = 0.
///
/// c = max(0, max_i alpha g~_i(anchor) / gamma). Throws NumericalRangeError when a component
/// exponent exceeds 700 after the shift; rebuild with an anchor near the current point.
CompositeProblem build_wasserstein(const SimpleTerm& objective, const constraints::ConstraintSet& cons,
                                   const WassersteinConfig& cfg, const Vector& anchor = {});

/// Distributionally robust logistic regression over (beta, lambda, s_1..s_m).
struct DrLogistic {
  SimpleTerm objective;  // lambda * eps + mean(s)
  constraints::ConstraintSet constraints;
  Index dim_beta = 0;
  Index m = 0;

  Index dim() const { return dim_beta + 1 + m; }
  Vector pack(const Vector& beta, double lambda, const Vector& s) const;
};

/// Constraints, in order: l(z_i, y_i) - s_i; l(z_i, -y_i) - lambda kappa - s_i; |beta| - lambda.
DrLogistic build_dr_logistic(const TabularDataset& data, double eps_radius, double kappa_flip);

/// log(1 + exp(-y <beta, z>)) without overflow.
double logistic_loss(double margin);

/// g^_i(x) = g~_i(x) + mu_i |x|^2.
constraints::ConstraintSet convexify_constraints(const constraints::ConstraintSet& cons, const Vector& mu);

enum class Divergence { Chi2, Kl };

/// Maximizes the penalized inner objective over the simplex by projected gradient ascent
/// (10^5 iterations, step 1 / (10 gamma m)) and, for m <= 3, the vertices. m <= 12.
double brute_force_penalized_max(const Vector& loss_values, Divergence div, double gamma);

/// The penalized inner objective at a given p.
double penalized_inner(const Vector& loss_values, const Vector& p, Divergence div, double gamma);

/// Euclidean projection onto {p : sum p = 1, p_i >= floor}.
Vector project_simplex(const Vector& v, double floor = 0.0);

}  // namespace dro::reductions
