#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dro/core.hpp"

namespace dro::constraints {

enum class ConstraintKind { Affine, ConvexSmooth, General };

/// m constraints g~_i(x) <= 0 with value and gradient access.
struct ConstraintSet {
  Index m = 0;
  Index dim = 0;
  /// Returns g~_i(x); writes the gradient when `grad` is non-null.
  std::function<double(Index i, const Vector& x, Vector* grad)> eval;
  std::vector<ConstraintKind> kinds;  // one per constraint

  bool all_affine() const;
  void validate() const;
};

/// a_i^T x - b_i <= 0 for each row of A.
ConstraintSet affine(Matrix A, Vector b);

/// Concatenates two sets over the same decision space.
ConstraintSet concat(const ConstraintSet& a, const ConstraintSet& b);

/// All constraint values at x.
Vector values(const ConstraintSet& set, const Vector& x);

/// max(0, max_i g~_i(x)).
double max_violation(const ConstraintSet& set, const Vector& x);

/// Spot-checks that affine-tagged constraints have the same gradient at two random points.
bool affine_tags_consistent(const ConstraintSet& set, std::uint64_t seed, double tol = 1e-12);

struct ProjectionOptions {
  double tol = 1e-8;         // violation tolerance
  double step_tol = 1e-10;   // Dykstra successive-iterate tolerance
  Index max_iter = 100000;
  double gamma0 = 1e-2;      // penalty continuation: initial smoothing temperature
  double gamma_min = 1e-10;  // penalty continuation: final temperature
  double alpha0 = 10.0;      // penalty continuation: initial penalty scale
};

struct ProjectionResult {
  Vector x;
  double residual = 0;  // max_violation at x
  Index iterations = 0;
};

/// Euclidean projection onto {x : g~_i(x) <= 0 for all i}.
///
/// Affine sets use cyclic Dykstra over the halfspaces. Other sets use log-sum-exp penalty
/// continuation solved by damped Gauss-Newton steps. Throws NonconvergenceError carrying the last
/// residual when max_iter is exhausted above tolerance.
ProjectionResult project_feasible(const ConstraintSet& set, const Vector& x,
                                  const ProjectionOptions& opts = {});

/// Sampling-based estimate of min |grad g(x)| over points where the max constraint is near zero.
/// Diagnostic only: returns +inf when no near-boundary sample is found.
double estimate_rho(const ConstraintSet& set, const Vector& center, double radius, Index samples,
                    std::uint64_t seed, double band = 1e-2);

}  // namespace dro::constraints
