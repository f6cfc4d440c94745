#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "dro/linalg.hpp"
#include "dro/prox.hpp"

namespace dro {

/// Raised when shifted exponentials still leave the representable range.
class NumericalRangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by iterative routines that exhaust their budget; carries the last residual.
class NonconvergenceError : public std::runtime_error {
 public:
  NonconvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Counts single-component oracle evaluations.
struct OracleCounter {
  std::uint64_t g_value_calls = 0;
  std::uint64_t g_jacobian_calls = 0;
  std::uint64_t h_gradient_calls = 0;
  std::uint64_t f_outer_calls = 0;
  std::uint64_t prox_calls = 0;
  std::uint64_t projection_calls = 0;

  OracleCounter& operator+=(const OracleCounter& o);
  bool operator==(const OracleCounter&) const = default;

  void add_components(std::uint64_t n) {
    g_value_calls += n;
    g_jacobian_calls += n;
    h_gradient_calls += n;
  }
};

/// Writes g_i(x) into `value` (length p) and, when `jacobian` is non-null, the p x d Jacobian.
using GOracle = std::function<void(Index i, const Vector& x, Vector& value, Matrix* jacobian)>;
/// Returns h_i(x); writes the gradient when `grad` is non-null.
using HOracle = std::function<double(Index i, const Vector& x, Vector* grad)>;
/// Outer map f: R^p -> R; writes f'(u) when `derivative` is non-null.
using OuterFunction = std::function<double(const Vector& u, Vector* derivative)>;

/// Psi(x) = r(x) + (1/m) sum_i h_i(x) + f((1/m) sum_i g_i(x)).
///
/// All oracles must be pure: the same (i, x) always yields the same result, and concurrent calls
/// are allowed.
struct CompositeProblem {
  Index dim_x = 0;
  Index dim_g = 1;
  Index m = 0;
  GOracle g;
  HOracle h;
  OuterFunction f;
  SimpleTerm r = SimpleTerm::zero();
  /// Optional numerically stable evaluation of Phi (Psi without r); overrides the generic composition.
  std::function<double(const Vector&)> stable_value;
  std::string name;

  void validate() const;
};

/// h_i = 0 for every component.
HOracle zero_h(Index dim_x);

/// m scalar per-sample losses with gradients.
struct LossSet {
  Index m = 0;
  Index dim = 0;
  std::function<double(Index i, const Vector& x, Vector* grad)> eval;
};

/// Smoothness constants of the composite problem.
struct SmoothnessSpec {
  double l_f = 0, L_f = 0;
  double l_g = 0, L_g = 0;
  double l_h = 0, L_h = 0;
  double mu = 0;
  double G_r = 0;
  double rho = 0;

  /// (l_g^2 L_f + l_f L_g) + L_h
  double L_phi() const;
  /// 3 (l_g^4 L_f^2 + l_f^2 L_g^2 + l_h^2)
  double G0() const;
  /// L_phi / mu; throws when mu == 0.
  double kappa() const;
  void validate() const;
};

/// Live solver state: iterate, previous iterate and the three running estimators.
struct EpochState {
  Vector x;
  Vector x_prev;
  Vector y;  // estimate of g(x)
  Matrix z;  // estimate of the Jacobian of g at x
  Vector w;  // estimate of grad h(x)
};

/// Exact Psi(x). Not counted against any oracle budget.
double psi(const CompositeProblem& problem, const Vector& x);

/// Exact Phi(x) = Psi(x) - r(x).
double phi(const CompositeProblem& problem, const Vector& x);

/// Exact grad Phi(x) = J_g(x)^T f'(g(x)) + grad h(x); adds m to each component family when
/// `counter` is non-null.
Vector full_phi_gradient(const CompositeProblem& problem, const Vector& x,
                         OracleCounter* counter = nullptr);

struct GradientMapping {
  Vector vector;
  double sq_norm = 0;
};

/// G_eta(x) = (x - prox_r^eta(x - eta grad Phi(x))) / eta with the exact gradient.
GradientMapping gradient_mapping(const CompositeProblem& problem, double eta, const Vector& x);

struct JacobianCheckOptions {
  Index probes = 20;
  std::uint64_t seed = 0;
  double scale = 1.0;  // probes are center + scale * N(0, I)
  Vector center;       // defaults to the origin
};

struct JacobianReport {
  double g_max_rel_error = 0;
  double h_max_rel_error = 0;
  double f_max_rel_error = 0;
  Index probes = 0;

  double max_rel_error() const;
  bool passed(double tol = 1e-5) const { return max_rel_error() <= tol; }
};

/// Compares every analytic derivative against central finite differences on random (i, x) probes.
/// Step h = 1e-6 (1 + |x|_inf). Never throws on a mismatch; it only reports.
JacobianReport check_jacobians(const CompositeProblem& problem, const JacobianCheckOptions& opts = {});

}  // namespace dro
