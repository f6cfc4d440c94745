#pragma once

#include <cstdint>
#include <vector>

#include "dro/core.hpp"
#include "dro/gcivr.hpp"

namespace dro::diagnostics {

/// Empirical lower bounds of the Lipschitz constants (never upper bounds).
struct ConstantEstimates {
  double l_g = 0, L_g = 0;
  double l_h = 0, L_h = 0;
  double l_f = 0, L_f = 0;
};

struct ProbeOptions {
  Vector center;        // default: origin
  double radius = 1.0;  // x probes are uniform in the ball of this radius around center
  double u_lo = -1.0;   // f probes are uniform in [u_lo, u_hi]^p
  double u_hi = 1.0;
};

/// Max difference quotients over random pairs and components, plus Jacobian norms at the probes.
/// Probe k depends only on (seed, k), so more probes never lower an estimate.
ConstantEstimates estimate_constants(const CompositeProblem& problem, Index num_probes, std::uint64_t seed,
                                     const ProbeOptions& opts = {});

struct VarianceEstimate {
  double value = 0;       // mean of |J_B(x) - J(x)|_F^2 over trials
  double std_error = 0;
};

/// Monte-Carlo estimate of E|mean_B J_{g_i}(x) - J_g(x)|^2 with B indices drawn with replacement.
/// B = m is a full pass and returns 0.
VarianceEstimate estimate_variance(const CompositeProblem& problem, const Vector& x, Index B, Index num_trials,
                                   std::uint64_t seed);

enum class BaselineKind { FullProxGradient, NaiveBiasedSgd };

struct BaselineOptions {
  Index batch = 1;               // naive_biased_sgd sample size
  Index record_every = 1;
  bool record_psi = true;
  Index grad_map_every = 0;
  std::function<double(const Vector&)> violation;
  std::function<void(Index iter, const Vector& x, const OracleCounter& counters)> after_step;
};

/// Full prox-gradient: x <- prox(x - eta grad Phi(x)). Naive SGD plugs batch means of g straight
/// into f'. Counters are kept exactly like the main solver.
gcivr::SolverReport baseline_solve(const CompositeProblem& problem, BaselineKind kind, const Vector& x0, Index iters,
                                   double eta, std::uint64_t seed, const BaselineOptions& opts = {});

struct RateFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
};

/// Least squares of ln(error) on the index 0, 1, ... Constant sequences give slope 0, R^2 = 1.
RateFit fit_rate(const std::vector<double>& errors);

}  // namespace dro::diagnostics
