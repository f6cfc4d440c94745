#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dro/constraints.hpp"
#include "dro/core.hpp"
#include "dro/kernels.hpp"
#include "dro/reductions.hpp"
#include "dro/rng.hpp"

/// Epoch-structured variance-reduced proximal solver for CompositeProblem.
namespace dro::gcivr {

enum class ScheduleMode { FixedSqrtM, Adaptive, Constant };
enum class Regime { StronglyConvex, Nonconvex };
enum class OutputRule { LastIterate, UniformRandomIterate };

/// tau: prox steps in the epoch, S: inner sample size, B: epoch batch size.
struct EpochSize {
  Index tau = 1;
  Index S = 1;
  Index B = 1;
};

struct Schedule {
  ScheduleMode mode = ScheduleMode::FixedSqrtM;
  double beta = 1.0;
  double zeta = 0.0;
  EpochSize constant;  // used by ScheduleMode::Constant

  static Schedule fixed() { return {}; }
  static Schedule adaptive(double beta, double zeta);
  static Schedule constant_size(Index tau, Index S, Index B);

  /// ceil((sqrt(m) - zeta) / beta); adaptive mode only.
  Index T0(Index m) const;
  /// Sizes of epoch t (1-based).
  ///
  /// Fixed: tau = S = ceil(sqrt m), B = m. Adaptive, t <= T0: tau = S = min(ceil(beta t + zeta),
  /// ceil(sqrt m)), B = min(tau^2, m); afterwards as fixed.
  EpochSize at(Index t, Index m) const;
  void validate(Index m) const;
};

/// Step/record callback arguments.
struct StepInfo {
  Index stage = 0;
  Index epoch = 0;  // 1-based
  Index step = 0;   // 1..tau within the epoch
  const EpochState* state = nullptr;
  const OracleCounter* counter = nullptr;
};

struct GcivrConfig {
  double eta = 0.1;
  Index T = 1;
  Index K = 1;
  Schedule schedule;
  std::uint64_t seed = 0;
  Regime regime = Regime::StronglyConvex;
  /// Unset: last iterate for strongly convex, uniform random for nonconvex.
  std::optional<OutputRule> output_rule;

  // Diagnostics; none of these touch the oracle counters.
  Index record_every = 1;          // trajectory row every n prox steps (0 = none); stage ends always
  bool record_psi = true;          // exact Psi on recorded rows
  Index grad_map_every = 0;        // exact |G_eta|^2 every n steps (0 = off)
  bool grad_map_at_epoch_end = false;
  std::function<double(const Vector&)> violation;  // max-violation column when set
  std::function<void(const StepInfo&)> after_step;
  kernels::ExecPolicy exec;

  OutputRule resolved_output_rule() const;
  void validate() const;
};

struct TrajectoryRecord {
  Index stage = 0;
  Index epoch = 0;
  Index step = 0;
  std::uint64_t oracle_g_calls = 0;
  std::uint64_t oracle_h_calls = 0;
  std::optional<double> psi;
  std::optional<double> grad_map_sq;
  std::optional<double> max_violation;
  double wall_s = 0;
};

struct SolverReport {
  std::vector<TrajectoryRecord> trajectory;
  OracleCounter counters;
  Vector final_x;
  double final_psi = 0;
  std::vector<Vector> stage_x;      // output of each stage
  std::vector<double> stage_psi;    // Psi at each stage output
  std::vector<Index> selected_iterate;  // per stage; 0 is the stage start
  std::vector<std::string> warnings;
  double wall_time = 0;
};

/// 0.9 times the regime bound: 2 / (L + sqrt(L^2 + 36 G0)) or 4 / (L + sqrt(L^2 + 12 G0)).
double derive_step_size(const SmoothnessSpec& spec, Regime regime);

/// ceil(5 / (sqrt(m) mu eta)), at least 1.
Index theorem_epochs(Index m, double mu, double eta);
/// ceil(ln(1 / eps)), at least 1.
Index theorem_stages(double eps);

/// Per-family oracle calls of one stage of T epochs: sum_t (B_t + c S_t (tau_t - 1)), with c = 1
/// when S_t = m (full pass, the previous iterate is not re-evaluated) and c = 2 otherwise.
std::uint64_t analytic_stage_calls(const Schedule& schedule, Index m, Index T);
/// Prox steps of one stage: sum_t tau_t.
Index stage_steps(const Schedule& schedule, Index m, Index T);

/// y, z, w = batch means at state.x over B indices (a full pass when B = m).
void batch_estimate(const CompositeProblem& problem, EpochState& state, Index B, Rng& rng,
                    OracleCounter& counter, const kernels::ExecPolicy& exec = {});

/// Delta recursion y += mean_S [g(x) - g(x_prev)] (likewise z, w) over explicit indices.
void delta_update(const CompositeProblem& problem, EpochState& state, std::span<const Index> ids,
                  OracleCounter& counter, const kernels::ExecPolicy& exec = {});

/// Samples S indices and applies delta_update; when S = m, recomputes full means at state.x.
void inner_update(const CompositeProblem& problem, EpochState& state, Index S, Rng& rng,
                  OracleCounter& counter, const kernels::ExecPolicy& exec = {});

/// z^T f'(y) + w.
Vector estimated_gradient(const CompositeProblem& problem, const EpochState& state, OracleCounter& counter);

/// x_prev = x; x = prox(x - eta * grad).
void prox_update(const CompositeProblem& problem, EpochState& state, const Vector& grad, double eta,
                 OracleCounter& counter);

/// One epoch: batch estimate, first step, then tau - 1 inner updates each followed by a step.
/// `on_step` runs after every prox step with the 1-based step number.
void run_epoch(const CompositeProblem& problem, EpochState& state, const EpochSize& size, double eta,
               Rng& rng, OracleCounter& counter, const kernels::ExecPolicy& exec = {},
               const std::function<void(Index)>& on_step = {});

/// T epochs from x0; returns the stage output per the output rule and appends to `report`.
Vector run_stage(const CompositeProblem& problem, const Vector& x0, const GcivrConfig& config, Index stage,
                 SolverReport& report);

/// Stage k (0-based) problem, built at the previous stage output.
using ProblemBuilder = std::function<CompositeProblem(Index k, const Vector& x_k)>;

/// K warm-started stages.
SolverReport solve_restarted(const ProblemBuilder& builder, const Vector& x0, const GcivrConfig& config);
SolverReport solve(const CompositeProblem& problem, const Vector& x0, const GcivrConfig& config);

/// Epoch implementation plugged into the stage driver. It must add its oracle calls to `counter`
/// before each `on_step` call.
using EpochRunner = std::function<void(EpochState& state, const EpochSize& size, OracleCounter& counter,
                                       const std::function<void(Index)>& on_step)>;
/// Makes the epoch runner of a stage from the stage seed.
using RunnerFactory = std::function<EpochRunner(const CompositeProblem& problem, std::uint64_t stage_seed)>;

/// solve_restarted with a custom epoch implementation; recording and output selection are shared.
SolverReport solve_restarted_with(const ProblemBuilder& builder, const Vector& x0, const GcivrConfig& config,
                                  const RunnerFactory& factory);

struct ConstrainedReport {
  SolverReport run;
  Vector x_unprojected;
  Vector x_projected;
  double r_before = 0;
  double r_after = 0;
  double gap = 0;  // r_after - r_before
  double projection_residual = 0;
  Index projection_iterations = 0;
  double max_violation_before = 0;
  double max_violation_after = 0;
};

struct ConstrainedOptions {
  constraints::ProjectionOptions projection;
  /// Optional per-stage gamma; the default holds wcfg.gamma for every stage.
  std::function<double(Index k)> gamma_schedule;
  /// When set with rho > 0, alpha <= G_r / rho adds a warning.
  std::optional<SmoothnessSpec> spec;
};

/// Solves the smoothed problem with K restarts, re-anchoring the shift at each stage start, then
/// projects the final point once onto the constraint set.
ConstrainedReport solve_constrained_wasserstein(const SimpleTerm& objective,
                                                const constraints::ConstraintSet& cons,
                                                const reductions::WassersteinConfig& wcfg,
                                                const Vector& x0, const GcivrConfig& config,
                                                const ConstrainedOptions& opts = {});

}  // namespace dro::gcivr
