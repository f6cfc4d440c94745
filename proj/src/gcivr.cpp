#include "dro/gcivr.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

namespace dro::gcivr {
namespace {

Index ceil_index(double v) {
  // Absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
  return static_cast<Index>(std::max(1.0, std::ceil(v - 1e-9)));
}

Index sqrt_m(Index m) { return ceil_index(std::sqrt(static_cast<double>(m))); }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void assign_means(const kernels::ComponentSums& s, Index n, EpochState& state) {
  const double d = static_cast<double>(n);
  state.y = s.g / d;
  state.z = s.jac / d;
  state.w = s.h_grad / d;
}

}  // namespace

Schedule Schedule::adaptive(double beta, double zeta) {
  Schedule s;
  s.mode = ScheduleMode::Adaptive;
  s.beta = beta;
  s.zeta = zeta;
  return s;
}

Schedule Schedule::constant_size(Index tau, Index S, Index B) {
  Schedule s;
  s.mode = ScheduleMode::Constant;
  s.constant = {tau, S, B};
  return s;
}

Index Schedule::T0(Index m) const {
  if (mode != ScheduleMode::Adaptive) return 0;
  return ceil_index((std::sqrt(static_cast<double>(m)) - zeta) / beta);
}

EpochSize Schedule::at(Index t, Index m) const {
  const Index root = sqrt_m(m);
  switch (mode) {
    case ScheduleMode::Constant:
      return constant;
    case ScheduleMode::Adaptive:
      if (t <= T0(m)) {
        const Index tau = std::min(ceil_index(beta * static_cast<double>(t) + zeta), root);
        return {tau, tau, std::min(tau * tau, m)};
      }
      [[fallthrough]];
    case ScheduleMode::FixedSqrtM:
      break;
  }
  return {root, root, m};
}

void Schedule::validate(Index m) const {
  if (m == 0) throw std::invalid_argument("schedule: m must be positive");
  if (mode == ScheduleMode::Adaptive) {
    if (!(beta > 0)) throw std::invalid_argument("schedule: adaptive mode needs beta > 0");
    if (!(zeta >= 0) || !(zeta < std::sqrt(static_cast<double>(m)))) {
      throw std::invalid_argument("schedule: adaptive mode needs 0 <= zeta < sqrt(m)");
    }
  }
  if (mode == ScheduleMode::Constant && (constant.tau < 1 || constant.S < 1 || constant.B < 1)) {
    throw std::invalid_argument("schedule: tau, S and B must be at least 1");
  }
}

OutputRule GcivrConfig::resolved_output_rule() const {
  if (output_rule) return *output_rule;
  return regime == Regime::StronglyConvex ? OutputRule::LastIterate : OutputRule::UniformRandomIterate;
}

void GcivrConfig::validate() const {
  if (!(eta >= 0) || !std::isfinite(eta)) throw std::invalid_argument("gcivr: eta must be finite and >= 0");
  if (T < 1) throw std::invalid_argument("gcivr: T must be at least 1");
  if (K < 1) throw std::invalid_argument("gcivr: K must be at least 1");
}

double derive_step_size(const SmoothnessSpec& spec, Regime regime) {
  spec.validate();
  const double L = spec.L_phi();
  if (!(L > 0)) throw std::invalid_argument("derive_step_size: L_phi must be positive");
  const double G0 = spec.G0();
  if (regime == Regime::StronglyConvex) return 0.9 * 2.0 / (L + std::sqrt(L * L + 36.0 * G0));
  return 0.9 * 4.0 / (L + std::sqrt(L * L + 12.0 * G0));
}

Index theorem_epochs(Index m, double mu, double eta) {
  if (!(mu > 0) || !(eta > 0)) throw std::invalid_argument("theorem_epochs: mu and eta must be positive");
  return ceil_index(5.0 / (std::sqrt(static_cast<double>(m)) * mu * eta));
}

Index theorem_stages(double eps) {
  if (!(eps > 0)) throw std::invalid_argument("theorem_stages: eps must be positive");
  return ceil_index(std::log(1.0 / eps));
}

std::uint64_t analytic_stage_calls(const Schedule& schedule, Index m, Index T) {
  std::uint64_t total = 0;
  for (Index t = 1; t <= T; ++t) {
    const EpochSize e = schedule.at(t, m);
    const std::uint64_t per_inner = e.S == m ? e.S : 2 * e.S;
    total += e.B + per_inner * (e.tau - 1);
  }
  return total;
}

Index stage_steps(const Schedule& schedule, Index m, Index T) {
  Index total = 0;
  for (Index t = 1; t <= T; ++t) total += schedule.at(t, m).tau;
  return total;
}

void batch_estimate(const CompositeProblem& problem, EpochState& state, Index B, Rng& rng,
                    OracleCounter& counter, const kernels::ExecPolicy& exec) {
  if (B < 1) throw std::invalid_argument("gcivr: batch size must be at least 1");
  if (B == problem.m) {
    assign_means(kernels::sums(problem, state.x, kernels::IndexSet::range(0, problem.m), exec), B, state);
  } else {
    std::vector<Index> ids;
    sample_indices(rng, B, 0, problem.m, ids);
    assign_means(kernels::sums(problem, state.x, kernels::IndexSet::list(ids), exec), B, state);
  }
  counter.add_components(B);
}

void delta_update(const CompositeProblem& problem, EpochState& state, std::span<const Index> ids,
                  OracleCounter& counter, const kernels::ExecPolicy& exec) {
  if (ids.empty()) throw std::invalid_argument("gcivr: inner sample size must be at least 1");
  const kernels::ComponentSums s =
      kernels::delta_sums(problem, state.x, state.x_prev, kernels::IndexSet::list(ids), exec);
  const double n = static_cast<double>(ids.size());
  state.y += s.g / n;
  state.z += s.jac / n;
  state.w += s.h_grad / n;
  counter.add_components(2 * ids.size());
}

void inner_update(const CompositeProblem& problem, EpochState& state, Index S, Rng& rng,
                  OracleCounter& counter, const kernels::ExecPolicy& exec) {
  if (S < 1) throw std::invalid_argument("gcivr: inner sample size must be at least 1");
  if (S == problem.m) {
    // Full pass: the recursion telescopes to the exact means at x.
    assign_means(kernels::sums(problem, state.x, kernels::IndexSet::range(0, problem.m), exec), S, state);
    counter.add_components(S);
    return;
  }
  std::vector<Index> ids;
  sample_indices(rng, S, 0, problem.m, ids);
  delta_update(problem, state, ids, counter, exec);
}

Vector estimated_gradient(const CompositeProblem& problem, const EpochState& state, OracleCounter& counter) {
  Vector fprime(problem.dim_g);
  problem.f(state.y, &fprime);
  counter.f_outer_calls += 1;
  return state.z.transpose() * fprime + state.w;
}

void prox_update(const CompositeProblem& problem, EpochState& state, const Vector& grad, double eta,
                 OracleCounter& counter) {
  state.x_prev = state.x;
  state.x = problem.r.prox(eta, state.x - eta * grad);
  counter.prox_calls += 1;
}

void run_epoch(const CompositeProblem& problem, EpochState& state, const EpochSize& size, double eta,
               Rng& rng, OracleCounter& counter, const kernels::ExecPolicy& exec,
               const std::function<void(Index)>& on_step) {
  if (size.tau < 1 || size.S < 1 || size.B < 1) {
    throw std::invalid_argument("gcivr: epoch sizes must be at least 1");
  }
  batch_estimate(problem, state, size.B, rng, counter, exec);
  prox_update(problem, state, estimated_gradient(problem, state, counter), eta, counter);
  if (on_step) on_step(1);
  for (Index j = 2; j <= size.tau; ++j) {
    inner_update(problem, state, size.S, rng, counter, exec);
    prox_update(problem, state, estimated_gradient(problem, state, counter), eta, counter);
    if (on_step) on_step(j);
  }
}

namespace {

struct RunContext {
  Clock::time_point start;
};

EpochRunner centralized_runner(const CompositeProblem& problem, const GcivrConfig& config,
                               std::uint64_t stage_seed) {
  auto rng = std::make_shared<Rng>(derive_seed(stage_seed, 0));
  return [&problem, &config, rng](EpochState& state, const EpochSize& size, OracleCounter& counter,
                                  const std::function<void(Index)>& on_step) {
    run_epoch(problem, state, size, config.eta, *rng, counter, config.exec, on_step);
  };
}

Vector run_stage_impl(const CompositeProblem& problem, const Vector& x0, const GcivrConfig& config, Index stage,
                      SolverReport& report, const RunContext& ctx, const RunnerFactory& factory) {
  problem.validate();
  config.validate();
  config.schedule.validate(problem.m);
  if (static_cast<Index>(x0.size()) != problem.dim_x) throw std::invalid_argument("gcivr: x0 has the wrong size");

  const std::uint64_t stage_seed = derive_seed(config.seed, 2 * stage);
  const EpochRunner runner =
      factory ? factory(problem, stage_seed) : centralized_runner(problem, config, stage_seed);

  const Index total_steps = stage_steps(config.schedule, problem.m, config.T);
  const bool uniform = config.resolved_output_rule() == OutputRule::UniformRandomIterate;
  Index selected = total_steps;
  if (uniform) {
    Rng pick(derive_seed(config.seed, 2 * stage + 1));
    selected = std::uniform_int_distribution<Index>(0, total_steps)(pick);
  }
  Vector chosen = x0;

  EpochState state;
  state.x = x0;
  state.x_prev = x0;
  Index done = 0;
  for (Index t = 1; t <= config.T; ++t) {
    const EpochSize size = config.schedule.at(t, problem.m);
    auto on_step = [&](Index j) {
      if (!state.x.allFinite()) {
        throw NumericalRangeError("gcivr: iterate became non-finite at stage " + std::to_string(stage) +
                                  ", epoch " + std::to_string(t) + "; reduce eta");
      }
      ++done;
      if (done == selected) chosen = state.x;
      const bool epoch_end = j == size.tau;
      const bool stage_end = done == total_steps;
      const bool want_row = config.record_every > 0 && (done % config.record_every == 0 || stage_end);
      const bool want_gm = (config.grad_map_every > 0 && done % config.grad_map_every == 0) ||
                           (config.grad_map_at_epoch_end && epoch_end);
      if (want_row || want_gm) {
        TrajectoryRecord rec;
        rec.stage = stage;
        rec.epoch = t;
        rec.step = j;
        rec.oracle_g_calls = report.counters.g_value_calls;
        rec.oracle_h_calls = report.counters.h_gradient_calls;
        if (config.record_psi) rec.psi = psi(problem, state.x);
        if (want_gm && config.eta > 0) rec.grad_map_sq = gradient_mapping(problem, config.eta, state.x).sq_norm;
        if (config.violation) rec.max_violation = config.violation(state.x);
        rec.wall_s = seconds_since(ctx.start);
        report.trajectory.push_back(std::move(rec));
      }
      if (config.after_step) config.after_step({stage, t, j, &state, &report.counters});
    };
    runner(state, size, report.counters, on_step);
  }
  report.selected_iterate.push_back(selected);
  return uniform ? chosen : state.x;
}

}  // namespace

Vector run_stage(const CompositeProblem& problem, const Vector& x0, const GcivrConfig& config, Index stage,
                 SolverReport& report) {
  return run_stage_impl(problem, x0, config, stage, report, {Clock::now()}, {});
}

SolverReport solve_restarted(const ProblemBuilder& builder, const Vector& x0, const GcivrConfig& config) {
  return solve_restarted_with(builder, x0, config, {});
}

SolverReport solve_restarted_with(const ProblemBuilder& builder, const Vector& x0, const GcivrConfig& config,
                                  const RunnerFactory& factory) {
  config.validate();
  SolverReport report;
  const RunContext ctx{Clock::now()};
  Vector x = x0;
  CompositeProblem last;
  for (Index k = 0; k < config.K; ++k) {
    last = builder(k, x);
    x = run_stage_impl(last, x, config, k, report, ctx, factory);
    report.stage_x.push_back(x);
    report.stage_psi.push_back(psi(last, x));
  }
  report.final_x = x;
  report.final_psi = report.stage_psi.back();
  report.wall_time = seconds_since(ctx.start);
  return report;
}

SolverReport solve(const CompositeProblem& problem, const Vector& x0, const GcivrConfig& config) {
  return solve_restarted([&problem](Index, const Vector&) { return problem; }, x0, config);
}

ConstrainedReport solve_constrained_wasserstein(const SimpleTerm& objective, const constraints::ConstraintSet& cons,
                                                const reductions::WassersteinConfig& wcfg, const Vector& x0,
                                                const GcivrConfig& config, const ConstrainedOptions& opts) {
  cons.validate();
  GcivrConfig cfg = config;
  if (!cfg.violation) cfg.violation = [cons](const Vector& x) { return constraints::max_violation(cons, x); };

  auto builder = [&](Index k, const Vector& xk) {
    reductions::WassersteinConfig stage_cfg = wcfg;
    if (opts.gamma_schedule) stage_cfg.gamma = opts.gamma_schedule(k);
    return reductions::build_wasserstein(objective, cons, stage_cfg, xk);
  };

  ConstrainedReport out;
  out.run = solve_restarted(builder, x0, cfg);
  if (opts.spec && opts.spec->rho > 0 && wcfg.alpha * opts.spec->rho <= opts.spec->G_r) {
    out.run.warnings.push_back("alpha <= G_r / rho: the terminal projection bound does not apply");
  }

  out.x_unprojected = out.run.final_x;
  out.max_violation_before = constraints::max_violation(cons, out.x_unprojected);
  out.run.counters.projection_calls += 1;
  const constraints::ProjectionResult proj =
      constraints::project_feasible(cons, out.x_unprojected, opts.projection);
  out.x_projected = proj.x;
  out.projection_residual = proj.residual;
  out.projection_iterations = proj.iterations;
  out.max_violation_after = constraints::max_violation(cons, out.x_projected);
  out.r_before = objective.value(out.x_unprojected);
  out.r_after = objective.value(out.x_projected);
  out.gap = out.r_after - out.r_before;
  return out;
}

}  // namespace dro::gcivr
