#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"

#include "cli.hpp"
#include "dro/rng.hpp"

#ifndef DRO_VERSION
#define DRO_VERSION "0.0.0"
#endif

namespace dro::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json counter_json(const OracleCounter& c) {
  return json{{"g_value_calls", c.g_value_calls},     {"g_jacobian_calls", c.g_jacobian_calls},
              {"h_gradient_calls", c.h_gradient_calls}, {"f_outer_calls", c.f_outer_calls},
              {"prox_calls", c.prox_calls},           {"projection_calls", c.projection_calls}};
}

fs::path output_path(const Experiment& ex, const std::string& file) {
  fs::create_directories(ex.out_dir);
  return fs::path(ex.out_dir) / file;
}

void write_trajectory(const fs::path& path, const std::vector<gcivr::TrajectoryRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "stage,epoch,step,oracle_g_calls,oracle_h_calls,psi,grad_map_sq,max_violation,wall_s\n";
  for (const auto& r : rows) {
    out << r.stage << ',' << r.epoch << ',' << r.step << ',' << r.oracle_g_calls << ',' << r.oracle_h_calls << ','
        << opt(r.psi) << ',' << opt(r.grad_map_sq) << ',' << opt(r.max_violation) << ',' << format_double(r.wall_s)
        << '\n';
  }
}

CompositeProblem unconstrained_problem(const Experiment& ex) {
  return problems::erm_problem(ex.losses, ex.ridge > 0 ? SimpleTerm::squared_norm(ex.ridge) : SimpleTerm::zero());
}

struct SolveOutcome {
  gcivr::SolverReport report;
  std::optional<gcivr::ConstrainedReport> constrained;
  std::optional<distsim::DistReport> dist;
};

// Baseline on the smoothed problem followed by the single projection.
gcivr::ConstrainedReport baseline_constrained(const Experiment& ex) {
  gcivr::ConstrainedReport cr;
  const CompositeProblem p = ex.composite(ex.x0);
  cr.run = diagnostics::baseline_solve(p, ex.baseline_kind, ex.x0, ex.baseline_iters, ex.baseline_eta, ex.seed,
                                       ex.baseline);
  cr.x_unprojected = cr.run.final_x;
  cr.max_violation_before = constraints::max_violation(ex.cons, cr.x_unprojected);
  const auto proj = constraints::project_feasible(ex.cons, cr.x_unprojected);
  cr.run.counters.projection_calls += 1;
  cr.x_projected = proj.x;
  cr.projection_residual = proj.residual;
  cr.projection_iterations = proj.iterations;
  cr.max_violation_after = proj.residual;
  cr.r_before = ex.objective.value(cr.x_unprojected);
  cr.r_after = ex.objective.value(cr.x_projected);
  cr.gap = cr.r_after - cr.r_before;
  cr.run.final_x = cr.x_projected;
  return cr;
}

SolveOutcome execute(const Experiment& ex) {
  SolveOutcome o;
  const bool constrained = ex.reduction == Reduction::Wasserstein;
  switch (ex.solver) {
    case SolverKind::Gcivr:
      if (constrained) {
        gcivr::ConstrainedOptions opts;
        opts.spec = ex.spec;
        o.constrained = gcivr::solve_constrained_wasserstein(ex.objective, ex.cons, ex.wcfg, ex.x0, ex.gcivr, opts);
        o.report = o.constrained->run;
        o.report.final_x = o.constrained->x_projected;
      } else {
        o.report = gcivr::solve(ex.problem, ex.x0, ex.gcivr);
      }
      break;
    case SolverKind::Dist:
      o.dist = distsim::dist_solve(ex.problem, ex.x0, ex.dist);
      o.report = o.dist->report;
      break;
    case SolverKind::Baseline:
      if (constrained) {
        o.constrained = baseline_constrained(ex);
        o.report = o.constrained->run;
      } else {
        o.report = diagnostics::baseline_solve(ex.problem, ex.baseline_kind, ex.x0, ex.baseline_iters,
                                               ex.baseline_eta, ex.seed, ex.baseline);
      }
      break;
  }
  return o;
}

int cmd_solve(const Experiment& ex, std::ostream& out, std::ostream& err) {
  const SolveOutcome o = execute(ex);
  for (const auto& w : o.report.warnings) err << "warning: " << w << '\n';

  const fs::path traj = output_path(ex, ex.trajectory_file);
  write_trajectory(traj, o.report.trajectory);

  json s;
  s["version"] = DRO_VERSION;
  s["command"] = "solve";
  s["seed"] = ex.seed;
  s["config"] = json::parse(config_to_json(ex.config));
  s["final_x"] = vector_json(o.report.final_x);
  s["final_psi"] = o.report.final_psi;
  s["counters"] = counter_json(o.report.counters);
  s["stage_psi"] = o.report.stage_psi;
  s["selected_iterate"] = o.report.selected_iterate;
  s["warnings"] = o.report.warnings;
  s["trajectory_rows"] = o.report.trajectory.size();
  s["wall_time_s"] = o.report.wall_time;
  if (o.constrained) {
    const auto& c = *o.constrained;
    s["constrained"] = json{{"x_unprojected", vector_json(c.x_unprojected)},
                            {"objective_before", c.r_before},
                            {"objective_after", c.r_after},
                            {"gap", c.gap},
                            {"max_violation_before", c.max_violation_before},
                            {"max_violation_after", c.max_violation_after},
                            {"projection_residual", c.projection_residual},
                            {"projection_iterations", c.projection_iterations},
                            {"alpha", ex.wcfg.alpha},
                            {"gamma", ex.wcfg.gamma}};
  }
  if (o.dist) {
    json dev = json::array();
    for (const auto& c : o.dist->per_device) dev.push_back(counter_json(c));
    s["per_device"] = dev;
    s["max_device_g_calls"] = o.dist->max_device_g_calls;
  }
  const fs::path summary = output_path(ex, ex.summary_file);
  std::ofstream(summary) << s.dump(2) << '\n';
  out << "final psi " << format_double(o.report.final_psi) << ", " << o.report.trajectory.size()
      << " trajectory rows\n";
  out << "wrote " << traj.string() << " and " << summary.string() << '\n';
  return 0;
}

// Bench ---------------------------------------------------------------------------------------

struct Snapshot {
  Vector x;
  OracleCounter counters;
  Index steps = 0;
};

double measure(const std::string& unit, const OracleCounter& c, Index steps) {
  return unit == "steps" ? static_cast<double>(steps) : static_cast<double>(c.g_value_calls + c.h_gradient_calls);
}

// Takes the first iterate at or past each target.
struct Tracker {
  std::string unit;
  std::vector<double> targets;
  std::vector<Snapshot> snaps;
  Index steps = 0;

  void offer(const Vector& x, const OracleCounter& c) {
    ++steps;
    const double v = measure(unit, c, steps);
    while (snaps.size() < targets.size() && v >= targets[snaps.size()]) snaps.push_back({x, c, steps});
  }
  void finish(const Vector& x, const OracleCounter& c) {
    while (snaps.size() < targets.size()) snaps.push_back({x, c, steps});
  }
};

struct BenchRow {
  std::string method;
  Index checkpoint = 0;
  Snapshot snap;
  std::optional<double> objective, grad_map, violation;
};

int cmd_bench(const Experiment& ex, std::ostream& out) {
  if (ex.solver == SolverKind::Baseline) {
    throw ConfigError("[baseline]", "bench compares baselines against a [gcivr] or [dist] solver block");
  }
  const bool constrained = ex.reduction == Reduction::Wasserstein;
  const Index n = ex.bench_checkpoints;

  // Main method: keep every iterate, then place checkpoints on its total budget.
  std::vector<Snapshot> all;
  gcivr::GcivrConfig cfg = ex.solver == SolverKind::Dist ? ex.dist.base : ex.gcivr;
  cfg.record_every = 0;
  cfg.grad_map_every = 0;
  cfg.grad_map_at_epoch_end = false;
  cfg.after_step = [&all](const gcivr::StepInfo& info) {
    all.push_back({info.state->x, *info.counter, static_cast<Index>(all.size() + 1)});
  };
  std::string main_name;
  std::optional<Vector> projected;
  if (constrained) {
    main_name = "gcivr_wasserstein";
    gcivr::ConstrainedOptions opts;
    opts.spec = ex.spec;
    const auto cr = gcivr::solve_constrained_wasserstein(ex.objective, ex.cons, ex.wcfg, ex.x0, cfg, opts);
    projected = cr.x_projected;
  } else if (ex.solver == SolverKind::Dist) {
    main_name = "dist";
    distsim::DistConfig d = ex.dist;
    d.base = cfg;
    distsim::dist_solve(ex.problem, ex.x0, d);
  } else {
    main_name = "gcivr";
    gcivr::solve(ex.problem, ex.x0, cfg);
  }
  if (all.empty()) throw std::runtime_error("bench: the solver took no steps");
  const double total = measure(ex.bench_unit, all.back().counters, all.back().steps);

  Tracker main{ex.bench_unit, {}, {}, 0};
  for (Index k = 1; k <= n; ++k) main.targets.push_back(total * static_cast<double>(k) / static_cast<double>(n));
  for (const auto& s : all) main.offer(s.x, s.counters);
  main.finish(all.back().x, all.back().counters);
  if (projected) main.snaps.back().x = *projected;  // the algorithm's output is the projected point

  // Baselines at the same budget.
  const CompositeProblem base_problem = constrained ? unconstrained_problem(ex) : ex.problem;
  const Index m = base_problem.m;
  const double eta = cfg.eta;
  struct Arm {
    std::string name;
    diagnostics::BaselineKind kind;
    Index per_step;
  };
  const std::vector<Arm> arms = {
      {constrained ? "unconstrained_full_prox_gradient" : "full_prox_gradient",
       diagnostics::BaselineKind::FullProxGradient, 2 * m},
      {constrained ? "unconstrained_sgd" : "naive_biased_sgd", diagnostics::BaselineKind::NaiveBiasedSgd, 2},
  };
  std::vector<std::pair<std::string, Tracker>> trackers = {{main_name, main}};
  for (const Arm& arm : arms) {
    Tracker t{ex.bench_unit, main.targets, {}, 0};
    const Index iters = ex.bench_unit == "steps"
                            ? all.back().steps
                            : std::max<Index>(1, static_cast<Index>(std::ceil(total / static_cast<double>(arm.per_step))));
    diagnostics::BaselineOptions o;
    o.batch = 1;
    o.record_every = 0;
    o.after_step = [&t](Index, const Vector& x, const OracleCounter& c) { t.offer(x, c); };
    const auto rep = diagnostics::baseline_solve(base_problem, arm.kind, ex.x0, iters, eta, ex.seed, o);
    t.finish(rep.final_x, rep.counters);
    trackers.emplace_back(arm.name, std::move(t));
  }

  const fs::path path = output_path(ex, ex.bench_file);
  std::ofstream csv(path);
  csv << "method,checkpoint,oracle_g_calls,oracle_h_calls,steps,objective,grad_map_sq,max_violation\n";
  for (const auto& [name, t] : trackers) {
    for (std::size_t k = 0; k < t.snaps.size(); ++k) {
      const Snapshot& s = t.snaps[k];
      std::optional<double> obj, gm, viol;
      if (constrained) {
        obj = ex.objective.value(s.x);
        viol = constraints::max_violation(ex.cons, s.x);
      } else {
        obj = psi(ex.problem, s.x);
        gm = gradient_mapping(ex.problem, eta, s.x).sq_norm;
      }
      csv << name << ',' << k + 1 << ',' << s.counters.g_value_calls << ',' << s.counters.h_gradient_calls << ','
          << s.steps << ',' << opt(obj) << ',' << opt(gm) << ',' << opt(viol) << '\n';
    }
  }
  out << "wrote " << path.string() << " (" << trackers.size() << " methods, " << n << " checkpoints)\n";
  return 0;
}

// Check ---------------------------------------------------------------------------------------

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

CompositeProblem constraint_problem(const constraints::ConstraintSet& cons) {
  CompositeProblem p;
  p.dim_x = cons.dim;
  p.dim_g = 1;
  p.m = cons.m;
  p.g = [cons](Index i, const Vector& x, Vector& v, Matrix* j) {
    Vector grad;
    v = Vector::Constant(1, cons.eval(i, x, j ? &grad : nullptr));
    if (j) *j = grad.transpose();
  };
  p.h = zero_h(cons.dim);
  p.f = [](const Vector& u, Vector* d) {
    if (d) *d = Vector::Ones(u.size());
    return u.sum();
  };
  p.name = "constraints";
  return p;
}

Vector loss_values(const LossSet& l, const Vector& x) {
  Vector v(static_cast<Eigen::Index>(l.m));
  for (Index i = 0; i < l.m; ++i) v(static_cast<Eigen::Index>(i)) = l.eval(i, x, nullptr);
  return v;
}

}  // namespace

bool CheckReport::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

CheckReport run_checks(const Experiment& ex) {
  CheckReport rep;
  const bool constrained = ex.reduction == Reduction::Wasserstein;
  JacobianCheckOptions jo;
  jo.center = ex.x0;
  jo.scale = 0.5;
  jo.seed = ex.seed;

  {
    CheckResult c{"jacobian-check", true, ""};
    try {
      double worst = 0;
      if (constrained) {
        worst = std::max(check_jacobians(unconstrained_problem(ex), jo).max_rel_error(),
                         check_jacobians(constraint_problem(ex.cons), jo).max_rel_error());
      } else {
        worst = check_jacobians(ex.problem, jo).max_rel_error();
      }
      c.passed = worst <= 1e-5;
      c.detail = "max relative error " + sci(worst);
    } catch (const std::exception& e) {
      c.passed = false;
      c.detail = e.what();
    }
    rep.checks.push_back(c);
  }

  {
    CheckResult c{"constant-probe", true, ""};
    diagnostics::ProbeOptions po;
    po.center = ex.x0;
    if (ex.reduction == Reduction::Kl) {
      po.u_lo = 0.1;
      po.u_hi = 2.0;
    }
    const CompositeProblem p = constrained ? unconstrained_problem(ex) : ex.problem;
    const auto k = diagnostics::estimate_constants(p, 200, ex.seed, po);
    for (double v : {k.l_g, k.L_g, k.l_h, k.L_h, k.l_f, k.L_f}) c.passed = c.passed && std::isfinite(v);
    c.detail = "l_g " + sci(k.l_g) + " L_g " + sci(k.L_g) + " l_h " + sci(k.l_h) + " L_h " + sci(k.L_h) + " l_f " +
               sci(k.l_f) + " L_f " + sci(k.L_f) + " (lower bounds)";
    rep.checks.push_back(c);
  }

  Rng rng(derive_seed(ex.seed, 0x636865636bULL));
  std::normal_distribution<double> normal;
  auto probe = [&](double scale) {
    Vector x = ex.x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += scale * normal(rng);
    return x;
  };

  if (ex.reduction == Reduction::Chi2 || ex.reduction == Reduction::Kl) {
    CheckResult c{"reduction-equivalence", true, ""};
    const double gamma = ex.reduction == Reduction::Chi2 ? ex.config.get<double>("chi2.gamma")
                                                         : ex.config.get<double>("kl.gamma");
    double worst = 0;
    int compared = 0, on_simplex = 0;
    for (int t = 0; t < 5; ++t) {
      const Vector x = probe(0.5);
      const Vector v = loss_values(ex.losses, x);
      const double composite = psi(ex.problem, x) - ex.problem.r.value(x);
      double ref = 0, err = 0;
      if (ex.reduction == Reduction::Chi2) {
        // Stationary weights on the hyperplane sum p = 1; they are the worst case when nonnegative.
        const double n = static_cast<double>(v.size());
        const Vector p = ((v.array() - v.mean()) / gamma + 1.0).matrix() / n;
        ref = reductions::penalized_inner(v, p, reductions::Divergence::Chi2, gamma);
        if (p.minCoeff() >= 0) ++on_simplex;
        err = std::abs(composite - ref) / std::max(1.0, std::abs(ref));
      } else {
        ref = reductions::kl_dro_value(v, gamma);
        const double got = gamma * composite + gamma * std::log(static_cast<double>(ex.losses.m));
        err = std::abs(got - ref) / std::max(1.0, std::abs(ref));
      }
      worst = std::max(worst, err);
      ++compared;
    }
    c.passed = worst <= 1e-6;
    c.detail = std::to_string(compared) + " probes, max relative difference " + sci(worst);
    if (ex.reduction == Reduction::Chi2) {
      c.detail += ", worst case interior at " + std::to_string(on_simplex) + " of " + std::to_string(compared);
    }
    rep.checks.push_back(c);
  } else {
    CheckResult c{"sandwich-bound", true, ""};
    int bad = 0;
    const double span = ex.wcfg.gamma * std::log(static_cast<double>(ex.cons.m) + 1.0);
    for (int t = 0; t < 20; ++t) {
      const Vector x = probe(0.5);
      const CompositeProblem p = ex.composite(x);
      const double pen = psi(p, x) - ex.objective.value(x) + span;
      const double lo = std::max(0.0, ex.wcfg.alpha * constraints::values(ex.cons, x).maxCoeff());
      const double slack = 1e-9 * std::max(1.0, std::abs(lo) + span);
      if (!(pen >= lo - slack && pen <= lo + span + slack)) ++bad;
    }
    c.passed = bad == 0;
    c.detail = std::to_string(bad) + " violations over 20 probes";
    rep.checks.push_back(c);

    CheckResult tags{"affine-tags", constraints::affine_tags_consistent(ex.cons, ex.seed), ""};
    tags.detail = tags.passed ? "consistent" : "affine-tagged constraint with a varying gradient";
    rep.checks.push_back(tags);

    if (ex.spec && ex.spec->rho > 0 && ex.wcfg.alpha <= ex.spec->G_r / ex.spec->rho) {
      rep.warnings.push_back("alpha = " + format_double(ex.wcfg.alpha) + " is at most G_r / rho = " +
                             format_double(ex.spec->G_r / ex.spec->rho) + "; the penalty may not be exact");
    }
  }
  return rep;
}

int report_checks(const CheckReport& report, std::ostream& out) {
  std::vector<std::string> failed;
  out << std::left << std::setw(24) << "check" << std::setw(8) << "result" << "detail\n";
  for (const auto& c : report.checks) {
    out << std::left << std::setw(24) << c.name << std::setw(8) << (c.passed ? "PASS" : "FAIL") << c.detail << '\n';
    if (!c.passed) failed.push_back(c.name);
  }
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  if (failed.empty()) return 0;
  out << "failed:";
  for (const auto& f : failed) out << ' ' << f;
  out << '\n';
  return 3;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Env& env) {
  CLI::App app{"Variance-reduced solvers for DRO and heavily constrained problems", "gcivr"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  app.add_option("--seed", seed, "Override [run] seed");
  app.add_option("--out", out_dir, "Override [output] dir");
  app.set_version_flag("--version", DRO_VERSION);
  std::string config_path;
  auto* solve = app.add_subcommand("solve", "Run the configured solver; write trajectory CSV and JSON summary");
  auto* check = app.add_subcommand("check", "Gradient, constant and reduction checks on the configured problem");
  auto* bench = app.add_subcommand("bench", "Compare the solver with baselines at equal budgets");
  for (auto* sub : {solve, check, bench}) sub->add_option("config", config_path, "INI config or JSON summary")->required();

  std::vector<const char*> argv;
  argv.push_back("gcivr");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    Config cfg = load_config(config_path);
    apply_env_overrides(cfg, env);
    if (seed) cfg.put("run.seed", std::to_string(*seed));
    if (out_dir) cfg.put("output.dir", *out_dir);
    const Experiment ex = build_experiment(cfg);
    if (solve->parsed()) return cmd_solve(ex, out, err);
    if (bench->parsed()) return cmd_bench(ex, out);
    return report_checks(run_checks(ex), out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NonconvergenceError& e) {
    err << "solver did not converge: " << e.what() << '\n';
    return 2;
  } catch (const NumericalRangeError& e) {
    err << "solver left the representable range: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dro::cli
