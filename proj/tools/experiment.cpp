#include <charconv>
#include <cmath>

#include <boost/algorithm/string.hpp>

#include "cli.hpp"
#include "dro/rng.hpp"

namespace dro::cli {

namespace {

std::string key_name(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

std::optional<std::string> raw(const Config& cfg, const std::string& section, const std::string& key) {
  const auto sec = cfg.get_child_optional(section);
  if (!sec) return std::nullopt;
  const auto v = sec->get_optional<std::string>(key);
  if (!v) return std::nullopt;
  return boost::trim_copy(*v);
}

std::string get_string(const Config& cfg, const std::string& section, const std::string& key,
                       const std::string& fallback) {
  return raw(cfg, section, key).value_or(fallback);
}

std::string require_string(const Config& cfg, const std::string& section, const std::string& key) {
  auto v = raw(cfg, section, key);
  if (!v || v->empty()) throw ConfigError(key_name(section, key), "required");
  return *v;
}

template <class T>
T parse_number(const std::string& text, const std::string& name) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(name, "expected a number, got '" + text + "'");
  }
  return value;
}

double get_double(const Config& cfg, const std::string& section, const std::string& key,
                  std::optional<double> fallback = std::nullopt) {
  const auto v = raw(cfg, section, key);
  if (!v) {
    if (!fallback) throw ConfigError(key_name(section, key), "required");
    return *fallback;
  }
  const double d = parse_number<double>(*v, key_name(section, key));
  if (!std::isfinite(d)) throw ConfigError(key_name(section, key), "must be finite");
  return d;
}

std::int64_t get_int(const Config& cfg, const std::string& section, const std::string& key,
                     std::optional<std::int64_t> fallback = std::nullopt) {
  const auto v = raw(cfg, section, key);
  if (!v) {
    if (!fallback) throw ConfigError(key_name(section, key), "required");
    return *fallback;
  }
  return parse_number<std::int64_t>(*v, key_name(section, key));
}

Index get_positive(const Config& cfg, const std::string& section, const std::string& key,
                   std::optional<std::int64_t> fallback = std::nullopt) {
  const std::int64_t v = get_int(cfg, section, key, fallback);
  if (v < 1) throw ConfigError(key_name(section, key), "must be at least 1");
  return static_cast<Index>(v);
}

bool get_bool(const Config& cfg, const std::string& section, const std::string& key, bool fallback) {
  const auto v = raw(cfg, section, key);
  if (!v) return fallback;
  const std::string s = boost::to_lower_copy(*v);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ConfigError(key_name(section, key), "expected true or false, got '" + *v + "'");
}

std::vector<std::string> get_list(const Config& cfg, const std::string& section, const std::string& key) {
  std::vector<std::string> out;
  const auto v = raw(cfg, section, key);
  if (!v || v->empty()) return out;
  boost::split(out, *v, boost::is_any_of(","));
  for (auto& s : out) boost::trim(s);
  return out;
}

template <class E>
E get_enum(const Config& cfg, const std::string& section, const std::string& key, const std::string& fallback,
           const std::vector<std::pair<std::string, E>>& options) {
  const std::string v = boost::to_lower_copy(get_string(cfg, section, key, fallback));
  std::string names;
  for (const auto& [name, value] : options) {
    if (name == v) return value;
    names += (names.empty() ? "" : ", ") + name;
  }
  throw ConfigError(key_name(section, key), "expected one of " + names + ", got '" + v + "'");
}

enum class Source { Synthetic, Csv };
enum class Init { Zero, Erm, Gaussian };

// Largest eigenvalue of Z^T Z / m.
double gram_norm(const Matrix& Z) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(Z.transpose() * Z / static_cast<double>(Z.rows()));
  return es.eigenvalues().maxCoeff();
}

LossSet with_ridge(const LossSet& base, double ridge) {
  if (ridge == 0) return base;
  LossSet out = base;
  out.eval = [base, ridge](Index i, const Vector& x, Vector* g) {
    const double v = base.eval(i, x, g) + 0.5 * ridge * x.squaredNorm();
    if (g) *g += ridge * x;
    return v;
  };
  return out;
}

gcivr::GcivrConfig solver_config(const Config& cfg, const std::string& sec, std::uint64_t seed) {
  gcivr::GcivrConfig c;
  c.eta = get_double(cfg, sec, "eta");
  if (!(c.eta > 0)) throw ConfigError(key_name(sec, "eta"), "must be positive");
  c.T = get_positive(cfg, sec, "t", 1);
  c.K = get_positive(cfg, sec, "k", 1);
  c.seed = seed;
  const auto mode = get_enum<gcivr::ScheduleMode>(cfg, sec, "schedule", "fixed",
                                                  {{"fixed", gcivr::ScheduleMode::FixedSqrtM},
                                                   {"adaptive", gcivr::ScheduleMode::Adaptive},
                                                   {"constant", gcivr::ScheduleMode::Constant}});
  if (mode == gcivr::ScheduleMode::Adaptive) {
    c.schedule = gcivr::Schedule::adaptive(get_double(cfg, sec, "beta"), get_double(cfg, sec, "zeta", 0.0));
  } else if (mode == gcivr::ScheduleMode::Constant) {
    c.schedule = gcivr::Schedule::constant_size(get_positive(cfg, sec, "tau"), get_positive(cfg, sec, "s"),
                                                get_positive(cfg, sec, "b"));
  }
  c.regime = get_enum<gcivr::Regime>(cfg, sec, "regime", "strongly_convex",
                                     {{"strongly_convex", gcivr::Regime::StronglyConvex},
                                      {"nonconvex", gcivr::Regime::Nonconvex}});
  if (raw(cfg, sec, "output_rule")) {
    c.output_rule = get_enum<gcivr::OutputRule>(cfg, sec, "output_rule", "",
                                                {{"last", gcivr::OutputRule::LastIterate},
                                                 {"uniform", gcivr::OutputRule::UniformRandomIterate}});
  }
  c.exec.parallel = get_bool(cfg, sec, "parallel", false);
  c.record_every = static_cast<Index>(get_int(cfg, "output", "record_every", 1));
  c.record_psi = get_bool(cfg, "output", "record_psi", true);
  c.grad_map_every = static_cast<Index>(get_int(cfg, "output", "grad_map_every", 0));
  c.grad_map_at_epoch_end = get_bool(cfg, "output", "grad_map_at_epoch_end", c.regime == gcivr::Regime::Nonconvex);
  return c;
}

}  // namespace

CompositeProblem Experiment::composite(const Vector& anchor) const {
  if (reduction != Reduction::Wasserstein) return problem;
  return reductions::build_wasserstein(objective, cons, wcfg, anchor);
}

Experiment build_experiment(const Config& cfg) {
  validate_config(cfg);
  Experiment ex;
  ex.config = cfg;
  ex.seed = static_cast<std::uint64_t>(get_int(cfg, "run", "seed", 0));
  const std::uint64_t data_seed = static_cast<std::uint64_t>(get_int(cfg, "problem", "data_seed",
                                                                     static_cast<std::int64_t>(ex.seed)));

  // Data and losses.
  const Source source = get_enum<Source>(cfg, "problem", "source", "synthetic",
                                         {{"synthetic", Source::Synthetic}, {"csv", Source::Csv}});
  std::optional<problems::QuadraticFixture> quad;
  if (source == Source::Csv) {
    problems::CsvSchema schema;
    schema.label = require_string(cfg, "problem", "label");
    schema.group = get_string(cfg, "problem", "group", "");
    schema.features = get_list(cfg, "problem", "features");
    schema.positive_label = get_string(cfg, "problem", "positive_label", "");
    schema.standardize = get_bool(cfg, "problem", "standardize", true);
    const std::string path = require_string(cfg, "problem", "path");
    try {
      ex.data = problems::ingest_csv(path, schema);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key_name("problem", "path"), e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(key_name("problem", "path"), e.what());
    }
  } else {
    const auto kind = get_enum<problems::SyntheticKind>(
        cfg, "problem", "synthetic", "quadratic",
        {{"quadratic", problems::SyntheticKind::StronglyConvexQuadratic},
         {"two_group_bias", problems::SyntheticKind::TwoGroupBias},
         {"nonconvex_toy", problems::SyntheticKind::NonconvexToy}});
    const Index m = get_positive(cfg, "problem", "m", 16);
    const Index d = get_positive(cfg, "problem", "d", 5);
    auto syn = problems::make_synthetic(kind, m, d, data_seed);
    ex.data = std::move(syn.data);
    if (kind == problems::SyntheticKind::StronglyConvexQuadratic) quad = syn.quadratic;
  }
  const auto loss = get_enum<problems::LossKind>(cfg, "problem", "loss", quad ? "quadratic" : "logistic",
                                                 {{"logistic", problems::LossKind::Logistic},
                                                  {"quadratic", problems::LossKind::Quadratic},
                                                  {"mlp2", problems::LossKind::Mlp2}});
  const Index hidden = get_positive(cfg, "problem", "hidden", 4);
  const double ridge = get_double(cfg, "problem", "ridge", 0.0);
  if (ridge < 0) throw ConfigError(key_name("problem", "ridge"), "must be nonnegative");
  ex.ridge = ridge;
  if (quad && loss == problems::LossKind::Quadratic) {
    ex.losses = problems::quadratic_losses(quad->A, quad->b);
  } else {
    if (quad && loss == problems::LossKind::Logistic) {
      throw ConfigError(key_name("problem", "loss"), "the quadratic fixture has no class labels");
    }
    ex.losses = problems::make_losses(loss, ex.data, hidden);
  }

  // Starting point.
  const Init init = get_enum<Init>(cfg, "problem", "init", loss == problems::LossKind::Mlp2 ? "gaussian" : "zero",
                                   {{"zero", Init::Zero}, {"erm", Init::Erm}, {"gaussian", Init::Gaussian}});
  ex.x0 = Vector::Zero(static_cast<Eigen::Index>(ex.losses.dim));
  if (init == Init::Erm) {
    if (loss != problems::LossKind::Logistic) {
      throw ConfigError(key_name("problem", "init"), "erm start needs loss = logistic");
    }
    ex.x0 = problems::fit_logistic(ex.data, std::max(ridge, 1e-6));
  } else if (init == Init::Gaussian) {
    const double scale = get_double(cfg, "problem", "init_scale", 0.5);
    Rng rng(derive_seed(data_seed, 0x696e6974ULL));
    std::normal_distribution<double> n;
    for (Eigen::Index i = 0; i < ex.x0.size(); ++i) ex.x0(i) = scale * n(rng);
  }

  // Reduction.
  const SimpleTerm ridge_term = ridge > 0 ? SimpleTerm::squared_norm(ridge) : SimpleTerm::zero();
  if (cfg.get_child_optional("chi2")) {
    ex.reduction = Reduction::Chi2;
    const double gamma = get_double(cfg, "chi2", "gamma");
    if (!(gamma > 0)) throw ConfigError(key_name("chi2", "gamma"), "must be positive");
    ex.problem = reductions::build_chi2(ex.losses, {gamma});
    ex.problem.r = ridge_term;
  } else if (cfg.get_child_optional("kl")) {
    ex.reduction = Reduction::Kl;
    const double gamma = get_double(cfg, "kl", "gamma");
    if (!(gamma > 0)) throw ConfigError(key_name("kl", "gamma"), "must be positive");
    ex.problem = reductions::build_kl(ex.losses, {gamma}, ex.x0);
    ex.problem.r = ridge_term;
  } else {
    ex.reduction = Reduction::Wasserstein;
    const std::string kind = boost::to_lower_copy(get_string(cfg, "wasserstein", "constraints", "fairness"));
    if (kind != "fairness") {
      throw ConfigError(key_name("wasserstein", "constraints"), "only 'fairness' is supported, got '" + kind + "'");
    }
    if (loss == problems::LossKind::Mlp2) {
      throw ConfigError(key_name("problem", "loss"), "fairness constraints need a linear model (logistic or quadratic)");
    }
    if (!ex.data.has_groups()) throw ConfigError(key_name("problem", "group"), "fairness constraints need group ids");
    problems::FairnessSpec fs;
    fs.eps_slack = get_double(cfg, "wasserstein", "eps_slack", 0.05);
    fs.surrogate_temp = get_double(cfg, "wasserstein", "temp", 5.0);
    fs.proxy_copies = get_positive(cfg, "wasserstein", "proxy_copies", 1);
    for (const auto& g : get_list(cfg, "wasserstein", "groups")) {
      fs.groups.push_back(static_cast<int>(parse_number<long>(g, key_name("wasserstein", "groups"))));
    }
    try {
      ex.cons = problems::build_fairness_constraints(ex.data, problems::linear_scores(ex.data), fs);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("[wasserstein]", e.what());
    }
    const LossSet objective_losses = with_ridge(ex.losses, ridge);
    const double curvature = loss == problems::LossKind::Logistic ? 0.25 : 1.0;
    const Matrix& Z = quad ? quad->A : ex.data.features;
    const double L = get_double(cfg, "wasserstein", "objective_l", curvature * gram_norm(Z) + ridge);
    if (!(L > 0)) throw ConfigError(key_name("wasserstein", "objective_l"), "must be positive");
    ex.objective = problems::smooth_term(objective_losses, L, get_positive(cfg, "wasserstein", "prox_iters", 50));

    const double alpha = get_double(cfg, "wasserstein", "alpha");
    if (!(alpha > 0)) throw ConfigError(key_name("wasserstein", "alpha"), "must be positive");
    const Index K = cfg.get_child_optional("gcivr") ? get_positive(cfg, "gcivr", "k", 1) : 1;
    ex.wcfg = reductions::WassersteinConfig::from_restarts(alpha, K, ex.cons.m);
    if (raw(cfg, "wasserstein", "gamma")) {
      ex.wcfg.gamma = get_double(cfg, "wasserstein", "gamma");
      if (!(ex.wcfg.gamma > 0)) throw ConfigError(key_name("wasserstein", "gamma"), "must be positive");
    }
    if (raw(cfg, "wasserstein", "g_r") && raw(cfg, "wasserstein", "rho")) {
      SmoothnessSpec s;
      s.G_r = get_double(cfg, "wasserstein", "g_r");
      s.rho = get_double(cfg, "wasserstein", "rho");
      ex.spec = s;
    }
  }

  // Solver.
  if (cfg.get_child_optional("gcivr")) {
    ex.solver = SolverKind::Gcivr;
    ex.gcivr = solver_config(cfg, "gcivr", ex.seed);
  } else if (cfg.get_child_optional("dist")) {
    if (ex.reduction == Reduction::Wasserstein) {
      throw ConfigError("[dist]", "wasserstein runs need a [gcivr] or [baseline] solver");
    }
    ex.solver = SolverKind::Dist;
    ex.dist.base = solver_config(cfg, "dist", ex.seed);
    ex.gcivr = ex.dist.base;
    ex.dist.p = get_positive(cfg, "dist", "p", 1);
    for (const auto& s : get_list(cfg, "dist", "shard_sizes")) {
      ex.dist.shard_sizes.push_back(static_cast<Index>(parse_number<long>(s, key_name("dist", "shard_sizes"))));
    }
    ex.dist.parallel_workers = get_bool(cfg, "dist", "parallel_workers", false);
    try {
      ex.dist.validate(ex.losses.m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("[dist]", e.what());
    }
  } else {
    ex.solver = SolverKind::Baseline;
    ex.baseline_kind = get_enum<diagnostics::BaselineKind>(
        cfg, "baseline", "kind", "full_prox_gradient",
        {{"full_prox_gradient", diagnostics::BaselineKind::FullProxGradient},
         {"naive_biased_sgd", diagnostics::BaselineKind::NaiveBiasedSgd}});
    ex.baseline_iters = get_positive(cfg, "baseline", "iters");
    ex.baseline_eta = get_double(cfg, "baseline", "eta");
    if (!(ex.baseline_eta > 0)) throw ConfigError(key_name("baseline", "eta"), "must be positive");
    ex.baseline.batch = get_positive(cfg, "baseline", "batch", 1);
    ex.baseline.record_every = static_cast<Index>(get_int(cfg, "output", "record_every", 1));
    ex.baseline.record_psi = get_bool(cfg, "output", "record_psi", true);
    ex.baseline.grad_map_every = static_cast<Index>(get_int(cfg, "output", "grad_map_every", 0));
  }
  if (ex.reduction == Reduction::Wasserstein) {
    auto cons = ex.cons;
    auto viol = [cons](const Vector& x) { return constraints::max_violation(cons, x); };
    ex.gcivr.violation = viol;
    ex.baseline.violation = viol;
  }
  for (const char* k : {"record_every", "grad_map_every"}) {
    if (get_int(cfg, "output", k, 0) < 0) throw ConfigError(key_name("output", k), "must be nonnegative");
  }

  // Output.
  ex.out_dir = get_string(cfg, "output", "dir", ".");
  ex.trajectory_file = get_string(cfg, "output", "trajectory", "trajectory.csv");
  ex.summary_file = get_string(cfg, "output", "summary", "summary.json");
  ex.bench_file = get_string(cfg, "output", "bench", "bench.csv");
  ex.bench_checkpoints = get_positive(cfg, "bench", "checkpoints", 5);
  ex.bench_unit = boost::to_lower_copy(
      get_string(cfg, "bench", "unit", ex.reduction == Reduction::Wasserstein ? "steps" : "oracle"));
  if (ex.bench_unit != "oracle" && ex.bench_unit != "steps") {
    throw ConfigError(key_name("bench", "unit"), "expected oracle or steps, got '" + ex.bench_unit + "'");
  }
  return ex;
}

}  // namespace dro::cli
