#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "dro/constraints.hpp"
#include "dro/core.hpp"
#include "dro/dataset.hpp"
#include "dro/diagnostics.hpp"
#include "dro/distsim.hpp"
#include "dro/gcivr.hpp"
#include "dro/problems.hpp"
#include "dro/reductions.hpp"

namespace dro::cli {

using Config = boost::property_tree::ptree;
using Env = std::vector<std::pair<std::string, std::string>>;

/// Invalid configuration; `key()` is "[section] key" or "[section]".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Reads an INI file, or the "config" member of a JSON run summary.
Config load_config(const std::string& path);
Config parse_ini(const std::string& text);

/// GCIVR_<SECTION>__<KEY>=value sets [section] key (names are lowercased).
void apply_env_overrides(Config& cfg, const Env& env);

/// Checks sections, keys, and the one-reduction / one-solver rule.
void validate_config(const Config& cfg);

/// {section: {key: value}} with every value as a string.
std::string config_to_json(const Config& cfg);

enum class Reduction { Chi2, Kl, Wasserstein };
enum class SolverKind { Gcivr, Dist, Baseline };

/// Everything a command needs, built from a validated config.
struct Experiment {
  Config config;
  std::uint64_t seed = 0;
  Reduction reduction = Reduction::Chi2;
  SolverKind solver = SolverKind::Gcivr;

  TabularDataset data;
  LossSet losses;  // per-sample losses without the ridge
  double ridge = 0;
  Vector x0;

  // chi2 / kl
  CompositeProblem problem;

  // wasserstein
  SimpleTerm objective;
  constraints::ConstraintSet cons;
  reductions::WassersteinConfig wcfg;
  std::optional<SmoothnessSpec> spec;  // G_r and rho when both are given

  gcivr::GcivrConfig gcivr;
  distsim::DistConfig dist;
  diagnostics::BaselineKind baseline_kind = diagnostics::BaselineKind::FullProxGradient;
  Index baseline_iters = 0;
  double baseline_eta = 0;
  diagnostics::BaselineOptions baseline;

  std::string out_dir = ".";
  std::string trajectory_file = "trajectory.csv";
  std::string summary_file = "summary.json";
  std::string bench_file = "bench.csv";
  Index bench_checkpoints = 5;
  std::string bench_unit;  // "oracle" or "steps"

  /// The composite problem a solver sees (for wasserstein, anchored at `anchor`).
  CompositeProblem composite(const Vector& anchor) const;
};

Experiment build_experiment(const Config& cfg);

struct CheckResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;
  bool passed() const;
};

/// Jacobian, constant-probe and reduction spot checks on a built problem.
CheckReport run_checks(const Experiment& ex);

/// Writes the pass/fail table; returns 0 when every check passed and 3 otherwise.
int report_checks(const CheckReport& report, std::ostream& out);

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Command-line entry. Exit codes: 0 success, 1 config or usage error, 2 solver nonconvergence,
/// 3 failed checks.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Env& env);

}  // namespace dro::cli
