#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dro/diagnostics.hpp"
#include "dro/gcivr.hpp"
#include "dro/problems.hpp"
#include "fixtures.hpp"

using namespace dro;
using namespace dro::problems;
using fixtures::vec;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path.string();
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double logit(double p) { return std::log(p / (1 - p)); }

}  // namespace

TEST_CASE("logistic loss at the origin") {
  const auto data = make_two_group_bias(50, 3, 1);
  const LossSet l = logistic_losses(data);
  for (Index i = 0; i < l.m; ++i) CHECK(l.eval(i, Vector::Zero(l.dim), nullptr) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("quadratic fixture minimizer solves the normal equations") {
  const auto fx = make_quadratic(16, 5, 7);
  const Vector grad = fx.A.transpose() * (fx.A * fx.x_star - fx.b);
  CHECK(grad.norm() <= 1e-9);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(fx.A.transpose() * fx.A / 16.0);
  CHECK((es.eigenvalues() - fx.eigenvalues).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(fx.eigenvalues.maxCoeff() / fx.eigenvalues.minCoeff() == doctest::Approx(10.0));
}

TEST_CASE("loss oracles pass the jacobian check") {
  const auto xor_data = make_nonconvex_toy(20, 2);
  for (LossKind kind : {LossKind::Logistic, LossKind::Quadratic, LossKind::Mlp2}) {
    const LossSet l = make_losses(kind, xor_data, 4);
    JacobianCheckOptions o;
    o.probes = 40;
    o.scale = 0.7;
    CHECK(check_jacobians(erm_problem(l), o).passed(1e-5));
  }
  CHECK(mlp2_dim(2, 4) == 17);
}

TEST_CASE("smooth term prox solves its subproblem") {
  const auto fx = make_quadratic(8, 3, 1);
  const LossSet l = quadratic_losses(fx.A, fx.b);
  const SimpleTerm r = smooth_term(l, fx.eigenvalues.maxCoeff(), 500);
  const Vector v = vec({1, -2, 0.5});
  const double eta = 0.3;
  const Vector y = r.prox(eta, v);
  const Vector g = r.gradient(y).value();
  CHECK((g + (y - v) / eta).norm() <= 1e-8);
}

TEST_CASE("fairness constraint count and vacuous margin") {
  auto data = make_two_group_bias(90, 2, 3);
  for (Index i = 0; i < data.rows(); ++i) data.groups[i] = static_cast<int>(i % 3);
  FairnessSpec spec;
  const auto set = build_fairness_constraints(data, linear_scores(data), spec);
  CHECK(set.m == 3);
  spec.eps_slack = 1.0;
  const auto loose = build_fairness_constraints(data, linear_scores(data), spec);
  for (int t = 0; t < 20; ++t) {
    const Vector x = 5 * fixtures::gaussian(data.cols(), 1, t);
    CHECK(constraints::values(loose, x).maxCoeff() <= 0);
  }
  spec.eps_slack = 0.05;
  spec.proxy_copies = 2;
  CHECK(build_fairness_constraints(data, linear_scores(data), spec).m == 6);
  spec.proxy_copies = 1;
  spec.groups = {0, 2};
  CHECK(build_fairness_constraints(data, linear_scores(data), spec).m == 2);
}

TEST_CASE("fairness constraint value on hand-built scores") {
  // Positive rows: group 0 has one with surrogate 0.6, group 1 has two with 0.9 each.
  TabularDataset data;
  const double temp = 5.0;
  data.features = Matrix(4, 1);
  data.features << logit(0.6) / temp, logit(0.9) / temp, logit(0.9) / temp, -3;
  data.labels = vec({1, 1, 1, -1});
  data.groups = {0, 1, 1, 0};
  FairnessSpec spec;
  spec.surrogate_temp = temp;
  const auto set = build_fairness_constraints(data, linear_scores(data), spec);
  const Vector vals = constraints::values(set, vec({1}));
  CHECK(vals(0) == doctest::Approx(0.8 - 0.6 - 0.05).epsilon(1e-12));
  CHECK(vals(1) == doctest::Approx(0.8 - 0.9 - 0.05).epsilon(1e-12));
  const Vector scores = linear_score_vector(data, vec({1}));
  CHECK(surrogate_tpr(data, scores, -1, temp) == doctest::Approx(0.8));
  CHECK(true_positive_rate(data, scores, 0) == 1.0);
  CHECK(accuracy(data, scores) == 1.0);
  CHECK(fairness_violation(data, scores, 0.05) == 0.0);

  JacobianCheckOptions o;
  CompositeProblem as_g;
  as_g.dim_x = 1;
  as_g.dim_g = 1;
  as_g.m = set.m;
  as_g.g = [&set](Index i, const Vector& x, Vector& v, Matrix* j) {
    Vector grad;
    v = Vector::Constant(1, set.eval(i, x, j ? &grad : nullptr));
    if (j) *j = grad.transpose();
  };
  as_g.h = zero_h(1);
  as_g.f = fixtures::identity_outer();
  CHECK(check_jacobians(as_g, o).passed(1e-5));
}

TEST_CASE("groups without positives are rejected") {
  TabularDataset data;
  data.features = Matrix::Ones(3, 1);
  data.labels = vec({1, -1, 1});
  data.groups = {0, 1, 0};
  CHECK_THROWS(build_fairness_constraints(data, linear_scores(data), {}));
}

TEST_CASE("surrogate rate approaches the hard rate as temperature grows") {
  // Group 0 positives are all accepted, group 1 positives all rejected.
  TabularDataset data;
  data.features = Matrix(7, 1);
  data.features << 0.3, 1.2, 2.0, -0.1, -0.8, -1.5, 0.4;
  data.labels = vec({1, 1, 1, 1, 1, 1, -1});
  data.groups = {0, 0, 0, 1, 1, 1, 0};
  const Vector scores = linear_score_vector(data, vec({1}));
  for (int g : {0, 1}) {
    const double hard = true_positive_rate(data, scores, g);
    double prev = std::abs(surrogate_tpr(data, scores, g, 0.5) - hard);
    for (double temp : {1.0, 2.0, 5.0, 20.0, 100.0}) {
      const double gap = std::abs(surrogate_tpr(data, scores, g, temp) - hard);
      CHECK(gap < prev);
      prev = gap;
    }
  }
}

TEST_CASE("csv ingestion") {
  const std::string ok = write_temp("dro_ok.csv",
                                    "age,score,label,grp\n"
                                    "30,1.5,yes,a\n"
                                    "40,2.5,no,b\n"
                                    "50,\"3.5\",yes,a\n");
  CsvSchema s;
  s.label = "label";
  s.group = "grp";
  s.positive_label = "yes";
  s.standardize = false;
  const auto data = ingest_csv(ok, s);
  CHECK(data.rows() == 3);
  CHECK(data.cols() == 2);
  CHECK(data.labels == vec({1, -1, 1}));
  CHECK(data.groups == std::vector<int>{0, 1, 0});
  CHECK(data.features(2, 1) == 3.5);

  s.standardize = true;
  const auto z = ingest_csv(ok, s);
  for (Eigen::Index j = 0; j < z.features.cols(); ++j) {
    const Vector col = z.features.col(j);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (col.size() - 1));
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(std::abs(sd - 1) <= 1e-12);
  }

  const std::string bad = write_temp("dro_bad.csv", "x,label\n1,1\nabc,-1\n");
  CsvSchema sb;
  sb.label = "label";
  try {
    ingest_csv(bad, sb);
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("x") != std::string::npos);
  }
  sb.features = {"nope"};
  CHECK_THROWS(ingest_csv(bad, sb));
  CHECK_THROWS(ingest_csv(write_temp("dro_ragged.csv", "x,label\n1\n"), CsvSchema{"label"}));
}

TEST_CASE("synthetic generators are deterministic") {
  const auto a = make_synthetic(SyntheticKind::StronglyConvexQuadratic, 16, 5, 7);
  const auto b = make_synthetic(SyntheticKind::StronglyConvexQuadratic, 16, 5, 7);
  CHECK(a.quadratic.A == b.quadratic.A);
  CHECK(a.quadratic.b == b.quadratic.b);
  const auto c = make_synthetic(SyntheticKind::TwoGroupBias, 100, 3, 1);
  const auto d = make_synthetic(SyntheticKind::TwoGroupBias, 100, 3, 1);
  CHECK(c.data.features == d.data.features);
  CHECK(c.data.groups == d.data.groups);
}

TEST_CASE("two-group fixture shows the planted gap") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto data = make_two_group_bias(400, 3, seed);
    const Vector scores = linear_score_vector(data, fit_logistic(data));
    const double gap = std::abs(true_positive_rate(data, scores, 0) - true_positive_rate(data, scores, 1));
    CHECK(gap >= 0.1);
  }
}

TEST_CASE("nonconvex toy has several local minima") {
  const auto data = make_nonconvex_toy(20, 2);
  const LossSet l = mlp2_losses(data, 4);
  const CompositeProblem p = erm_problem(l, SimpleTerm::squared_norm(1e-2));
  std::vector<double> finals;
  for (std::uint64_t s = 0; s < 12; ++s) {
    const Vector x0 = 1.5 * fixtures::gaussian(l.dim, 1, 100 + s);
    const auto rep = diagnostics::baseline_solve(p, diagnostics::BaselineKind::FullProxGradient, x0, 20000, 0.5, 0,
                                                 {.record_every = 0});
    CHECK(gradient_mapping(p, 0.5, rep.final_x).sq_norm <= 1e-12);
    finals.push_back(rep.final_psi);
  }
  std::sort(finals.begin(), finals.end());
  // Two value clusters far apart relative to the stationarity residual.
  CHECK(finals.back() - finals.front() >= 1e-3);
}
