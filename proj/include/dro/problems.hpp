#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dro/constraints.hpp"
#include "dro/core.hpp"
#include "dro/dataset.hpp"

namespace dro::problems {

enum class LossKind { Logistic, Quadratic, Mlp2 };

/// f_i(x) = log(1 + exp(-y_i <x, z_i>)).
LossSet logistic_losses(const TabularDataset& data);

/// f_i(x) = 0.5 (<a_i, x> - b_i)^2.
LossSet quadratic_losses(const Matrix& A, const Vector& b);

/// Two-layer tanh network with logistic loss on the output margin. Parameters are packed as
/// [W1 (hidden x d, column-major), b1 (hidden), w2 (hidden), b2].
LossSet mlp2_losses(const TabularDataset& data, Index hidden);
Index mlp2_dim(Index d, Index hidden);
/// Network output for row features z.
double mlp2_output(const Vector& params, const Vector& z, Index hidden);

/// Logistic and mlp2 use the labels; quadratic regresses on the labels as targets.
LossSet make_losses(LossKind kind, const TabularDataset& data, Index hidden = 4);

/// mean_i f_i(x) + r as a composite problem (h_i = f_i, g = 0, f = 0).
CompositeProblem erm_problem(const LossSet& losses, SimpleTerm r = SimpleTerm::zero());

/// (1/m) sum f_i(x) as a simple term with gradient and an inexact prox solved by `iters` gradient
/// steps on r(y) + |y - v|^2 / (2 eta) (strongly convex; L is a gradient Lipschitz bound of r).
SimpleTerm smooth_term(const LossSet& losses, double L, Index iters = 50, double tol = 1e-12);

/// Per-row classifier score s_i(x) with gradient.
struct ScoreModel {
  Index m = 0;
  Index dim = 0;
  std::function<double(Index i, const Vector& x, Vector* grad)> score;
};

/// s_i(x) = <x, z_i>.
ScoreModel linear_scores(const TabularDataset& data);

struct FairnessSpec {
  double eps_slack = 0.05;
  double surrogate_temp = 5.0;
  std::vector<int> groups;  // empty: every group present in the data
  Index proxy_copies = 1;   // each group constraint is repeated this many times
};

/// One constraint per group (times proxy_copies): tpr^(ALL) - tpr^(g) - eps <= 0, where tpr^ is the
/// mean of sigmoid(temp * s_i(x)) over positive rows.
constraints::ConstraintSet build_fairness_constraints(const TabularDataset& data, const ScoreModel& model,
                                                      const FairnessSpec& spec);

/// Hard-indicator true positive rate (score > 0) over positive rows of `group` (-1 for all rows).
double true_positive_rate(const TabularDataset& data, const Vector& scores, int group);
/// Surrogate rate with sigmoid(temp * score).
double surrogate_tpr(const TabularDataset& data, const Vector& scores, int group, double temp);
/// max_g (tpr(ALL) - tpr(g) - eps) with hard indicators, floored at 0.
double fairness_violation(const TabularDataset& data, const Vector& scores, double eps);
/// Fraction of rows with sign(score) == label (score 0 counts as -1).
double accuracy(const TabularDataset& data, const Vector& scores);
Vector linear_score_vector(const TabularDataset& data, const Vector& x);

struct CsvSchema {
  std::string label;
  std::string group;                  // optional
  std::vector<std::string> features;  // empty: every other column
  std::string positive_label;         // empty: numeric labels, > 0 is positive
  bool standardize = true;
};

/// Reads a comma-separated file with a header row.
TabularDataset ingest_csv(const std::string& path, const CsvSchema& schema);

enum class SyntheticKind { TwoGroupBias, StronglyConvexQuadratic, NonconvexToy };

struct QuadraticFixture {
  Matrix A;  // m x d
  Vector b;
  Vector x_star;  // least-squares minimizer
  Vector eigenvalues;  // spectrum of A^T A / m
};

/// A = sqrt(m) Q diag(sqrt(lambda)) V^T with lambda evenly spaced in [1, kappa].
QuadraticFixture make_quadratic(Index m, Index d, std::uint64_t seed, double kappa = 10.0);

/// Two groups (70/30) with a lower base rate in group 1. Features: signal columns then the two
/// group indicators. Resamples until the unconstrained logistic fit shows a tpr gap >= min_gap.
TabularDataset make_two_group_bias(Index m, Index d, std::uint64_t seed, double min_gap = 0.1);

/// XOR-like points in the plane with a few label flips.
TabularDataset make_nonconvex_toy(Index m, std::uint64_t seed);

struct SyntheticData {
  TabularDataset data;
  QuadraticFixture quadratic;  // StronglyConvexQuadratic only
};

SyntheticData make_synthetic(SyntheticKind kind, Index m, Index d, std::uint64_t seed);

/// Full-batch Newton fit of mean logistic loss + (ridge / 2)|x|^2.
Vector fit_logistic(const TabularDataset& data, double ridge = 1e-6, Index iters = 100);

}  // namespace dro::problems
