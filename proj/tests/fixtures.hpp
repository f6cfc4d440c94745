#pragma once

#include <random>

#include "dro/core.hpp"
#include "dro/problems.hpp"
#include "dro/reductions.hpp"
#include "dro/rng.hpp"

namespace fixtures {

using dro::Index;
using dro::Matrix;
using dro::Vector;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  dro::Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix M(rows, cols);
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = n(rng);
  return M;
}

/// g_i(x) = a_i x in one dimension, h = 0, outer f given.
inline dro::CompositeProblem scalar_linear(const Vector& a, dro::OuterFunction f) {
  dro::CompositeProblem p;
  p.dim_x = 1;
  p.m = static_cast<Index>(a.size());
  p.g = [a](Index i, const Vector& x, Vector& v, Matrix* j) {
    v = Vector::Constant(1, a(static_cast<Eigen::Index>(i)) * x(0));
    if (j) *j = Matrix::Constant(1, 1, a(static_cast<Eigen::Index>(i)));
  };
  p.h = dro::zero_h(1);
  p.f = std::move(f);
  p.name = "scalar-linear";
  return p;
}

inline dro::OuterFunction identity_outer() {
  return [](const Vector& u, Vector* d) {
    if (d) *d = Vector::Ones(u.size());
    return u.sum();
  };
}

inline dro::OuterFunction half_square_outer() {
  return [](const Vector& u, Vector* d) {
    if (d) *d = u;
    return 0.5 * u.squaredNorm();
  };
}

/// h_i = 0.5 (a_i^T x - b_i)^2, g_i = C_i x (p = 2), f = 0.5 |u|^2.
struct QuadComposite {
  Matrix A;  // m x d
  Vector b;
  std::vector<Matrix> C;  // p x d each
  dro::CompositeProblem problem;
};

inline QuadComposite quad_composite(Index m, Index d, std::uint64_t seed, Index p = 2) {
  QuadComposite q;
  q.A = gaussian(m, d, seed);
  q.b = gaussian(m, 1, seed + 1);
  for (Index i = 0; i < m; ++i) q.C.push_back(0.5 * gaussian(p, d, seed + 10 + i));
  auto& pr = q.problem;
  pr.dim_x = d;
  pr.dim_g = p;
  pr.m = m;
  pr.g = [C = q.C](Index i, const Vector& x, Vector& v, Matrix* j) {
    v = C[i] * x;
    if (j) *j = C[i];
  };
  pr.h = [A = q.A, b = q.b](Index i, const Vector& x, Vector* g) {
    const auto r = static_cast<Eigen::Index>(i);
    const double res = A.row(r).dot(x) - b(r);
    if (g) *g = res * A.row(r).transpose();
    return 0.5 * res * res;
  };
  pr.f = half_square_outer();
  pr.name = "quad-composite";
  return q;
}

/// chi-square DRO over the quadratic losses of make_quadratic(m, d, seed).
struct Chi2Quadratic {
  dro::problems::QuadraticFixture fx;
  dro::LossSet losses;
  dro::CompositeProblem problem;
};

inline Chi2Quadratic chi2_quadratic(Index m, Index d, std::uint64_t seed, double gamma) {
  Chi2Quadratic c;
  c.fx = dro::problems::make_quadratic(m, d, seed);
  c.losses = dro::problems::quadratic_losses(c.fx.A, c.fx.b);
  c.problem = dro::reductions::build_chi2(c.losses, {gamma});
  return c;
}

}  // namespace fixtures
