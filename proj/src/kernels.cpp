#include "dro/kernels.hpp"

#ifdef DRO_HAVE_OPENMP
#include <omp.h>
#endif

namespace dro::kernels {
namespace {

ComponentSums zero_sums(const CompositeProblem& p) {
  return {Vector::Zero(static_cast<Eigen::Index>(p.dim_g)),
          Matrix::Zero(static_cast<Eigen::Index>(p.dim_g), static_cast<Eigen::Index>(p.dim_x)),
          Vector::Zero(static_cast<Eigen::Index>(p.dim_x))};
}

// Per-index scratch written by the parallel kernels; column k belongs to the k-th index.
struct Buffers {
  Matrix g, jac, h_grad;
  Buffers(const CompositeProblem& p, Index n)
      : g(p.dim_g, n), jac(p.dim_g * p.dim_x, n), h_grad(p.dim_x, n) {}
};

void eval_into(const CompositeProblem& p, Index i, const Vector& x, Vector& g, Matrix& jac,
               Vector& hg) {
  p.g(i, x, g, &jac);
  p.h(i, x, &hg);
}

void reduce(const Buffers& buf, Index n, ComponentSums& acc) {
  const auto rows = acc.jac.rows();
  const auto cols = acc.jac.cols();
  for (Index k = 0; k < n; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    acc.g += buf.g.col(col);
    acc.jac += Eigen::Map<const Matrix>(buf.jac.col(col).data(), rows, cols);
    acc.h_grad += buf.h_grad.col(col);
  }
}

}  // namespace

namespace serial {

ComponentSums sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids) {
  ComponentSums acc = zero_sums(p);
  Vector g(p.dim_g), hg(p.dim_x);
  Matrix jac(p.dim_g, p.dim_x);
  for (Index k = 0; k < ids.size(); ++k) {
    eval_into(p, ids[k], x, g, jac, hg);
    acc.g += g;
    acc.jac += jac;
    acc.h_grad += hg;
  }
  return acc;
}

ComponentSums delta_sums(const CompositeProblem& p, const Vector& x_new, const Vector& x_old,
                         const IndexSet& ids) {
  ComponentSums acc = zero_sums(p);
  Vector g1(p.dim_g), g0(p.dim_g), h1(p.dim_x), h0(p.dim_x);
  Matrix j1(p.dim_g, p.dim_x), j0(p.dim_g, p.dim_x);
  Vector dg(p.dim_g), dh(p.dim_x);
  Matrix dj(p.dim_g, p.dim_x);
  for (Index k = 0; k < ids.size(); ++k) {
    const Index i = ids[k];
    eval_into(p, i, x_new, g1, j1, h1);
    eval_into(p, i, x_old, g0, j0, h0);
    dg = g1 - g0;
    dj = j1 - j0;
    dh = h1 - h0;
    acc.g += dg;
    acc.jac += dj;
    acc.h_grad += dh;
  }
  return acc;
}

ValueSums value_sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids) {
  ValueSums acc{Vector::Zero(p.dim_g), 0.0};
  Vector g(p.dim_g);
  for (Index k = 0; k < ids.size(); ++k) {
    p.g(ids[k], x, g, nullptr);
    acc.g += g;
    acc.h += p.h(ids[k], x, nullptr);
  }
  return acc;
}

}  // namespace serial

namespace parallel {

ComponentSums sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids) {
  const Index n = ids.size();
  Buffers buf(p, n);
#pragma omp parallel
  {
    Vector g(p.dim_g), hg(p.dim_x);
    Matrix jac(p.dim_g, p.dim_x);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
      eval_into(p, ids[static_cast<Index>(k)], x, g, jac, hg);
      buf.g.col(k) = g;
      buf.jac.col(k) = Eigen::Map<const Vector>(jac.data(), jac.size());
      buf.h_grad.col(k) = hg;
    }
  }
  ComponentSums acc = zero_sums(p);
  reduce(buf, n, acc);
  return acc;
}

ComponentSums delta_sums(const CompositeProblem& p, const Vector& x_new, const Vector& x_old,
                         const IndexSet& ids) {
  const Index n = ids.size();
  Buffers buf(p, n);
#pragma omp parallel
  {
    Vector g1(p.dim_g), g0(p.dim_g), h1(p.dim_x), h0(p.dim_x);
    Matrix j1(p.dim_g, p.dim_x), j0(p.dim_g, p.dim_x), dj(p.dim_g, p.dim_x);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
      const Index i = ids[static_cast<Index>(k)];
      eval_into(p, i, x_new, g1, j1, h1);
      eval_into(p, i, x_old, g0, j0, h0);
      buf.g.col(k) = g1 - g0;
      dj = j1 - j0;
      buf.jac.col(k) = Eigen::Map<const Vector>(dj.data(), dj.size());
      buf.h_grad.col(k) = h1 - h0;
    }
  }
  ComponentSums acc = zero_sums(p);
  reduce(buf, n, acc);
  return acc;
}

ValueSums value_sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids) {
  const Index n = ids.size();
  Matrix gbuf(p.dim_g, n);
  std::vector<double> hbuf(n);
#pragma omp parallel
  {
    Vector g(p.dim_g);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
      const Index i = ids[static_cast<Index>(k)];
      p.g(i, x, g, nullptr);
      gbuf.col(k) = g;
      hbuf[static_cast<Index>(k)] = p.h(i, x, nullptr);
    }
  }
  ValueSums acc{Vector::Zero(p.dim_g), 0.0};
  for (Index k = 0; k < n; ++k) {
    acc.g += gbuf.col(static_cast<Eigen::Index>(k));
    acc.h += hbuf[k];
  }
  return acc;
}

}  // namespace parallel

bool parallel_available() {
#ifdef DRO_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef DRO_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
bool use_parallel(const ExecPolicy& exec, Index n) {
  return exec.parallel && parallel_available() && n >= exec.min_parallel;
}
}  // namespace

ComponentSums sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids,
                   const ExecPolicy& exec) {
  return use_parallel(exec, ids.size()) ? parallel::sums(p, x, ids) : serial::sums(p, x, ids);
}

ComponentSums delta_sums(const CompositeProblem& p, const Vector& x_new, const Vector& x_old,
                         const IndexSet& ids, const ExecPolicy& exec) {
  return use_parallel(exec, ids.size()) ? parallel::delta_sums(p, x_new, x_old, ids)
                                        : serial::delta_sums(p, x_new, x_old, ids);
}

ValueSums value_sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids,
                     const ExecPolicy& exec) {
  return use_parallel(exec, ids.size()) ? parallel::value_sums(p, x, ids)
                                        : serial::value_sums(p, x, ids);
}

}  // namespace dro::kernels
