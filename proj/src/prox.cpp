#include "dro/prox.hpp"

#include <cmath>
#include <limits>

namespace dro {
namespace {

double bound_at(const Vector& v, Eigen::Index i) { return v.size() == 1 ? v(0) : v(i); }

void check_box_dims(const Vector& lo, const Vector& hi, const Vector& x) {
  auto ok = [&](const Vector& v) { return v.size() == 1 || v.size() == x.size(); };
  if (!ok(lo) || !ok(hi)) throw std::invalid_argument("box bounds do not match the point dimension");
}

}  // namespace

SimpleTerm SimpleTerm::zero() { return SimpleTerm{}; }

SimpleTerm SimpleTerm::constant(double c) {
  SimpleTerm t;
  t.kind_ = Kind::Constant;
  t.scalar_ = c;
  return t;
}

SimpleTerm SimpleTerm::squared_norm(double weight, Vector center) {
  if (!(weight >= 0)) throw std::invalid_argument("squared_norm weight must be nonnegative");
  SimpleTerm t;
  t.kind_ = Kind::SquaredNorm;
  t.scalar_ = weight;
  t.a_ = std::move(center);
  return t;
}

SimpleTerm SimpleTerm::l1(double weight) {
  if (!(weight >= 0)) throw std::invalid_argument("l1 weight must be nonnegative");
  SimpleTerm t;
  t.kind_ = Kind::L1;
  t.scalar_ = weight;
  return t;
}

SimpleTerm SimpleTerm::box(Vector lo, Vector hi) {
  if (lo.size() != hi.size() || lo.size() == 0) throw std::invalid_argument("box bounds size mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo(i) > hi(i)) throw std::invalid_argument("box lower bound exceeds upper bound");
  }
  SimpleTerm t;
  t.kind_ = Kind::Box;
  t.a_ = std::move(lo);
  t.b_ = std::move(hi);
  return t;
}

SimpleTerm SimpleTerm::box(double lo, double hi) {
  return box(Vector::Constant(1, lo), Vector::Constant(1, hi));
}

SimpleTerm SimpleTerm::linear(Vector c) {
  SimpleTerm t;
  t.kind_ = Kind::Linear;
  t.a_ = std::move(c);
  return t;
}

SimpleTerm SimpleTerm::custom(ValueFn value, ProxFn prox, GradFn gradient, std::string label) {
  if (!value) throw std::invalid_argument("custom simple term needs a value oracle");
  SimpleTerm t;
  t.kind_ = Kind::Custom;
  t.value_fn_ = std::move(value);
  t.prox_fn_ = std::move(prox);
  t.grad_fn_ = std::move(gradient);
  t.label_ = std::move(label);
  return t;
}

std::string SimpleTerm::label() const {
  switch (kind_) {
    case Kind::Zero: return "zero";
    case Kind::Constant: return "constant";
    case Kind::SquaredNorm: return "squared_norm";
    case Kind::L1: return "l1";
    case Kind::Box: return "box";
    case Kind::Linear: return "linear";
    case Kind::Custom: return label_;
  }
  return "unknown";
}

double SimpleTerm::value(const Vector& x) const {
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Constant: return scalar_;
    case Kind::SquaredNorm:
      return 0.5 * scalar_ * (a_.size() == 0 ? x.squaredNorm() : (x - a_).squaredNorm());
    case Kind::L1: return scalar_ * x.lpNorm<1>();
    case Kind::Box: {
      check_box_dims(a_, b_, x);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) < bound_at(a_, i) || x(i) > bound_at(b_, i)) {
          return std::numeric_limits<double>::infinity();
        }
      }
      return 0.0;
    }
    case Kind::Linear: return a_.dot(x);
    case Kind::Custom: return value_fn_(x);
  }
  return 0.0;
}

Vector SimpleTerm::prox(double eta, const Vector& x) const {
  if (eta < 0) throw std::invalid_argument("prox step size must be nonnegative");
  if (kind_ == Kind::Custom && !prox_fn_) {
    throw NoClosedFormProx("no closed-form prox for simple term '" + label_ + "'");
  }
  if (eta == 0) return x;
  switch (kind_) {
    case Kind::Zero:
    case Kind::Constant: return x;
    case Kind::SquaredNorm: {
      const double s = eta * scalar_;
      if (a_.size() == 0) return x / (1.0 + s);
      return (x + s * a_) / (1.0 + s);
    }
    case Kind::L1: {
      const double thr = eta * scalar_;
      Vector out(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = std::abs(x(i)) - thr;
        out(i) = v > 0 ? std::copysign(v, x(i)) : 0.0;
      }
      return out;
    }
    case Kind::Box: {
      check_box_dims(a_, b_, x);
      Vector out(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        out(i) = std::min(std::max(x(i), bound_at(a_, i)), bound_at(b_, i));
      }
      return out;
    }
    case Kind::Linear: return x - eta * a_;
    case Kind::Custom: return prox_fn_(eta, x);
  }
  return x;
}

std::optional<Vector> SimpleTerm::gradient(const Vector& x) const {
  switch (kind_) {
    case Kind::Zero:
    case Kind::Constant: return Vector::Zero(x.size());
    case Kind::SquaredNorm: return Vector(scalar_ * (a_.size() == 0 ? x : Vector(x - a_)));
    case Kind::Linear: return a_;
    case Kind::Custom:
      if (grad_fn_) return grad_fn_(x);
      return std::nullopt;
    case Kind::L1:
    case Kind::Box: return std::nullopt;
  }
  return std::nullopt;
}

Vector prox_step(const SimpleTerm& r, double eta, const Vector& x) { return r.prox(eta, x); }

}  // namespace dro
