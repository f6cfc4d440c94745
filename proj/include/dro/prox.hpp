#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "dro/linalg.hpp"

namespace dro {

/// Thrown when a simple term has no proximal operator available.
class NoClosedFormProx : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The "simple" convex term r of the composite objective, with its proximal operator
///   prox_r^eta(x) = argmin_y r(y) + |y - x|^2 / (2 eta).
///
/// Closed forms are provided for the built-in kinds. A custom term must bring its own prox.
class SimpleTerm {
 public:
  enum class Kind { Zero, Constant, SquaredNorm, L1, Box, Linear, Custom };

  using ValueFn = std::function<double(const Vector&)>;
  using ProxFn = std::function<Vector(double eta, const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;

  static SimpleTerm zero();
  static SimpleTerm constant(double c);
  /// (weight / 2) |x - center|^2; an empty center means the origin.
  static SimpleTerm squared_norm(double weight, Vector center = {});
  /// weight * |x|_1
  static SimpleTerm l1(double weight);
  /// Indicator of [lo, hi] (componentwise). Size-1 bounds broadcast. Infinite bounds are allowed.
  static SimpleTerm box(Vector lo, Vector hi);
  static SimpleTerm box(double lo, double hi);
  /// <c, x>
  static SimpleTerm linear(Vector c);
  /// User-supplied term. `prox` may be empty, in which case prox() throws NoClosedFormProx.
  static SimpleTerm custom(ValueFn value, ProxFn prox = {}, GradFn gradient = {},
                           std::string label = "custom");

  Kind kind() const { return kind_; }
  std::string label() const;

  /// r(x); +inf outside a box.
  double value(const Vector& x) const;
  /// prox_r^eta(x). eta must be >= 0; eta == 0 returns x.
  Vector prox(double eta, const Vector& x) const;
  /// Gradient where r is differentiable (everything except L1, Box and custom terms without one).
  std::optional<Vector> gradient(const Vector& x) const;

 private:
  Kind kind_ = Kind::Zero;
  double scalar_ = 0;  // constant value or weight
  Vector a_;           // center, lower bound or linear coefficient
  Vector b_;           // upper bound
  ValueFn value_fn_;
  ProxFn prox_fn_;
  GradFn grad_fn_;
  std::string label_;
};

/// Free-function form of SimpleTerm::prox.
Vector prox_step(const SimpleTerm& r, double eta, const Vector& x);

}  // namespace dro
