#pragma once

#include <array>
#include <utility>

#include "tilt/so3.hpp"

namespace tilt {

/// Rates of a system on R^3 x S^2: the vector part moves with `linear`, the
/// sphere point d moves as d' = angular x d.
struct ProductRates {
  Vector3 linear = Vector3::Zero();
  Vector3 angular = Vector3::Zero();
};

/// Result of one step: add `linear` to the vector part, apply exp(rotation)
/// to the sphere point.
struct ProductIncrement {
  Vector3 linear = Vector3::Zero();
  Vector3 rotation = Vector3::Zero();
};

/// Classical fourth-order Runge-Kutta-Munthe-Kaas step on R^3 x S^2.
///
/// `field(c, x, theta)` evaluates the rates at time fraction c in {0, 1/2, 1}
/// of the step, with vector part x and sphere point exp(theta) d0. Keeping the
/// sphere point implicit lets callers store it in whatever coordinates they
/// need (the point itself, or its offset from a fixed anchor).
template <class Field>
ProductIncrement rkmk4_increment(const Vector3& x0, double h, Field&& field) {
  static constexpr std::array<double, 4> kNode{0.0, 0.5, 0.5, 1.0};
  static constexpr std::array<double, 4> kWeight{1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};

  ProductIncrement inc;
  Vector3 k_prev = Vector3::Zero();
  Vector3 omega_prev = Vector3::Zero();
  for (std::size_t i = 0; i < 4; ++i) {
    const Vector3 x = x0 + kNode[i] * h * k_prev;
    const Vector3 theta = kNode[i] * h * omega_prev;
    const ProductRates r = field(kNode[i], x, theta);
    k_prev = r.linear;
    omega_prev = dexp_inv(theta, r.angular);
    inc.linear += kWeight[i] * h * k_prev;
    inc.rotation += kWeight[i] * h * omega_prev;
  }
  return inc;
}

}  // namespace tilt
