#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "tilt/integrators.hpp"
#include "tilt/plant.hpp"
#include "tilt/so3.hpp"

namespace tilt {

/// Observer gains. Only make_gains builds them, so beta * g0 < alpha^2 holds
/// for every instance.
class ObserverGains {
 public:
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double g0() const { return g0_; }
  /// G0 = beta g0 / alpha^2, in (0, 1).
  double ratio() const { return beta_ * g0_ / (alpha_ * alpha_); }

  friend ObserverGains make_gains(double alpha, double beta, double g0);

 private:
  ObserverGains(double alpha, double beta, double g0) : alpha_(alpha), beta_(beta), g0_(g0) {}
  double alpha_;
  double beta_;
  double g0_;
};

inline ObserverGains make_gains(double alpha, double beta, double g0) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(g0 > 0.0)) {
    throw std::invalid_argument("observer gains alpha, beta and g0 must be positive");
  }
  if (!(beta * g0 < alpha * alpha)) {
    throw std::invalid_argument("observer gains violate beta * g0 < alpha^2 (beta*g0 = " +
                                std::to_string(beta * g0) + ", alpha^2 = " + std::to_string(alpha * alpha) + ")");
  }
  return ObserverGains(alpha, beta, g0);
}

/// One sample of everything the observer consumes.
struct ObserverInput {
  Vector3 y1 = Vector3::Zero();   // pivot angular velocity, control frame
  Vector3 x1 = Vector3::Zero();   // negated IMU velocity, control frame
  Vector3 y_a = Vector3::Zero();  // accelerometer
  RotationMatrix cRs;             // IMU orientation in the control frame
};

inline ObserverInput make_observer_input(const ImuMeasurement& m, const MountKinematics& mount) {
  const Vector3 y1 = extract_y1(m.y_g, mount);
  return {y1, compute_x1(mount, y1), m.y_a, mount.R};
}

/// Inputs at the start, middle and end of a step.
struct StepInputs {
  ObserverInput begin;
  ObserverInput mid;
  ObserverInput end;

  /// Zero-order hold of a single sample.
  static StepInputs held(const ObserverInput& in) { return {in, in, in}; }

  const ObserverInput& at(double fraction) const {
    if (fraction <= 0.0) return begin;
    if (fraction >= 1.0) return end;
    return mid;
  }
};

struct ObserverState {
  Vector3 x1_hat = Vector3::Zero();
  UnitVector3 x2_hat;
};

struct ObserverRates {
  Vector3 x1_hat_rate;
  /// Effective angular velocity: x2_hat' = -omega_eff x x2_hat.
  Vector3 omega_eff;
};

namespace detail {

inline ObserverRates observer_rates(const Vector3& x1_hat, const Vector3& x2_hat, const ObserverGains& gains,
                                    const ObserverInput& in) {
  const Vector3 x1_err = in.x1 - x1_hat;
  return {-in.y1.cross(x1_hat) + gains.g0() * x2_hat - in.cRs * in.y_a + gains.alpha() * x1_err,
          in.y1 - gains.beta() * x2_hat.cross(x1_err)};
}

}  // namespace detail

inline ObserverRates observer_derivative(const ObserverState& s, const ObserverGains& gains,
                                         const ObserverInput& in) {
  return detail::observer_rates(s.x1_hat, s.x2_hat.vec(), gains, in);
}

/// Advances the observer over one step with a fourth-order Munthe-Kaas
/// scheme. x2_hat only ever moves by rotations, so it stays on the sphere.
inline ObserverState observer_step(const ObserverState& s, const ObserverGains& gains, const StepInputs& in,
                                   double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("observer_step: dt must be positive");
  const ProductIncrement inc = rkmk4_increment(s.x1_hat, dt, [&](double c, const Vector3& x1, const Vector3& theta) {
    const ObserverRates r = detail::observer_rates(x1, rotate_by_exp(theta, s.x2_hat.vec()), gains, in.at(c));
    return ProductRates{r.x1_hat_rate, -r.omega_eff};
  });
  return {s.x1_hat + inc.linear, rotate_by_exp(inc.rotation, s.x2_hat)};
}

/// Same step with the inputs held at a single sample.
inline ObserverState observer_step(const ObserverState& s, const ObserverGains& gains, const ObserverInput& in,
                                   double dt) {
  return observer_step(s, gains, StepInputs::held(in), dt);
}

/// Estimated gravity direction in the control frame, R_c^T e_z.
inline UnitVector3 tilt_estimate(const ObserverState& s) { return s.x2_hat; }

/// Anything the simulation harness can drive alongside the ground truth.
class TiltEstimator {
 public:
  virtual ~TiltEstimator() = default;
  virtual void update(const StepInputs& inputs, double dt) = 0;
  virtual UnitVector3 tilt() const = 0;
  /// Estimate of x1, when the estimator has one.
  virtual std::optional<Vector3> velocity_estimate() const { return std::nullopt; }
};

class TiltObserver final : public TiltEstimator {
 public:
  TiltObserver(const ObserverGains& gains, const ObserverState& initial) : gains_(gains), state_(initial) {}

  void update(const StepInputs& inputs, double dt) override { state_ = observer_step(state_, gains_, inputs, dt); }
  UnitVector3 tilt() const override { return tilt_estimate(state_); }
  std::optional<Vector3> velocity_estimate() const override { return state_.x1_hat; }

  const ObserverState& state() const { return state_; }
  const ObserverGains& gains() const { return gains_; }

 private:
  ObserverGains gains_;
  ObserverState state_;
};

}  // namespace tilt
