#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "tilt/so3.hpp"

namespace tilt {

using Rng = std::mt19937_64;

inline Vector3 gaussian3(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return {x, y, z};
}

/// Per-axis signal offset + amplitude * sin(2 pi frequency t + phase).
struct TrigSignal3 {
  Vector3 amplitude = Vector3::Zero();
  Vector3 frequency = Vector3::Ones();  // Hz
  Vector3 phase = Vector3::Zero();      // rad
  Vector3 offset = Vector3::Zero();

  Vector3 value(double t) const {
    Vector3 out;
    for (int i = 0; i < 3; ++i) {
      out[i] = offset[i] + amplitude[i] * std::sin(2.0 * M_PI * frequency[i] * t + phase[i]);
    }
    return out;
  }

  /// Exact integral of value() over [t0, t1].
  Vector3 integral(double t0, double t1) const {
    Vector3 out;
    for (int i = 0; i < 3; ++i) {
      const double w = 2.0 * M_PI * frequency[i];
      out[i] = offset[i] * (t1 - t0) +
               amplitude[i] / w * (std::cos(w * t0 + phase[i]) - std::cos(w * t1 + phase[i]));
    }
    return out;
  }

  bool operator==(const TrigSignal3&) const = default;
};

struct TrajectoryConfig {
  /// Pivot angular acceleration (world frame, before the yaw offset), rad/s^2.
  TrigSignal3 pivot_accel{Vector3(0.5, 0.5, 0.5), Vector3(0.7, 1.1, 1.3),
                          Vector3::Constant(-M_PI / 2), Vector3::Zero()};
  /// Pivot angular velocity at t = 0, rad/s.
  Vector3 pivot_omega0 = Vector3::Zero();
  /// Constant rotation about e_z applied to the whole pivot trajectory.
  double yaw = 0.0;
  /// IMU angular velocity in the control frame, rad/s.
  TrigSignal3 mount_omega{Vector3(0.5, 0.5, 0.5), Vector3(1.3, 0.7, 1.1), Vector3::Zero(), Vector3::Zero()};
  Vector3 mount_p0{0.0, 0.0, 1.3};
  Vector3 mount_p_ref{0.0, 0.0, 1.3};
  double kp = 2.0;           // 1/s
  double noise_std = 0.05;   // stationary std of the filtered velocity noise, m/s
  double noise_tau = 0.2;    // s
  double g0 = 9.81;

  void validate() const {
    for (const auto* s : {&pivot_accel, &mount_omega}) {
      if (!(s->frequency.array() > 0.0).all()) throw std::invalid_argument("trajectory frequencies must be > 0");
    }
    if (!(kp > 0.0)) throw std::invalid_argument("trajectory kp must be > 0");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("trajectory noise_std must be >= 0");
    if (!(noise_tau > 0.0)) throw std::invalid_argument("trajectory noise_tau must be > 0");
    if (!(g0 > 0.0)) throw std::invalid_argument("trajectory g0 must be > 0");
  }

  bool operator==(const TrajectoryConfig&) const = default;
};

struct PivotState {
  RotationMatrix R;                // R_c
  Vector3 omega = Vector3::Zero(); // world frame
  Vector3 alpha = Vector3::Zero(); // world frame, derivative of omega
};

struct MountKinematics {
  Vector3 p = Vector3::Zero();  // ^c p_s
  Vector3 v = Vector3::Zero();  // ^c p_s'
  Vector3 a = Vector3::Zero();  // ^c p_s''
  RotationMatrix R;             // ^c R_s
  Vector3 omega = Vector3::Zero();  // ^c omega_s
};

struct ImuMeasurement {
  Vector3 y_a = Vector3::Zero();
  Vector3 y_g = Vector3::Zero();
};

struct NoiseSpec {
  double sigma_g = 0.0;
  double sigma_a = 0.0;
  std::uint64_t seed = 1;

  bool operator==(const NoiseSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Pivot

inline PivotState initial_pivot(const TrajectoryConfig& cfg, const RotationMatrix& rc0) {
  const RotationMatrix yaw = rotation_about_z(cfg.yaw);
  return {yaw * rc0, yaw * cfg.pivot_omega0, yaw * cfg.pivot_accel.value(0.0)};
}

/// Pivot state at t + ds given the state at t. The angular velocity is the
/// exact integral of the acceleration signal; R_c follows R' = S(omega) R
/// through one fourth-order Magnus step.
inline PivotState pivot_at(const PivotState& s, const TrajectoryConfig& cfg, double t, double ds) {
  if (ds == 0.0) return s;
  const RotationMatrix yaw = rotation_about_z(cfg.yaw);
  auto omega_at = [&](double tau) -> Vector3 { return s.omega + yaw * cfg.pivot_accel.integral(t, tau); };
  const Vector3 theta =
      magnus4_rotation_vector(omega_at(t + kGaussNode1 * ds), omega_at(t + kGaussNode2 * ds), ds);
  return {rotation_exp(theta) * s.R, omega_at(t + ds), yaw * cfg.pivot_accel.value(t + ds)};
}

inline PivotState step_pivot(const PivotState& s, const TrajectoryConfig& cfg, double t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_pivot: dt must be positive");
  return pivot_at(s, cfg, t, dt);
}

// ---------------------------------------------------------------------------
// Mount
//
// ^c p_s' = n + kp (p_ref - p), with n a first-order low-pass of a drive u that
// is held constant over each step. Within a step everything is closed form, so
// the drive of the current step can be recovered from (p, v, a).

namespace detail {

// (exp(-a s) - exp(-b s)) / (b - a), continuous at a == b.
inline double exp_difference(double a, double b, double s) {
  const double d = b - a;
  if (std::abs(d * s) < 1e-12) return s * std::exp(-a * s);
  return -std::exp(-a * s) * std::expm1(-d * s) / d;
}

inline Vector3 filter_state(const MountKinematics& m, const TrajectoryConfig& cfg) {
  return m.v - cfg.kp * (cfg.mount_p_ref - m.p);
}

inline Vector3 drive(const MountKinematics& m, const TrajectoryConfig& cfg) {
  return cfg.noise_tau * (m.a + cfg.kp * m.v) + filter_state(m, cfg);
}

// Standard deviation of the held drive that gives the filter output a
// stationary standard deviation of cfg.noise_std.
inline double drive_scale(const TrajectoryConfig& cfg, double dt) {
  const double e = std::exp(-dt / cfg.noise_tau);
  return cfg.noise_std * std::sqrt((1.0 + e) / (1.0 - e));
}

inline Vector3 acceleration(const Vector3& n, const Vector3& u, const Vector3& v, const TrajectoryConfig& cfg) {
  return (u - n) / cfg.noise_tau - cfg.kp * v;
}

}  // namespace detail

/// Mount kinematics at t + ds using the drive of the step that starts at t.
/// At ds equal to the step length this is the left limit at the next sample.
inline MountKinematics mount_at(const MountKinematics& m, const TrajectoryConfig& cfg, double t, double ds) {
  if (ds == 0.0) return m;
  const double k = cfg.kp;
  const double inv_tau = 1.0 / cfg.noise_tau;
  const Vector3 n0 = detail::filter_state(m, cfg);
  const Vector3 u = detail::drive(m, cfg);
  const Vector3 d0 = m.p - cfg.mount_p_ref;

  const double ef = std::exp(-ds * inv_tau);
  const double ek = std::exp(-k * ds);
  const Vector3 n = u + (n0 - u) * ef;
  const Vector3 d = d0 * ek + u * (-std::expm1(-k * ds) / k) + (n0 - u) * detail::exp_difference(inv_tau, k, ds);

  MountKinematics out;
  out.p = cfg.mount_p_ref + d;
  out.v = n - k * d;
  out.a = detail::acceleration(n, u, out.v, cfg);
  const Vector3 theta = magnus4_rotation_vector(cfg.mount_omega.value(t + kGaussNode1 * ds),
                                                cfg.mount_omega.value(t + kGaussNode2 * ds), ds);
  out.R = rotation_exp(theta) * m.R;
  out.omega = cfg.mount_omega.value(t + ds);
  return out;
}

/// Starts a new step at `m`: draws its velocity-noise drive from rng.
inline MountKinematics with_new_drive(MountKinematics m, const TrajectoryConfig& cfg, double dt, Rng& rng) {
  const Vector3 u = detail::drive_scale(cfg, dt) * gaussian3(rng);
  m.a = detail::acceleration(detail::filter_state(m, cfg), u, m.v, cfg);
  return m;
}

inline MountKinematics initial_mount(const TrajectoryConfig& cfg, double dt, Rng& rng) {
  MountKinematics m;
  m.p = cfg.mount_p0;
  m.v = cfg.kp * (cfg.mount_p_ref - cfg.mount_p0);  // filter starts at rest
  m.R = RotationMatrix::identity();
  m.omega = cfg.mount_omega.value(0.0);
  return with_new_drive(m, cfg, dt, rng);
}

/// Advances the mount by dt and draws the drive of the following step.
inline MountKinematics step_mount(const MountKinematics& m, const TrajectoryConfig& cfg, double t, double dt,
                                  Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_mount: dt must be positive");
  return with_new_drive(mount_at(m, cfg, t, dt), cfg, dt, rng);
}

// ---------------------------------------------------------------------------
// Sensors

/// Gyrometer: ^cR_s^T ^c omega_s + ^cR_s^T R_c^T omega_c.
inline Vector3 synth_gyro(const PivotState& pivot, const MountKinematics& mount) {
  const Matrix3 crs_t = mount.R.matrix().transpose();
  return crs_t * mount.omega + crs_t * (pivot.R.matrix().transpose() * pivot.omega);
}

/// Accelerometer, written in control-frame quantities.
inline Vector3 synth_accel(const PivotState& pivot, const MountKinematics& mount, double g0) {
  const Matrix3 rc_t = pivot.R.matrix().transpose();
  const Vector3 y1 = rc_t * pivot.omega;
  const Vector3 y1_rate = rc_t * pivot.alpha;
  const Vector3 specific = (skew(y1_rate) + skew_squared(y1)) * mount.p + 2.0 * y1.cross(mount.v) + mount.a +
                           g0 * (rc_t * Vector3::UnitZ());
  return mount.R.matrix().transpose() * specific;
}

inline ImuMeasurement synthesize(const PivotState& pivot, const MountKinematics& mount, double g0) {
  return {synth_accel(pivot, mount, g0), synth_gyro(pivot, mount)};
}

/// Adds per-axis white Gaussian noise. Gyro components are drawn before accelerometer ones.
inline ImuMeasurement add_noise(const ImuMeasurement& m, const NoiseSpec& spec, Rng& rng) {
  ImuMeasurement out = m;
  const Vector3 ng = gaussian3(rng);
  const Vector3 na = gaussian3(rng);
  out.y_g += spec.sigma_g * ng;
  out.y_a += spec.sigma_a * na;
  return out;
}

/// Pivot angular velocity in the control frame, recovered from the gyrometer.
inline Vector3 extract_y1(const Vector3& y_g, const MountKinematics& mount) {
  const Matrix3& crs = mount.R.matrix();
  return crs * (y_g - crs.transpose() * mount.omega);
}

/// S(^c p_s) y1 - ^c p_s', the negated IMU velocity in the control frame.
inline Vector3 compute_x1(const MountKinematics& mount, const Vector3& y1) {
  return mount.p.cross(y1) - mount.v;
}

}  // namespace tilt
