#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tilt/integrators.hpp"
#include "tilt/observer.hpp"
#include "tilt/plant.hpp"
#include "tilt/so3.hpp"

namespace tilt {

using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Error coordinates xi = (z1, z2) with z2 on the sphere of radius one
/// centred at e_z.
struct ErrorPoint {
  Vector3 z1 = Vector3::Zero();
  Vector3 z2 = Vector3::Zero();

  static ErrorPoint checked(const Vector3& z1, const Vector3& z2, double tol = 1e-9) {
    if (!z1.allFinite() || !z2.allFinite()) throw std::invalid_argument("error point has non-finite entries");
    if (std::abs((Vector3::UnitZ() - z2).norm() - 1.0) > tol) {
      throw std::invalid_argument("error point z2 is off the sphere |e_z - z2| = 1");
    }
    return {z1, z2};
  }

  double manifold_error() const { return std::abs((Vector3::UnitZ() - z2).norm() - 1.0); }
  double norm() const { return std::sqrt(z1.squaredNorm() + z2.squaredNorm()); }
  double distance(const ErrorPoint& o) const {
    return std::sqrt((z1 - o.z1).squaredNorm() + (z2 - o.z2).squaredNorm());
  }
};

struct ErrorRates {
  Vector3 z1_rate;
  Vector3 z2_rate;
};

/// Right-hand side of the autonomous error dynamics.
inline ErrorRates error_field(const ErrorPoint& xi, const ObserverGains& g) {
  const Vector3 w = Vector3::UnitZ() - xi.z2;
  return {-g.alpha() * xi.z1 + g.g0() * xi.z2, g.beta() * w.cross(w.cross(xi.z1))};
}

/// V = |alpha z1 - g0 z2|^2 / 2 + g0^2 |z2|^2 / 2.
inline double lyapunov(const ErrorPoint& xi, const ObserverGains& g) {
  const Vector3 s = g.alpha() * xi.z1 - g.g0() * xi.z2;
  return 0.5 * s.squaredNorm() + 0.5 * g.g0() * g.g0() * xi.z2.squaredNorm();
}

/// Membership in {V < 2 g0^2}, the sub-level set guaranteed to converge to the origin.
inline bool in_guaranteed_basin(const ErrorPoint& xi, const ObserverGains& g) {
  return lyapunov(xi, g) < 2.0 * g.g0() * g.g0();
}

/// Closed-form time derivative of V along error_field (valid on the manifold).
inline double lyapunov_rate(const ErrorPoint& xi, const ObserverGains& g) {
  const double a = g.alpha();
  const double g0 = g.g0();
  const double ratio = g.ratio();
  const Vector3 s = a * xi.z1 - g0 * xi.z2;
  const Vector3 w = Vector3::UnitZ() - xi.z2;
  const double tilt_term = xi.z2.dot(skew_squared(Vector3::UnitZ()) * xi.z2);
  const double sw = s.dot(w);
  return -a * (1.0 - ratio) * s.squaredNorm() + a * g0 * g0 * ratio * tilt_term - a * ratio * sw * sw;
}

/// The origin and ((2 g0 / alpha) e_z, 2 e_z).
inline std::pair<ErrorPoint, ErrorPoint> equilibria(const ObserverGains& g) {
  return {ErrorPoint{}, ErrorPoint{(2.0 * g.g0() / g.alpha()) * Vector3::UnitZ(), 2.0 * Vector3::UnitZ()}};
}

/// Jacobian of the error dynamics at the second equilibrium, ordered (z1, z2).
inline Matrix6 linearization(const ObserverGains& g) {
  const Matrix3 s2 = skew_squared(Vector3::UnitZ());
  Matrix6 a;
  a.topLeftCorner<3, 3>() = -g.alpha() * Matrix3::Identity();
  a.topRightCorner<3, 3>() = g.g0() * Matrix3::Identity();
  a.bottomLeftCorner<3, 3>() = g.beta() * s2;
  a.bottomRightCorner<3, 3>() = -2.0 * g.alpha() * g.ratio() * s2;
  return a;
}

/// Characteristic polynomial of linearization(g):
/// P(l) = l (l + alpha) (l^2 + alpha (1 - 2 G0) l - g0 beta)^2.
inline double char_poly_eval(double lambda, const ObserverGains& g) {
  const double q = lambda * lambda + g.alpha() * (1.0 - 2.0 * g.ratio()) * lambda - g.g0() * g.beta();
  return lambda * (lambda + g.alpha()) * q * q;
}

/// Positive root of P, the growth rate away from the second equilibrium.
inline double unstable_root(const ObserverGains& g) {
  const double r = g.ratio();
  return g.alpha() * (std::sqrt(1.0 + 4.0 * r * r) - (1.0 - 2.0 * r)) / 2.0;
}

/// Decay rate 2 min(1 - G0, G0 epsilon) alpha of the exponential envelope on V.
inline double exponential_rate(const ObserverGains& g, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
  return 2.0 * std::min(1.0 - g.ratio(), g.ratio() * epsilon) * g.alpha();
}

inline double exponential_bound(double v0, const ObserverGains& g, double epsilon, double t) {
  if (!(v0 >= 0.0)) throw std::invalid_argument("V0 must be non-negative");
  return v0 * std::exp(-exponential_rate(g, epsilon) * t);
}

/// min over the series of 1 - |z2|^2 / 4.
inline double estimate_epsilon(std::span<const Vector3> z2_series) {
  if (z2_series.empty()) throw std::invalid_argument("estimate_epsilon: empty series");
  double eps = 1.0;
  for (const Vector3& z2 : z2_series) {
    const double n2 = z2.squaredNorm();
    if (!(n2 < 4.0)) throw std::invalid_argument("estimate_epsilon: series leaves |z2| < 2");
    eps = std::min(eps, 1.0 - 0.25 * n2);
  }
  return eps;
}

/// First recorded time after which every error stays strictly below threshold.
inline std::optional<double> convergence_time(std::span<const double> times, std::span<const double> errors,
                                              double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("convergence_time: threshold must be positive");
  if (times.size() != errors.size()) throw std::invalid_argument("convergence_time: size mismatch");
  if (times.empty()) return std::nullopt;
  std::optional<std::size_t> last_exceed;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] < threshold)) last_exceed = i;
  }
  if (!last_exceed) return times.front();
  if (*last_exceed + 1 == times.size()) return std::nullopt;
  return times[*last_exceed + 1];
}

// ---------------------------------------------------------------------------
// Integration of the error dynamics

/// One step of the error dynamics with the same Munthe-Kaas scheme the
/// observer uses. The sphere point e_z - z2 is carried as z2 itself so that
/// small errors keep full relative precision.
inline ErrorPoint error_step(const ErrorPoint& xi, const ObserverGains& g, double dt) {
  const Vector3 w0 = Vector3::UnitZ() - xi.z2;
  const ProductIncrement inc = rkmk4_increment(xi.z1, dt, [&](double, const Vector3& z1, const Vector3& theta) {
    const Vector3 z2 = xi.z2 - rotation_exp_delta(theta, w0);
    const Vector3 w = Vector3::UnitZ() - z2;
    return ProductRates{-g.alpha() * z1 + g.g0() * z2, g.beta() * w.cross(z1)};
  });
  return {xi.z1 + inc.linear, xi.z2 - rotation_exp_delta(inc.rotation, w0)};
}

struct ErrorSample {
  double t;
  ErrorPoint xi;
};

/// Integrates from xi0 over [0, duration], recording every `decimation` steps
/// (the initial point and the final step are always recorded).
inline std::vector<ErrorSample> integrate_error_ode(const ErrorPoint& xi0, const ObserverGains& g, double dt,
                                                    double duration, int decimation = 1) {
  if (!(dt > 0.0) || !(duration > 0.0) || decimation < 1) {
    throw std::invalid_argument("integrate_error_ode: need dt > 0, duration > 0, decimation >= 1");
  }
  const auto steps = static_cast<long>(std::llround(duration / dt));
  std::vector<ErrorSample> out;
  out.reserve(static_cast<std::size_t>(steps / decimation + 2));
  out.push_back({0.0, xi0});
  ErrorPoint xi = xi0;
  for (long k = 1; k <= steps; ++k) {
    xi = error_step(xi, g, dt);
    if (k % decimation == 0 || k == steps) out.push_back({static_cast<double>(k) * dt, xi});
  }
  return out;
}

/// Final point only.
inline ErrorPoint flow_error_ode(ErrorPoint xi, const ObserverGains& g, double dt, double duration) {
  const auto steps = static_cast<long>(std::llround(duration / dt));
  for (long k = 0; k < steps; ++k) xi = error_step(xi, g, dt);
  return xi;
}

// ---------------------------------------------------------------------------
// Sampling

/// Uniform point on the sphere |e_z - z2| = 1.
inline Vector3 sample_z2(Rng& rng) {
  Vector3 u;
  do {
    u = gaussian3(rng);
  } while (u.norm() < 1e-12);
  return Vector3::UnitZ() - u.normalized();
}

/// Rejection sample of the sub-level set V < fraction * 2 g0^2: z2 uniform on
/// its sphere, z1 Gaussian with standard deviation g0 / alpha per axis.
inline ErrorPoint sample_basin_point(const ObserverGains& g, Rng& rng, double fraction = 0.99) {
  const double limit = fraction * 2.0 * g.g0() * g.g0();
  const double z1_scale = g.g0() / g.alpha();
  for (;;) {
    ErrorPoint xi{z1_scale * gaussian3(rng), sample_z2(rng)};
    if (lyapunov(xi, g) < limit) return xi;
  }
}

/// z2 uniform on its sphere, z1 uniform in the cube [-half_width, half_width]^3.
inline ErrorPoint sample_state_space_point(Rng& rng, double half_width) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Vector3 z1;
  for (int i = 0; i < 3; ++i) z1[i] = u(rng);
  return {z1, sample_z2(rng)};
}

/// Outcome of flowing sampled initial points for a fixed horizon.
struct SamplingStudy {
  int samples = 0;
  int to_origin = 0;
  int to_second = 0;
  int undecided = 0;
  /// Largest final |xi| among points that reached the origin.
  double worst_final_norm = 0.0;
};

namespace detail {

template <class Sampler>
SamplingStudy run_study(const ObserverGains& g, int samples, std::uint64_t seed, double dt, double horizon,
                        double tol, Sampler&& sample) {
  Rng rng(seed);
  const ErrorPoint second = equilibria(g).second;
  SamplingStudy s;
  s.samples = samples;
  for (int i = 0; i < samples; ++i) {
    const ErrorPoint end = flow_error_ode(sample(rng), g, dt, horizon);
    if (end.norm() < tol) {
      ++s.to_origin;
      s.worst_final_norm = std::max(s.worst_final_norm, end.norm());
    } else if (end.distance(second) < tol) {
      ++s.to_second;
    } else {
      ++s.undecided;
    }
  }
  return s;
}

}  // namespace detail

/// Points drawn from V < fraction * 2 g0^2.
inline SamplingStudy study_basin(const ObserverGains& g, int samples, std::uint64_t seed, double dt = 1e-3,
                                 double horizon = 10.0, double tol = 1e-3, double fraction = 0.99) {
  return detail::run_study(g, samples, seed, dt, horizon, tol,
                           [&](Rng& rng) { return sample_basin_point(g, rng, fraction); });
}

/// Points drawn over the whole state space (z1 in a cube of the given half width).
inline SamplingStudy study_state_space(const ObserverGains& g, int samples, std::uint64_t seed, double dt = 1e-3,
                                       double horizon = 10.0, double tol = 1e-3, double half_width = 5.0) {
  return detail::run_study(g, samples, seed, dt, horizon, tol,
                           [&](Rng& rng) { return sample_state_space_point(rng, half_width); });
}

// ---------------------------------------------------------------------------
// Report

struct VSample {
  double t;
  double v;
  double v_rate;
};

struct StabilityReport {
  double G0 = 0.0;
  std::pair<ErrorPoint, ErrorPoint> equilibria;
  double unstable_root = 0.0;
  std::vector<VSample> V_series;
  std::optional<double> convergence_time;
  /// Present when the whole run stays inside |z2| < 2.
  std::optional<double> epsilon;
  std::optional<double> exp_rate;
};

inline StabilityReport make_stability_report(const ObserverGains& g) {
  StabilityReport r;
  r.G0 = g.ratio();
  r.equilibria = equilibria(g);
  r.unstable_root = unstable_root(g);
  return r;
}

}  // namespace tilt
