#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tilt/analysis.hpp"
#include "tilt/config.hpp"
#include "tilt/observer.hpp"
#include "tilt/plant.hpp"
#include "tilt/so3.hpp"

namespace tilt {

/// Initial frames and estimate reconstructed from the requested errors.
struct InitialConditions {
  RotationMatrix Rc0;          // before the trajectory yaw offset
  UnitVector3 x2;              // R_c(0)^T e_z
  UnitVector3 x2_hat;
  Vector3 x2_error_applied;    // x2 - x2_hat actually used
  bool renormalized = false;
};

/// Consistent mode places x2(0) so that |x2(0) - x2_error| = 1, leaning
/// towards e_z, and orients R_c(0) minimally; the requested error is then
/// realised exactly.
inline InitialConditions initial_conditions(const ExperimentConfig& cfg) {
  const Vector3& err = cfg.x2_error0;
  InitialConditions ic;
  if (cfg.pivot_frame == PivotFrameMode::Identity) {
    ic.x2 = UnitVector3::e_z();
    const Vector3 hat = Vector3::UnitZ() - err;
    ic.renormalized = std::abs(hat.norm() - 1.0) > 1e-6;
    ic.x2_hat = UnitVector3::normalized(hat);
    ic.x2_error_applied = ic.x2.vec() - ic.x2_hat.vec();
    return ic;
  }
  const double n = err.norm();
  if (n == 0.0) {
    ic.x2_error_applied = Vector3::Zero();
    return ic;
  }
  const Vector3 u = err / n;
  Vector3 lean = Vector3::UnitZ() - u.z() * u;
  if (lean.norm() < 1e-9) lean = Vector3::UnitX() - u.x() * u;
  lean.normalize();
  const Vector3 x2 = 0.5 * n * u + std::sqrt(std::max(0.0, 1.0 - 0.25 * n * n)) * lean;
  ic.x2 = UnitVector3::normalized(x2);
  ic.Rc0 = rotation_between(ic.x2, UnitVector3::e_z());
  ic.x2_hat = UnitVector3::normalized(ic.x2.vec() - err);
  ic.x2_error_applied = ic.x2.vec() - ic.x2_hat.vec();
  return ic;
}

struct RunRecord {
  double t = 0.0;
  Vector3 x2 = Vector3::Zero();
  Vector3 x2_hat = Vector3::Zero();
  Vector3 x1_error = Vector3::Zero();
  Vector3 x2_error = Vector3::Zero();
  double V = 0.0;
  double V_rate = 0.0;
  Vector3 y_a = Vector3::Zero();
  Vector3 y_g = Vector3::Zero();
};

/// Full-rate error trajectory, kept alongside the decimated records.
struct ErrorTrace {
  std::vector<double> t;
  std::vector<double> x2_error_norm;
  std::vector<ErrorPoint> xi;  // empty when the estimator has no velocity estimate
};

struct SimulationResult {
  InitialConditions initial;
  std::vector<RunRecord> records;
  ErrorTrace trace;
  StabilityReport report;
  /// RMS of |x2 error| from cfg.steady_state_from to the end.
  double steady_state_rms = 0.0;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(long step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

struct EstimatorInit {
  ObserverGains gains;
  ObserverState state;
};

using EstimatorFactory = std::function<std::unique_ptr<TiltEstimator>(const EstimatorInit&)>;

inline EstimatorFactory default_estimator() {
  return [](const EstimatorInit& init) { return std::make_unique<TiltObserver>(init.gains, init.state); };
}

namespace detail {

struct Truth {
  PivotState pivot;
  MountKinematics mount;
};

struct Sample {
  ImuMeasurement clean;
  ImuMeasurement noisy;
  ObserverInput input;
};

struct SensorNoise {
  Vector3 gyro = Vector3::Zero();
  Vector3 accel = Vector3::Zero();
};

inline SensorNoise draw_noise(const NoiseSpec& spec, Rng& rng) {
  const ImuMeasurement n = add_noise(ImuMeasurement{}, spec, rng);
  return {n.y_g, n.y_a};
}

inline Sample measure(const Truth& truth, double g0, const SensorNoise& noise) {
  Sample s;
  s.clean = synthesize(truth.pivot, truth.mount, g0);
  s.noisy = {s.clean.y_a + noise.accel, s.clean.y_g + noise.gyro};
  s.input = make_observer_input(s.noisy, truth.mount);
  return s;
}

inline bool finite(const Truth& t) {
  return t.pivot.R.matrix().allFinite() && t.pivot.omega.allFinite() && t.mount.p.allFinite() &&
         t.mount.v.allFinite() && t.mount.a.allFinite() && t.mount.R.matrix().allFinite();
}

inline std::uint64_t trajectory_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

}  // namespace detail

/// Closed loop: plant -> sensors -> estimator, recording every
/// cfg.decimation steps. Deterministic for a given configuration.
inline SimulationResult run_simulation(const ExperimentConfig& cfg, const EstimatorFactory& factory) {
  validate(cfg);
  const ObserverGains gains = make_gains(cfg.alpha, cfg.beta, cfg.g0);
  const TrajectoryConfig& traj = cfg.trajectory;
  const double dt = cfg.dt;
  const double g0_plant = traj.g0;
  const auto steps = static_cast<long>(std::llround(cfg.duration / dt));

  SimulationResult result;
  result.initial = initial_conditions(cfg);
  result.report = make_stability_report(gains);

  Rng traj_rng(detail::trajectory_seed(cfg.noise.seed));
  Rng sensor_rng(cfg.noise.seed);

  detail::Truth truth{initial_pivot(traj, result.initial.Rc0), initial_mount(traj, dt, traj_rng)};
  detail::SensorNoise noise = detail::draw_noise(cfg.noise, sensor_rng);
  detail::Sample begin = detail::measure(truth, g0_plant, noise);

  auto true_x1 = [&](const detail::Truth& tr) {
    return compute_x1(tr.mount, tr.pivot.R.matrix().transpose() * tr.pivot.omega);
  };

  ObserverState init;
  init.x1_hat = true_x1(truth) - cfg.x1_error0;
  init.x2_hat = result.initial.x2_hat;
  std::unique_ptr<TiltEstimator> estimator = factory(EstimatorInit{gains, init});

  result.records.reserve(static_cast<std::size_t>(steps / cfg.decimation + 2));
  result.trace.t.reserve(static_cast<std::size_t>(steps + 1));
  result.trace.x2_error_norm.reserve(static_cast<std::size_t>(steps + 1));

  auto record = [&](long k, const detail::Truth& tr, const detail::Sample& s) {
    const double t = static_cast<double>(k) * dt;
    const Matrix3& rc = tr.pivot.R.matrix();
    const Vector3 x2 = rc.transpose() * Vector3::UnitZ();
    const Vector3 x2_hat = estimator->tilt().vec();
    const Vector3 x2_err = x2 - x2_hat;
    const std::optional<Vector3> x1_hat = estimator->velocity_estimate();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const Vector3 x1_err = x1_hat ? Vector3(true_x1(tr) - *x1_hat) : Vector3::Constant(nan);

    result.trace.t.push_back(t);
    result.trace.x2_error_norm.push_back(x2_err.norm());
    double v = nan;
    double v_rate = nan;
    if (x1_hat) {
      const ErrorPoint xi{rc * x1_err, Vector3::UnitZ() - rc * x2_hat};
      result.trace.xi.push_back(xi);
      v = lyapunov(xi, gains);
      v_rate = lyapunov_rate(xi, gains);
    }
    if (!x2_hat.allFinite() || (x1_hat && !x1_hat->allFinite())) {
      throw SimulationError(k, "estimator state is not finite");
    }
    if (k % cfg.decimation == 0 || k == steps) {
      result.records.push_back({t, x2, x2_hat, x1_err, x2_err, v, v_rate, s.noisy.y_a, s.noisy.y_g});
      result.report.V_series.push_back({t, v, v_rate});
    }
  };

  record(0, truth, begin);
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const detail::Truth mid_truth{pivot_at(truth.pivot, traj, t, 0.5 * dt), mount_at(truth.mount, traj, t, 0.5 * dt)};
    const detail::Truth end_truth{step_pivot(truth.pivot, traj, t, dt), mount_at(truth.mount, traj, t, dt)};
    const detail::Sample mid = detail::measure(mid_truth, g0_plant, detail::draw_noise(cfg.noise, sensor_rng));
    noise = detail::draw_noise(cfg.noise, sensor_rng);
    const detail::Sample end = detail::measure(end_truth, g0_plant, noise);

    estimator->update(cfg.hold_inputs ? StepInputs::held(begin.input) : StepInputs{begin.input, mid.input, end.input},
                      dt);

    truth = {end_truth.pivot, with_new_drive(end_truth.mount, traj, dt, traj_rng)};
    if (!detail::finite(truth)) throw SimulationError(k + 1, "plant state is not finite");
    begin = detail::measure(truth, g0_plant, noise);
    record(k + 1, truth, begin);
  }

  StabilityReport& rep = result.report;
  rep.convergence_time = convergence_time(result.trace.t, result.trace.x2_error_norm, cfg.convergence_threshold);
  if (!result.trace.xi.empty()) {
    std::vector<Vector3> z2;
    z2.reserve(result.trace.xi.size());
    for (const auto& xi : result.trace.xi) z2.push_back(xi.z2);
    try {
      rep.epsilon = estimate_epsilon(z2);
      rep.exp_rate = exponential_rate(gains, *rep.epsilon);
    } catch (const std::invalid_argument&) {
      // Trajectory leaves |z2| < 2: no envelope.
    }
  }

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < result.trace.t.size(); ++i) {
    if (result.trace.t[i] >= cfg.steady_state_from - 1e-12) {
      sum += result.trace.x2_error_norm[i] * result.trace.x2_error_norm[i];
      ++count;
    }
  }
  result.steady_state_rms = count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
  return result;
}

inline SimulationResult run_simulation(const ExperimentConfig& cfg) {
  return run_simulation(cfg, default_estimator());
}

/// Error point matching the configured initial errors: (R_c(0) x1_err, R_c(0) x2_err).
inline ErrorPoint initial_error_point(const ExperimentConfig& cfg) {
  const InitialConditions ic = initial_conditions(cfg);
  const RotationMatrix rc = rotation_about_z(cfg.trajectory.yaw) * ic.Rc0;
  return {rc * cfg.x1_error0, Vector3::UnitZ() - rc * ic.x2_hat.vec()};
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepCell {
  double alpha = 0.0;
  double beta = 0.0;
  double G0 = 0.0;
  bool rejected = false;
  std::optional<double> convergence_time;
  double steady_state_rms = 0.0;
  std::string error;
};

/// Grid over cfg.sweep_alpha x cfg.sweep_beta; cells run concurrently with
/// seed = cfg.noise.seed ^ cell index.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg) {
  std::vector<SweepCell> cells;
  for (double a : cfg.sweep_alpha) {
    for (double b : cfg.sweep_beta) {
      SweepCell cell;
      cell.alpha = a;
      cell.beta = b;
      cell.G0 = b * cfg.g0 / (a * a);
      cells.push_back(cell);
    }
  }
  std::vector<std::future<void>> jobs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    SweepCell& cell = cells[i];
    if (!(cell.beta * cfg.g0 < cell.alpha * cell.alpha)) {
      cell.rejected = true;
      cell.error = "beta * g0 >= alpha^2";
      continue;
    }
    ExperimentConfig c = cfg;
    c.alpha = cell.alpha;
    c.beta = cell.beta;
    c.noise.seed = cfg.noise.seed ^ static_cast<std::uint64_t>(i);
    jobs.push_back(std::async(std::launch::async, [c, &cell] {
      try {
        const SimulationResult r = run_simulation(c);
        cell.convergence_time = r.report.convergence_time;
        cell.steady_state_rms = r.steady_state_rms;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }));
  }
  for (auto& j : jobs) j.get();
  return cells;
}

}  // namespace tilt
