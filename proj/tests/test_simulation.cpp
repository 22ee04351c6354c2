#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "tilt/io.hpp"
#include "tilt/simulation.hpp"

namespace tilt {
namespace {

ExperimentConfig short_config(double duration = 2.0) {
  ExperimentConfig cfg;
  cfg.duration = duration;
  return cfg;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(InitialConditions, ConsistentModeRealisesRequestedError) {
  ExperimentConfig cfg;
  const InitialConditions ic = initial_conditions(cfg);
  EXPECT_LT((ic.x2_error_applied - cfg.x2_error0).norm(), 1e-12);
  EXPECT_LT((ic.Rc0 * ic.x2.vec() - Vector3::UnitZ()).norm(), 1e-12);
  EXPECT_FALSE(ic.renormalized);

  cfg.x2_error0 = Vector3::Zero();
  const InitialConditions zero = initial_conditions(cfg);
  EXPECT_EQ(zero.x2_error_applied, Vector3::Zero());
  EXPECT_EQ(zero.Rc0.matrix(), Matrix3::Identity());
}

TEST(InitialConditions, IdentityModeRenormalises) {
  ExperimentConfig cfg;
  cfg.pivot_frame = PivotFrameMode::Identity;
  const InitialConditions ic = initial_conditions(cfg);
  EXPECT_EQ(ic.x2.vec(), Vector3::UnitZ());
  EXPECT_TRUE(ic.renormalized);
  const Vector3 expected_hat = (Vector3::UnitZ() - cfg.x2_error0).normalized();
  EXPECT_LT((ic.x2_hat.vec() - expected_hat).norm(), 1e-15);
  EXPECT_LT((ic.x2_error_applied - (Vector3::UnitZ() - expected_hat)).norm(), 1e-15);

  cfg.x2_error0 = Vector3(0.6, 0.0, 0.2);  // e_z - error = (-0.6, 0, 0.8) is already unit
  EXPECT_FALSE(initial_conditions(cfg).renormalized);
  EXPECT_LT((initial_conditions(cfg).x2_error_applied - cfg.x2_error0).norm(), 1e-15);
}

TEST(RunSimulation, ReferenceScenarioConverges) {
  const SimulationResult r = run_simulation(ExperimentConfig{});
  ASSERT_TRUE(r.report.convergence_time.has_value());
  EXPECT_LE(*r.report.convergence_time, 1.5);
  for (const RunRecord& rec : r.records) {
    if (rec.t >= 3.0) {
      EXPECT_LT(rec.x2_error.norm(), 0.05);
    }
  }
  ASSERT_TRUE(r.report.epsilon.has_value());
  EXPECT_GT(*r.report.epsilon, 0.0);
  EXPECT_NEAR(r.records.front().x2_error.norm(), 1.9307, 1e-4);
}

TEST(RunSimulation, ZeroInitialErrorStaysConsistent) {
  ExperimentConfig cfg;
  cfg.x2_error0 = Vector3::Zero();
  const SimulationResult r = run_simulation(cfg);
  const double worst = *std::max_element(r.trace.x2_error_norm.begin(), r.trace.x2_error_norm.end());
  EXPECT_LT(worst, 1e-5);
}

TEST(RunSimulation, ErrorCoordinatesFollowAutonomousDynamics) {
  const ExperimentConfig cfg = short_config(5.0);
  const SimulationResult r = run_simulation(cfg);
  const ObserverGains g = make_gains(cfg.alpha, cfg.beta, cfg.g0);
  const auto direct = integrate_error_ode(initial_error_point(cfg), g, cfg.dt, cfg.duration);
  ASSERT_EQ(direct.size(), r.trace.xi.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < direct.size(); ++i) worst = std::max(worst, direct[i].xi.distance(r.trace.xi[i]));
  EXPECT_LT(worst, 1e-6);
}

TEST(RunSimulation, HeldInputsDegradeConsistency) {
  ExperimentConfig cfg = short_config(5.0);
  cfg.hold_inputs = true;
  const SimulationResult r = run_simulation(cfg);
  const ObserverGains g = make_gains(cfg.alpha, cfg.beta, cfg.g0);
  const auto direct = integrate_error_ode(initial_error_point(cfg), g, cfg.dt, cfg.duration);
  double worst = 0.0;
  for (std::size_t i = 0; i < direct.size(); ++i) worst = std::max(worst, direct[i].xi.distance(r.trace.xi[i]));
  EXPECT_GT(worst, 1e-5);
  EXPECT_LT(worst, 1e-1);
}

TEST(RunSimulation, DeterministicCsvBytes) {
  ExperimentConfig cfg = short_config();
  cfg.noise = {0.04, 0.2, 17};
  std::ostringstream a;
  std::ostringstream b;
  write_csv(run_simulation(cfg).records, a);
  write_csv(run_simulation(cfg).records, b);
  EXPECT_EQ(a.str(), b.str());
  cfg.noise.seed = 18;
  std::ostringstream c;
  write_csv(run_simulation(cfg).records, c);
  EXPECT_NE(a.str(), c.str());
}

TEST(RunSimulation, DecimationOnlyAffectsRecording) {
  ExperimentConfig cfg = short_config(1.0);
  cfg.noise = {0.04, 0.2, 3};
  cfg.decimation = 1;
  const SimulationResult full = run_simulation(cfg);
  cfg.decimation = 7;
  const SimulationResult sparse = run_simulation(cfg);
  ASSERT_EQ(sparse.records.size(), 1000u / 7 + 2);
  for (const RunRecord& rec : sparse.records) {
    const auto k = static_cast<std::size_t>(std::llround(rec.t / cfg.dt));
    EXPECT_EQ(rec.x2_hat, full.records[k].x2_hat);
    EXPECT_EQ(rec.y_a, full.records[k].y_a);
  }
  EXPECT_EQ(full.steady_state_rms, sparse.steady_state_rms);
}

TEST(RunSimulation, YawDoesNotChangeMeasurementsOrEstimates) {
  ExperimentConfig cfg = short_config(3.0);
  const SimulationResult base = run_simulation(cfg);
  cfg.trajectory.yaw = 1.1;
  const SimulationResult yawed = run_simulation(cfg);
  ASSERT_EQ(base.records.size(), yawed.records.size());
  for (std::size_t i = 0; i < base.records.size(); ++i) {
    EXPECT_LT((base.records[i].y_a - yawed.records[i].y_a).norm(), 1e-12);
    EXPECT_LT((base.records[i].y_g - yawed.records[i].y_g).norm(), 1e-12);
    EXPECT_LT((base.records[i].x2_hat - yawed.records[i].x2_hat).norm(), 1e-12);
  }
}

class NanEstimator final : public TiltEstimator {
 public:
  void update(const StepInputs&, double) override {
    if (++steps_ == 25) tilt_ = Vector3::Constant(std::numeric_limits<double>::quiet_NaN());
  }
  UnitVector3 tilt() const override { return UnitVector3::from_unit(Vector3::UnitZ()); }
  std::optional<Vector3> velocity_estimate() const override { return tilt_; }

 private:
  int steps_ = 0;
  Vector3 tilt_ = Vector3::Zero();
};

TEST(RunSimulation, NonFiniteStateReportsStep) {
  try {
    run_simulation(short_config(), [](const EstimatorInit&) { return std::make_unique<NanEstimator>(); });
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.step(), 25);
  }
}

// A gyro-only estimator: propagates the tilt with y1 and ignores the accelerometer.
class GyroOnly final : public TiltEstimator {
 public:
  explicit GyroOnly(const UnitVector3& x2) : x2_(x2) {}
  void update(const StepInputs& in, double dt) override { x2_ = rotate_by_exp(-dt * in.mid.y1, x2_); }
  UnitVector3 tilt() const override { return x2_; }

 private:
  UnitVector3 x2_;
};

TEST(RunSimulation, AcceptsAlternativeEstimators) {
  ExperimentConfig cfg = short_config();
  cfg.x2_error0 = Vector3::Zero();
  const SimulationResult r = run_simulation(
      cfg, [](const EstimatorInit& init) { return std::make_unique<GyroOnly>(init.state.x2_hat); });
  EXPECT_TRUE(r.trace.xi.empty());
  EXPECT_TRUE(std::isnan(r.records.back().V));
  EXPECT_FALSE(r.report.epsilon.has_value());
  EXPECT_LT(r.trace.x2_error_norm.back(), 1e-4);  // second-order attitude propagation, no correction
}

TEST(EmitCsv, RowCounts) {
  std::ostringstream empty;
  write_csv({}, empty);
  EXPECT_EQ(empty.str(), std::string(kRunCsvHeader) + "\n");

  std::ostringstream one;
  write_csv({RunRecord{}}, one);
  EXPECT_EQ(count_lines(one.str()), 2u);
  EXPECT_EQ(one.str().back(), '\n');

  std::ostringstream full;
  write_csv(run_simulation(ExperimentConfig{}).records, full);
  EXPECT_EQ(count_lines(full.str()), 1002u);  // header + 1001 rows
  std::istringstream is(full.str());
  std::string line;
  while (std::getline(is, line)) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 20);
}

TEST(EmitCsv, NineSignificantDigits) {
  RunRecord r;
  r.t = 0.1234567891234;
  r.V = 123456.789012345;
  std::ostringstream os;
  write_csv({r}, os);
  EXPECT_NE(os.str().find("\n0.123456789,"), std::string::npos);
  EXPECT_NE(os.str().find(",123456.789,"), std::string::npos);
}

TEST(EmitCsv, ReportsIoFailure) {
  EXPECT_THROW(emit_csv({}, "/nonexistent-dir/for/sure/run.csv"), std::runtime_error);
}

TEST(RunSweep, RejectsInvalidCellsAndContinues) {
  ExperimentConfig cfg = short_config(1.0);
  cfg.sweep_alpha = {1.0, 19.8};
  cfg.sweep_beta = {10.0};
  const auto cells = run_sweep(cfg);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_TRUE(cells[0].rejected);
  EXPECT_FALSE(cells[1].rejected);
  EXPECT_TRUE(cells[1].error.empty());
  EXPECT_TRUE(cells[1].convergence_time.has_value());
  std::ostringstream os;
  write_sweep_csv(cells, os);
  EXPECT_NE(os.str().find(",rejected,"), std::string::npos);
}

TEST(FormatReport, ContainsKeyMetrics) {
  const ExperimentConfig cfg = short_config();
  const std::string report = format_report(run_simulation(cfg), cfg);
  for (const char* key : {"G0 = 0.2502295684113", "unstable_root = 6.12511547876", "convergence_time = ",
                          "steady_state_rms_x2_error = ", "initial.renormalized = false"}) {
    EXPECT_NE(report.find(key), std::string::npos) << key;
  }
}

}  // namespace
}  // namespace tilt
