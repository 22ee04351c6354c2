#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Eigenvalues>

#include "test_support.hpp"
#include "tilt/analysis.hpp"

namespace tilt {
namespace {

constexpr double kG0 = 9.81;

ObserverGains reference_gains() { return make_gains(19.8, 10.0, kG0); }

ErrorPoint random_point(Rng& rng, double z1_scale = 1.0) {
  return {z1_scale * gaussian3(rng), sample_z2(rng)};
}

// dV/dt = grad V . F with grad V written out from the definition of V.
double chain_rule_rate(const ErrorPoint& xi, const ObserverGains& g) {
  const Vector3 s = g.alpha() * xi.z1 - g.g0() * xi.z2;
  const ErrorRates f = error_field(xi, g);
  return (g.alpha() * s).dot(f.z1_rate) + (-g.g0() * s + g.g0() * g.g0() * xi.z2).dot(f.z2_rate);
}

TEST(ErrorField, Examples) {
  const ObserverGains g = reference_gains();
  const ErrorRates at_origin = error_field(ErrorPoint{}, g);
  EXPECT_EQ(at_origin.z1_rate.norm() + at_origin.z2_rate.norm(), 0.0);
  const ErrorRates at_second = error_field(equilibria(g).second, g);
  EXPECT_LE(at_second.z1_rate.norm() + at_second.z2_rate.norm(), 1e-12);
  const ErrorRates ex = error_field(ErrorPoint{Vector3::UnitX(), Vector3::Zero()}, g);
  EXPECT_LT((ex.z1_rate - Vector3(-19.8, 0, 0)).norm(), 1e-14);
  EXPECT_LT((ex.z2_rate - Vector3(-10, 0, 0)).norm(), 1e-14);
}

TEST(ErrorField, TangentToManifold) {
  const ObserverGains g = reference_gains();
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const ErrorPoint xi = random_point(rng, 3.0);
    const Vector3 w = Vector3::UnitZ() - xi.z2;
    EXPECT_LT(std::abs(w.dot(error_field(xi, g).z2_rate)), 1e-12);
  }
}

TEST(Lyapunov, Examples) {
  const ObserverGains g = reference_gains();
  EXPECT_EQ(lyapunov(ErrorPoint{}, g), 0.0);
  EXPECT_NEAR(lyapunov(ErrorPoint{Vector3::Zero(), 2 * Vector3::UnitZ()}, g), 384.9444, 1e-9);
  EXPECT_EQ(lyapunov_rate(ErrorPoint{}, g), 0.0);
  EXPECT_TRUE(in_guaranteed_basin(ErrorPoint{}, g));
  EXPECT_FALSE(in_guaranteed_basin(equilibria(g).second, g));
}

TEST(LyapunovRate, MatchesChainRule) {
  const ObserverGains g = reference_gains();
  Rng rng(32);
  for (int i = 0; i < 10000; ++i) {
    const ErrorPoint xi = random_point(rng, i % 2 ? 0.5 : 2.0);
    EXPECT_NEAR(lyapunov_rate(xi, g), chain_rule_rate(xi, g), 1e-9);
  }
}

// V is quadratic, so the central difference along F is exact up to rounding.
TEST(LyapunovRate, MatchesDirectionalDifference) {
  const ObserverGains g = reference_gains();
  Rng rng(33);
  for (int i = 0; i < 1000; ++i) {
    const ErrorPoint xi = random_point(rng);
    const ErrorRates f = error_field(xi, g);
    const double h = 1e-3;
    const double fd = (lyapunov(ErrorPoint{xi.z1 + h * f.z1_rate, xi.z2 + h * f.z2_rate}, g) -
                       lyapunov(ErrorPoint{xi.z1 - h * f.z1_rate, xi.z2 - h * f.z2_rate}, g)) /
                      (2 * h);
    EXPECT_NEAR(lyapunov_rate(xi, g), fd, 1e-8);
  }
}

TEST(LyapunovRate, NegativeAwayFromEquilibria) {
  Rng rng(34);
  for (const ObserverGains& g : {reference_gains(), make_gains(5.0, 1.0, kG0), make_gains(30.0, 40.0, kG0)}) {
    for (int i = 0; i < 10000; ++i) EXPECT_LT(lyapunov_rate(random_point(rng), g), 0.0);
  }
}

TEST(Equilibria, Examples) {
  const auto [origin, second] = equilibria(reference_gains());
  EXPECT_EQ(origin.norm(), 0.0);
  EXPECT_LT((second.z1 - Vector3(0, 0, 0.99090909090909091)).norm(), 1e-15);
  EXPECT_EQ(second.z2, Vector3(0, 0, 2));
  EXPECT_LT((equilibria(make_gains(9.81, 1.0, 9.81)).second.z1 - Vector3(0, 0, 2)).norm(), 1e-15);
}

TEST(Linearization, MatchesNumericJacobian) {
  const ObserverGains g = reference_gains();
  const Matrix6 a = linearization(g);
  EXPECT_EQ(Matrix3(a.topLeftCorner<3, 3>()), Matrix3(-19.8 * Matrix3::Identity()));
  const ErrorPoint eq = equilibria(g).second;
  Matrix6 jac;
  const double h = 1e-6;
  for (int j = 0; j < 6; ++j) {
    ErrorPoint p = eq;
    ErrorPoint m = eq;
    (j < 3 ? p.z1 : p.z2)[j % 3] += h;
    (j < 3 ? m.z1 : m.z2)[j % 3] -= h;
    const ErrorRates fp = error_field(p, g);
    const ErrorRates fm = error_field(m, g);
    jac.col(j).head<3>() = (fp.z1_rate - fm.z1_rate) / (2 * h);
    jac.col(j).tail<3>() = (fp.z2_rate - fm.z2_rate) / (2 * h);
  }
  EXPECT_LT((jac - a).norm(), 1e-6);
}

TEST(CharPoly, RootsAndEigenvalues) {
  const ObserverGains g = reference_gains();
  EXPECT_EQ(char_poly_eval(0.0, g), 0.0);
  EXPECT_EQ(char_poly_eval(-g.alpha(), g), 0.0);
  const double root = unstable_root(g);
  EXPECT_NEAR(root, 6.1251154787653936, 1e-12);
  EXPECT_GT(root, 0.0);
  EXPECT_LT(std::abs(char_poly_eval(root, g)), 1e-9);

  Eigen::EigenSolver<Matrix6> es(linearization(g), false);
  double closest = 1e300;
  for (const auto& ev : es.eigenvalues()) closest = std::min(closest, std::abs(ev - std::complex<double>(root, 0)));
  EXPECT_LT(closest, 1e-9);
  // Every eigenvalue is a root of P.
  for (const auto& ev : es.eigenvalues()) {
    ASSERT_LT(std::abs(ev.imag()), 1e-9);
    EXPECT_LT(std::abs(char_poly_eval(ev.real(), g)), 1e-6);
  }
}

TEST(CharPoly, UnstableRootAcrossGains) {
  Rng rng(35);
  std::uniform_real_distribution<double> u(0.5, 40.0);
  for (int i = 0; i < 200; ++i) {
    const double alpha = u(rng);
    const double beta = std::uniform_real_distribution<double>(0.01, 0.99)(rng) * alpha * alpha / kG0;
    const ObserverGains g = make_gains(alpha, beta, kG0);
    const double root = unstable_root(g);
    EXPECT_GT(root, 0.0);
    Eigen::EigenSolver<Matrix6> es(linearization(g), false);
    double closest = 1e300;
    for (const auto& ev : es.eigenvalues()) closest = std::min(closest, std::abs(ev - std::complex<double>(root, 0)));
    EXPECT_LT(closest, 1e-9 * std::max(1.0, root));
  }
}

TEST(ExponentialBound, Examples) {
  const ObserverGains g = reference_gains();
  EXPECT_EQ(exponential_bound(12.5, g, 0.3, 0.0), 12.5);
  EXPECT_NEAR(exponential_rate(g, 0.5), 2 * 0.5 * 0.2502295684113866 * 19.8, 1e-12);
  EXPECT_NEAR(exponential_rate(g, 0.5), 4.954545454545454, 1e-12);
  EXPECT_NEAR(exponential_rate(g, 1.0), 2 * 0.2502295684113866 * 19.8, 1e-12);
  EXPECT_THROW(exponential_rate(g, 0.0), std::invalid_argument);
  EXPECT_THROW(exponential_rate(g, 1.5), std::invalid_argument);
  EXPECT_THROW(exponential_bound(-1.0, g, 0.5, 1.0), std::invalid_argument);
  double prev = exponential_bound(3.0, g, 0.7, 0.0);
  for (int k = 1; k < 100; ++k) {
    const double b = exponential_bound(3.0, g, 0.7, 0.05 * k);
    EXPECT_LT(b, prev);
    prev = b;
  }
}

TEST(EstimateEpsilon, Examples) {
  const std::vector<Vector3> zeros(5, Vector3::Zero());
  EXPECT_EQ(estimate_epsilon(zeros), 1.0);
  const std::vector<Vector3> unit{Vector3::UnitX(), Vector3(0, 0.6, 0.8)};
  EXPECT_NEAR(estimate_epsilon(unit), 0.75, 1e-15);
  EXPECT_THROW(estimate_epsilon(std::vector<Vector3>{}), std::invalid_argument);
  EXPECT_THROW(estimate_epsilon(std::vector<Vector3>{2 * Vector3::UnitZ()}), std::invalid_argument);
}

TEST(ConvergenceTime, Examples) {
  const std::vector<double> t{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<double> zero(t.size(), 0.0);
  EXPECT_EQ(convergence_time(t, zero, 0.05), 0.0);
  const std::vector<double> dip{1.0, 0.01, 0.2, 0.04, 0.01, 0.0};
  EXPECT_EQ(convergence_time(t, dip, 0.05), 0.3);
  const std::vector<double> never{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  EXPECT_FALSE(convergence_time(t, never, 0.05).has_value());
  EXPECT_THROW(convergence_time(t, zero, 0.0), std::invalid_argument);
}

TEST(ErrorStep, FourthOrder) {
  const ObserverGains g = reference_gains();
  const ErrorPoint xi0{Vector3(0.3, -0.2, 0.1), Vector3::UnitZ() - Vector3(0.6, 0.0, 0.8)};
  const ErrorPoint ref = flow_error_ode(xi0, g, 1e-4, 0.4);
  const double e1 = flow_error_ode(xi0, g, 0.02, 0.4).distance(ref);
  const double e2 = flow_error_ode(xi0, g, 0.01, 0.4).distance(ref);
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.5);
}

TEST(ErrorStep, StaysOnManifold) {
  const ObserverGains g = reference_gains();
  Rng rng(36);
  for (int i = 0; i < 20; ++i) {
    ErrorPoint xi = random_point(rng, 3.0);
    for (int k = 0; k < 20000; ++k) xi = error_step(xi, g, 1e-3);
    EXPECT_LT(xi.manifold_error(), 1e-12);
  }
}

TEST(IntegrateErrorOde, RecordsDecimatedSamples) {
  const ObserverGains g = reference_gains();
  const ErrorPoint xi0{Vector3::Zero(), Vector3::UnitZ() - Vector3::UnitX()};
  const auto s = integrate_error_ode(xi0, g, 1e-3, 1.0, 10);
  ASSERT_EQ(s.size(), 101u);
  EXPECT_EQ(s.front().t, 0.0);
  EXPECT_NEAR(s.back().t, 1.0, 1e-12);
  EXPECT_THROW(integrate_error_ode(xi0, g, 0.0, 1.0), std::invalid_argument);
  EXPECT_EQ(s.back().xi.z1, flow_error_ode(xi0, g, 1e-3, 1.0).z1);
}

TEST(Sampling, BasinPointsSatisfyLevel) {
  const ObserverGains g = reference_gains();
  Rng rng(37);
  for (int i = 0; i < 1000; ++i) {
    const ErrorPoint xi = sample_basin_point(g, rng);
    EXPECT_LT(lyapunov(xi, g), 0.99 * 2 * kG0 * kG0);
    EXPECT_LT(xi.manifold_error(), 1e-12);
  }
}

TEST(Sampling, StateSpaceFlowsAvoidSecondEquilibrium) {
  const SamplingStudy s = study_state_space(reference_gains(), 1000, 38);
  EXPECT_EQ(s.samples, 1000);
  EXPECT_EQ(s.to_second, 0);
  EXPECT_EQ(s.undecided, 0);
  EXPECT_EQ(s.to_origin, 1000);
}

TEST(Instability, PerturbationLeavesSecondEquilibrium) {
  const ObserverGains g = reference_gains();
  const ErrorPoint eq = equilibria(g).second;
  Eigen::EigenSolver<Matrix6> es(linearization(g));
  const double root = unstable_root(g);
  int idx = 0;
  for (int i = 1; i < 6; ++i) {
    if (es.eigenvalues()[i].real() > es.eigenvalues()[idx].real()) idx = i;
  }
  const Eigen::Matrix<double, 6, 1> v = es.eigenvectors().col(idx).real().normalized();
  ErrorPoint xi{eq.z1 + 1e-6 * v.head<3>(), eq.z2 + 1e-6 * v.tail<3>()};
  xi.z2 = Vector3::UnitZ() - (Vector3::UnitZ() - xi.z2).normalized();
  const double d0 = xi.distance(eq);
  const ErrorPoint end = flow_error_ode(xi, g, 1e-3, 5.0 / root);
  EXPECT_GE(end.distance(eq), 10.0 * d0);
}

}  // namespace
}  // namespace tilt
