#pragma once

#include <algorithm>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include "tilt/analysis.hpp"
#include "tilt/config.hpp"
#include "tilt/io.hpp"
#include "tilt/simulation.hpp"

namespace tilt::cli {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read config " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline ExperimentConfig resolve_config(const CommonOptions& opt) {
  ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig{} : load_config(read_text(opt.config_path));
  if (opt.seed) cfg.noise.seed = *opt.seed;
  validate(cfg);
  return cfg;
}

inline std::string out_path(const CommonOptions& opt, const std::string& name) {
  std::filesystem::create_directories(opt.out_dir);
  return (std::filesystem::path(opt.out_dir) / name).string();
}

inline int simulate(const CommonOptions& opt, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(opt);
  const SimulationResult r = run_simulation(cfg);
  emit_csv(r.records, out_path(opt, cfg.csv_path));
  const std::string report = format_report(r, cfg);
  write_file(out_path(opt, cfg.report_path), report);
  write_file(out_path(opt, cfg.config_echo_path), format_config(cfg));
  out << report;
  return 0;
}

inline std::string analysis_report(const ExperimentConfig& cfg) {
  const ObserverGains g = make_gains(cfg.alpha, cfg.beta, cfg.g0);
  const double root = unstable_root(g);
  std::ostringstream os;
  os << "alpha = " << detail::format_double(g.alpha()) << '\n';
  os << "beta = " << detail::format_double(g.beta()) << '\n';
  os << "g0 = " << detail::format_double(g.g0()) << '\n';
  os << "G0 = " << detail::format_double(g.ratio()) << '\n';
  const auto [origin, second] = equilibria(g);
  os << "equilibrium.origin.z1 = " << detail::format_vector3(origin.z1) << '\n';
  os << "equilibrium.origin.z2 = " << detail::format_vector3(origin.z2) << '\n';
  os << "equilibrium.second.z1 = " << detail::format_vector3(second.z1) << '\n';
  os << "equilibrium.second.z2 = " << detail::format_vector3(second.z2) << '\n';
  os << "unstable_root = " << detail::format_double(root) << '\n';
  os << "char_poly_at_unstable_root = " << detail::format_double(char_poly_eval(root, g)) << '\n';

  Eigen::EigenSolver<Matrix6> es(linearization(g), false);
  std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) { return a.real() < b.real(); });
  os << "linearization.eigenvalues =";
  for (const auto& e : ev) {
    os << ' ' << detail::format_double(e.real());
    if (std::abs(e.imag()) > 1e-12) os << (e.imag() > 0 ? "+" : "") << detail::format_double(e.imag()) << 'i';
  }
  os << '\n';
  os << "exp_rate.epsilon_1 = " << detail::format_double(exponential_rate(g, 1.0)) << '\n';
  os << "exp_rate.epsilon_0.5 = " << detail::format_double(exponential_rate(g, 0.5)) << '\n';

  const SamplingStudy basin = study_basin(g, cfg.analyze_samples, cfg.noise.seed, cfg.dt, cfg.analyze_horizon);
  os << "basin.samples = " << basin.samples << '\n';
  os << "basin.to_origin = " << basin.to_origin << '\n';
  os << "basin.worst_final_norm = " << detail::format_double(basin.worst_final_norm) << '\n';
  const SamplingStudy global =
      study_state_space(g, cfg.analyze_samples, cfg.noise.seed + 1, cfg.dt, cfg.analyze_horizon);
  os << "state_space.samples = " << global.samples << '\n';
  os << "state_space.to_origin = " << global.to_origin << '\n';
  os << "state_space.to_second = " << global.to_second << '\n';
  os << "state_space.undecided = " << global.undecided << '\n';
  return os.str();
}

inline int analyze(const CommonOptions& opt, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(opt);
  const std::string report = analysis_report(cfg);
  write_file(out_path(opt, cfg.analyze_path), report);
  out << report;
  return 0;
}

inline int sweep(const CommonOptions& opt, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(opt);
  std::ostringstream os;
  write_sweep_csv(run_sweep(cfg), os);
  write_file(out_path(opt, cfg.sweep_path), os.str());
  out << os.str();
  return 0;
}

inline int error_ode(const CommonOptions& opt, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(opt);
  const ObserverGains g = make_gains(cfg.alpha, cfg.beta, cfg.g0);
  ErrorPoint xi0 = initial_error_point(cfg);
  if (cfg.error_ode_z1) xi0.z1 = *cfg.error_ode_z1;
  if (cfg.error_ode_z2) xi0.z2 = *cfg.error_ode_z2;
  const auto samples = integrate_error_ode(xi0, g, cfg.dt, cfg.duration, cfg.decimation);
  std::ostringstream os;
  write_error_csv(samples, g, os);
  const std::string path = out_path(opt, cfg.error_ode_path);
  write_file(path, os.str());
  out << "wrote " << samples.size() << " rows to " << path << '\n';
  return 0;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Tilt observer for a non-rigid pendulum: simulation and stability analysis"};
  app.require_subcommand(1);

  CommonOptions opt;
  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Experiment config file (flat key = value)");
    sub->add_option("--out", opt.out_dir, "Directory for all outputs");
    sub->add_option("--seed", opt.seed, "Override noise.seed");
  };
  CLI::App* sim = app.add_subcommand("simulate", "Closed-loop run: CSV series and report");
  CLI::App* ana = app.add_subcommand("analyze", "Stability report for the configured gains");
  CLI::App* swp = app.add_subcommand("sweep", "Convergence time over a grid of (alpha, beta)");
  CLI::App* ode = app.add_subcommand("error-ode", "Integrate the error dynamics from an initial error point");
  for (CLI::App* sub : {sim, ana, swp, ode}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (sim->parsed()) return simulate(opt, out);
    if (ana->parsed()) return analyze(opt, out);
    if (swp->parsed()) return sweep(opt, out);
    return error_ode(opt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tilt::cli
