#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tilt/analysis.hpp"
#include "tilt/simulation.hpp"

namespace tilt {

inline const char* const kRunCsvHeader =
    "t,x2_x,x2_y,x2_z,x2hat_x,x2hat_y,x2hat_z,x1err_x,x1err_y,x1err_z,x2err_x,x2err_y,x2err_z,V,Vdot,"
    "ya_x,ya_y,ya_z,yg_x,yg_y,yg_z";

namespace detail {

inline std::string sig9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void put(std::ostream& os, double v) { os << ',' << sig9(v); }
inline void put(std::ostream& os, const Vector3& v) {
  for (int i = 0; i < 3; ++i) put(os, v[i]);
}

inline std::string optional_value(const std::optional<double>& v) { return v ? format_double(*v) : "none"; }

}  // namespace detail

inline void write_csv(const std::vector<RunRecord>& records, std::ostream& os) {
  os << kRunCsvHeader << '\n';
  for (const RunRecord& r : records) {
    os << detail::sig9(r.t);
    detail::put(os, r.x2);
    detail::put(os, r.x2_hat);
    detail::put(os, r.x1_error);
    detail::put(os, r.x2_error);
    detail::put(os, r.V);
    detail::put(os, r.V_rate);
    detail::put(os, r.y_a);
    detail::put(os, r.y_g);
    os << '\n';
  }
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << contents;
  if (!f) throw std::runtime_error("failed writing " + path);
}

inline void emit_csv(const std::vector<RunRecord>& records, const std::string& path) {
  std::ostringstream os;
  write_csv(records, os);
  write_file(path, os.str());
}

inline void write_error_csv(const std::vector<ErrorSample>& samples, const ObserverGains& gains, std::ostream& os) {
  os << "t,z1_x,z1_y,z1_z,z2_x,z2_y,z2_z,V,Vdot\n";
  for (const ErrorSample& s : samples) {
    os << detail::sig9(s.t);
    detail::put(os, s.xi.z1);
    detail::put(os, s.xi.z2);
    detail::put(os, lyapunov(s.xi, gains));
    detail::put(os, lyapunov_rate(s.xi, gains));
    os << '\n';
  }
}

inline void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& os) {
  os << "alpha,beta,G0,status,convergence_time,steady_state_rms\n";
  for (const SweepCell& c : cells) {
    os << detail::sig9(c.alpha) << ',' << detail::sig9(c.beta) << ',' << detail::sig9(c.G0) << ',';
    if (c.rejected) {
      os << "rejected,,\n";
    } else if (!c.error.empty()) {
      os << "failed,,\n";
    } else {
      os << "ok," << (c.convergence_time ? detail::sig9(*c.convergence_time) : std::string("none")) << ','
         << detail::sig9(c.steady_state_rms) << '\n';
    }
  }
}

/// Flat key = value summary of a closed-loop run.
inline std::string format_report(const SimulationResult& r, const ExperimentConfig& cfg) {
  const StabilityReport& rep = r.report;
  std::ostringstream os;
  os << "G0 = " << detail::format_double(rep.G0) << '\n';
  os << "unstable_root = " << detail::format_double(rep.unstable_root) << '\n';
  os << "equilibrium.origin.z1 = " << detail::format_vector3(rep.equilibria.first.z1) << '\n';
  os << "equilibrium.origin.z2 = " << detail::format_vector3(rep.equilibria.first.z2) << '\n';
  os << "equilibrium.second.z1 = " << detail::format_vector3(rep.equilibria.second.z1) << '\n';
  os << "equilibrium.second.z2 = " << detail::format_vector3(rep.equilibria.second.z2) << '\n';
  os << "initial.x2 = " << detail::format_vector3(r.initial.x2.vec()) << '\n';
  os << "initial.x2_hat = " << detail::format_vector3(r.initial.x2_hat.vec()) << '\n';
  os << "initial.x2_error_applied = " << detail::format_vector3(r.initial.x2_error_applied) << '\n';
  os << "initial.renormalized = " << (r.initial.renormalized ? "true" : "false") << '\n';
  if (!rep.V_series.empty()) os << "V0 = " << detail::format_double(rep.V_series.front().v) << '\n';
  os << "convergence_threshold = " << detail::format_double(cfg.convergence_threshold) << '\n';
  os << "convergence_time = " << detail::optional_value(rep.convergence_time) << '\n';
  os << "epsilon = " << detail::optional_value(rep.epsilon) << '\n';
  os << "exp_rate = " << detail::optional_value(rep.exp_rate) << '\n';
  os << "steady_state_from = " << detail::format_double(cfg.steady_state_from) << '\n';
  os << "steady_state_rms_x2_error = " << detail::format_double(r.steady_state_rms) << '\n';
  os << "final.x2_error_norm = "
     << detail::format_double(r.trace.x2_error_norm.empty() ? 0.0 : r.trace.x2_error_norm.back()) << '\n';
  return os.str();
}

}  // namespace tilt
