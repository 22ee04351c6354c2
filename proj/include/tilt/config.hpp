#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tilt/plant.hpp"
#include "tilt/so3.hpp"

namespace tilt {

/// How R_c(0) is chosen from the requested initial tilt error.
enum class PivotFrameMode {
  /// R_c(0) is picked so that x2(0) - x2_hat(0) equals the requested error exactly.
  Consistent,
  /// R_c(0) = I; x2_hat(0) = e_z - error is renormalised when off the sphere.
  Identity,
};

struct ExperimentConfig {
  double duration = 10.0;
  double dt = 1e-3;
  int decimation = 10;

  double alpha = 19.8;
  double beta = 10.0;
  double g0 = 9.81;

  NoiseSpec noise;
  TrajectoryConfig trajectory;

  Vector3 x1_error0 = Vector3::Zero();
  Vector3 x2_error0{-1.87, 0.28, 0.39};
  PivotFrameMode pivot_frame = PivotFrameMode::Consistent;
  /// Hold the start-of-step sample over the whole step instead of sampling
  /// the start, middle and end.
  bool hold_inputs = false;

  double convergence_threshold = 0.05;
  double steady_state_from = 3.0;

  std::string csv_path = "run.csv";
  std::string report_path = "report.txt";
  std::string config_echo_path = "effective.cfg";

  std::vector<double> sweep_alpha{5.0, 10.0, 19.8, 30.0};
  std::vector<double> sweep_beta{1.0, 10.0, 40.0};
  std::string sweep_path = "sweep.csv";

  int analyze_samples = 1000;
  double analyze_horizon = 10.0;
  std::string analyze_path = "analysis.txt";

  /// Initial error point for error-ode; unset means "derive from the initial errors".
  std::optional<Vector3> error_ode_z1;
  std::optional<Vector3> error_ode_z2;
  std::string error_ode_path = "error_ode.csv";

  bool operator==(const ExperimentConfig&) const = default;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_values(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != ',') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(const std::string& key, std::string_view tok) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ConfigError(key, "expected a number, got '" + std::string(tok) + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(const std::string& key, std::string_view tok) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ConfigError(key, "expected an integer, got '" + std::string(tok) + "'");
  }
  return v;
}

inline std::vector<double> parse_list(const std::string& key, std::string_view value) {
  std::vector<double> out;
  for (auto tok : split_values(value)) out.push_back(parse_double(key, tok));
  if (out.empty()) throw ConfigError(key, "expected at least one number");
  return out;
}

inline Vector3 parse_vector3(const std::string& key, std::string_view value) {
  const auto v = parse_list(key, value);
  if (v.size() != 3) throw ConfigError(key, "expected 3 numbers, got " + std::to_string(v.size()));
  return {v[0], v[1], v[2]};
}

inline bool parse_bool(const std::string& key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + std::string(value) + "'");
}

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_list(const double* v, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

inline std::string format_vector3(const Vector3& v) { return format_list(v.data(), 3); }

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Member>
Field number_field(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, std::string_view v) {
            member(c) = parse_double(k, v);
          },
          [member](const ExperimentConfig& c) { return format_double(member(c)); }};
}

template <class Member>
Field vector_field(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, std::string_view v) {
            member(c) = parse_vector3(k, v);
          },
          [member](const ExperimentConfig& c) { return format_vector3(member(c)); }};
}

template <class Member>
Field string_field(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, std::string_view v) {
            if (v.empty()) throw ConfigError(k, "expected a non-empty string");
            member(c) = std::string(v);
          },
          [member](const ExperimentConfig& c) { return member(c); }};
}

template <class Member>
Field list_field(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, std::string_view v) { member(c) = parse_list(k, v); },
          [member](const ExperimentConfig& c) {
            const auto& l = member(c);
            return format_list(l.data(), l.size());
          }};
}

template <class Member>
Field optional_vector_field(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, std::string_view v) {
            if (v == "auto") {
              member(c).reset();
            } else {
              member(c) = parse_vector3(k, v);
            }
          },
          [member](const ExperimentConfig& c) {
            const auto& o = member(c);
            return o ? format_vector3(*o) : std::string("auto");
          }};
}

#define TILT_MEMBER(expr) [](auto& c) -> auto& { return expr; }

template <class Signal>
void add_signal_fields(std::map<std::string, Field>& f, const std::string& prefix, Signal sig) {
  f[prefix + ".amplitude"] = vector_field([sig](auto& c) -> auto& { return sig(c).amplitude; });
  f[prefix + ".frequency"] = vector_field([sig](auto& c) -> auto& { return sig(c).frequency; });
  f[prefix + ".phase"] = vector_field([sig](auto& c) -> auto& { return sig(c).phase; });
  f[prefix + ".offset"] = vector_field([sig](auto& c) -> auto& { return sig(c).offset; });
}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["duration"] = number_field(TILT_MEMBER(c.duration));
    f["dt"] = number_field(TILT_MEMBER(c.dt));
    f["record.decimation"] = {
        [](ExperimentConfig& c, const std::string& k, std::string_view v) { c.decimation = parse_integer<int>(k, v); },
        [](const ExperimentConfig& c) { return std::to_string(c.decimation); }};

    f["gains.alpha"] = number_field(TILT_MEMBER(c.alpha));
    f["gains.beta"] = number_field(TILT_MEMBER(c.beta));
    f["gains.g0"] = number_field(TILT_MEMBER(c.g0));

    f["noise.sigma_g"] = number_field(TILT_MEMBER(c.noise.sigma_g));
    f["noise.sigma_a"] = number_field(TILT_MEMBER(c.noise.sigma_a));
    f["noise.seed"] = {[](ExperimentConfig& c, const std::string& k,
                          std::string_view v) { c.noise.seed = parse_integer<std::uint64_t>(k, v); },
                       [](const ExperimentConfig& c) { return std::to_string(c.noise.seed); }};

    add_signal_fields(f, "trajectory.pivot.accel",
                      [](auto& c) -> auto& { return c.trajectory.pivot_accel; });
    f["trajectory.pivot.omega0"] = vector_field(TILT_MEMBER(c.trajectory.pivot_omega0));
    f["trajectory.pivot.yaw"] = number_field(TILT_MEMBER(c.trajectory.yaw));
    add_signal_fields(f, "trajectory.mount.omega",
                      [](auto& c) -> auto& { return c.trajectory.mount_omega; });
    f["trajectory.mount.p0"] = vector_field(TILT_MEMBER(c.trajectory.mount_p0));
    f["trajectory.mount.p_ref"] = vector_field(TILT_MEMBER(c.trajectory.mount_p_ref));
    f["trajectory.mount.kp"] = number_field(TILT_MEMBER(c.trajectory.kp));
    f["trajectory.mount.noise_std"] = number_field(TILT_MEMBER(c.trajectory.noise_std));
    f["trajectory.mount.noise_tau"] = number_field(TILT_MEMBER(c.trajectory.noise_tau));
    f["trajectory.g0"] = number_field(TILT_MEMBER(c.trajectory.g0));

    f["init.x1_error"] = vector_field(TILT_MEMBER(c.x1_error0));
    f["init.x2_error"] = vector_field(TILT_MEMBER(c.x2_error0));
    f["init.pivot_frame"] = {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                               if (v == "consistent") {
                                 c.pivot_frame = PivotFrameMode::Consistent;
                               } else if (v == "identity") {
                                 c.pivot_frame = PivotFrameMode::Identity;
                               } else {
                                 throw ConfigError(k, "expected consistent or identity, got '" + std::string(v) + "'");
                               }
                             },
                             [](const ExperimentConfig& c) {
                               return std::string(c.pivot_frame == PivotFrameMode::Consistent ? "consistent"
                                                                                              : "identity");
                             }};
    f["observer.hold_inputs"] = {
        [](ExperimentConfig& c, const std::string& k, std::string_view v) { c.hold_inputs = parse_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.hold_inputs ? "true" : "false"); }};

    f["report.convergence_threshold"] = number_field(TILT_MEMBER(c.convergence_threshold));
    f["report.steady_state_from"] = number_field(TILT_MEMBER(c.steady_state_from));

    f["output.csv"] = string_field(TILT_MEMBER(c.csv_path));
    f["output.report"] = string_field(TILT_MEMBER(c.report_path));
    f["output.config"] = string_field(TILT_MEMBER(c.config_echo_path));

    f["sweep.alpha"] = list_field(TILT_MEMBER(c.sweep_alpha));
    f["sweep.beta"] = list_field(TILT_MEMBER(c.sweep_beta));
    f["sweep.output"] = string_field(TILT_MEMBER(c.sweep_path));

    f["analyze.samples"] = {[](ExperimentConfig& c, const std::string& k,
                               std::string_view v) { c.analyze_samples = parse_integer<int>(k, v); },
                            [](const ExperimentConfig& c) { return std::to_string(c.analyze_samples); }};
    f["analyze.horizon"] = number_field(TILT_MEMBER(c.analyze_horizon));
    f["analyze.output"] = string_field(TILT_MEMBER(c.analyze_path));

    f["error_ode.z1"] = optional_vector_field(TILT_MEMBER(c.error_ode_z1));
    f["error_ode.z2"] = optional_vector_field(TILT_MEMBER(c.error_ode_z2));
    f["error_ode.output"] = string_field(TILT_MEMBER(c.error_ode_path));
    return f;
  }();
  return table;
}

#undef TILT_MEMBER

}  // namespace detail

/// Checks every invariant, naming the first offending key.
inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(c.duration > 0.0, "duration", "must be > 0");
  require(c.dt > 0.0, "dt", "must be > 0");
  require(c.dt <= c.duration, "dt", "must not exceed duration");
  require(c.decimation >= 1, "record.decimation", "must be >= 1");
  require(c.alpha > 0.0, "gains.alpha", "must be > 0");
  require(c.beta > 0.0, "gains.beta", "must be > 0");
  require(c.g0 > 0.0, "gains.g0", "must be > 0");
  require(c.beta * c.g0 < c.alpha * c.alpha, "gains.beta", "gains.beta * gains.g0 must be < gains.alpha^2");
  require(c.noise.sigma_g >= 0.0, "noise.sigma_g", "must be >= 0");
  require(c.noise.sigma_a >= 0.0, "noise.sigma_a", "must be >= 0");
  require((c.trajectory.pivot_accel.frequency.array() > 0.0).all(), "trajectory.pivot.accel.frequency",
          "must be > 0");
  require((c.trajectory.mount_omega.frequency.array() > 0.0).all(), "trajectory.mount.omega.frequency",
          "must be > 0");
  require(c.trajectory.kp > 0.0, "trajectory.mount.kp", "must be > 0");
  require(c.trajectory.noise_std >= 0.0, "trajectory.mount.noise_std", "must be >= 0");
  require(c.trajectory.noise_tau > 0.0, "trajectory.mount.noise_tau", "must be > 0");
  require(c.trajectory.g0 > 0.0, "trajectory.g0", "must be > 0");
  require(c.x2_error0.norm() < 2.0, "init.x2_error", "norm must be < 2");
  require(c.convergence_threshold > 0.0, "report.convergence_threshold", "must be > 0");
  require(c.steady_state_from >= 0.0, "report.steady_state_from", "must be >= 0");
  require(c.analyze_samples >= 1, "analyze.samples", "must be >= 1");
  require(c.analyze_horizon > 0.0, "analyze.horizon", "must be > 0");
  for (double a : c.sweep_alpha) require(a > 0.0, "sweep.alpha", "entries must be > 0");
  for (double b : c.sweep_beta) require(b > 0.0, "sweep.beta", "entries must be > 0");
  if (c.error_ode_z2) {
    require(std::abs((Vector3::UnitZ() - *c.error_ode_z2).norm() - 1.0) <= 1e-9, "error_ode.z2",
            "must satisfy |e_z - z2| = 1");
  }
}

/// Parses flat `key = value` text. Lines may carry `#` comments; a line of
/// the form `[section]` prefixes the following keys with `section.`.
inline ExperimentConfig load_config(std::string_view text) {
  ExperimentConfig cfg;
  const auto& table = detail::fields();
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", "line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(detail::trim(line.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown key");
    it->second.set(cfg, key, detail::trim(line.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

/// Effective configuration, one `key = value` line per known key.
inline std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace tilt
