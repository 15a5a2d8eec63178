#pragma once

// GPU temperature simulation by Newton's law of cooling.
//
//   T(t) = T_env + (T_initial - T_env) * exp(-k t)
//
// The six standard scenarios pair the device's minimum, nominal and maximum
// temperatures as (initial -> ambient).

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace thermalfuzz {

/// Thermal and frequency constants of one GPU model.
struct GpuProfile {
  double k = 0.015;          ///< cooling coefficient, 1/s
  double t_min = -40.0;      ///< degC
  double t_max = 90.0;       ///< degC
  double t_nominal = 40.0;   ///< degC
  double f_base = 2520.0;    ///< MHz at t_nominal
  double alpha = 0.15;       ///< high-temperature throttling coefficient
  double gamma = 0.05;       ///< low-temperature scaling coefficient

  void validate() const {
    if (!(k > 0.0)) throw std::invalid_argument("GpuProfile: k must be > 0");
    if (!(f_base > 0.0)) throw std::invalid_argument("GpuProfile: f_base must be > 0");
    if (!(t_min < t_nominal && t_nominal < t_max))
      throw std::invalid_argument("GpuProfile: require t_min < t_nominal < t_max");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("GpuProfile: alpha must be in [0, 1)");
    if (!(gamma >= 0.0)) throw std::invalid_argument("GpuProfile: gamma must be >= 0");
  }

  friend bool operator==(const GpuProfile&, const GpuProfile&) = default;
};

/// The shipped RTX 4090D profile.
inline GpuProfile default_profile() { return GpuProfile{}; }

struct ThermalScenario {
  int id = 0;
  double t_initial = 0.0;
  double t_env = 0.0;
  std::string name;
};

struct ThermalState {
  double t = 0.0;            ///< elapsed seconds
  double temperature = 0.0;  ///< degC
};

/// Closed-form temperature after `t` seconds.
inline double temperature_at(const GpuProfile& profile, const ThermalScenario& scenario, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("temperature_at: t must be >= 0");
  return scenario.t_env + (scenario.t_initial - scenario.t_env) * std::exp(-profile.k * t);
}

/// Advances a state by `dt` seconds using the exact exponential update.
inline ThermalState step(const ThermalState& state, const ThermalScenario& scenario, const GpuProfile& profile,
                         double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
  return ThermalState{state.t + dt,
                      scenario.t_env + (state.temperature - scenario.t_env) * std::exp(-profile.k * dt)};
}

inline ThermalState initial_state(const ThermalScenario& scenario) { return ThermalState{0.0, scenario.t_initial}; }

/// The six heating/cooling scenarios, ids 1..6, as (t_initial -> t_env).
inline std::vector<ThermalScenario> standard_scenarios(const GpuProfile& p) {
  p.validate();
  return {
      {1, p.t_min, p.t_max, "Computing in Cold Environment with Heavy Workloads"},
      {2, p.t_min, p.t_nominal, "Computing in Cold Environment with Nominal Workloads"},
      {3, p.t_nominal, p.t_max, "Computing in Nominal Environment with Heavy Workloads"},
      {4, p.t_max, p.t_min, "Cooling in Cold Environment after Heavy Workloads"},
      {5, p.t_nominal, p.t_min, "Cooling in Cold Environment after Nominal Workloads"},
      {6, p.t_max, p.t_nominal, "Cooling in Nominal Environment after Heavy Workloads"},
  };
}

inline ThermalScenario standard_scenario(const GpuProfile& p, int id) {
  if (id < 1 || id > 6) throw std::out_of_range("standard_scenario: id must be in 1..6");
  return standard_scenarios(p)[static_cast<std::size_t>(id - 1)];
}

/// A scenario pinned at one temperature (initial == ambient). Not one of the
/// standard six; used for nominal-equivalence checks.
inline ThermalScenario constant_scenario(double temperature, std::string name = "constant") {
  return ThermalScenario{0, temperature, temperature, std::move(name)};
}

// --- profile file -----------------------------------------------------------

inline nlohmann::ordered_json profile_to_json(const GpuProfile& p) {
  nlohmann::ordered_json j;
  j["k"] = p.k;
  j["t_min"] = p.t_min;
  j["t_max"] = p.t_max;
  j["t_nominal"] = p.t_nominal;
  j["f_base_mhz"] = p.f_base;
  j["alpha"] = p.alpha;
  j["gamma"] = p.gamma;
  return j;
}

inline GpuProfile profile_from_json(const nlohmann::json& j) {
  GpuProfile p;
  p.k = j.at("k").get<double>();
  p.t_min = j.at("t_min").get<double>();
  p.t_max = j.at("t_max").get<double>();
  p.t_nominal = j.at("t_nominal").get<double>();
  p.f_base = j.at("f_base_mhz").get<double>();
  p.alpha = j.at("alpha").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.validate();
  return p;
}

inline GpuProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile file: " + path.string());
  return profile_from_json(nlohmann::json::parse(in));
}

}  // namespace thermalfuzz
