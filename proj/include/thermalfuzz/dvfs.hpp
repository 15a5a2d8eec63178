#pragma once

// Temperature-driven frequency governor.
//
//   T <  T_nom:  f = f_base * (1 + gamma * (T_nom - T) / (T_nom - T_min))
//   T >= T_nom:  f = f_base * (1 - alpha * (T - T_nom) / (T_max - T_nom))
//
// Temperatures outside [T_min, T_max] are clamped first.

#include <algorithm>

#include "thermalfuzz/thermal.hpp"

namespace thermalfuzz {

/// f(T) / f_base, in [1 - alpha, 1 + gamma].
inline double frequency_ratio(const GpuProfile& p, double temperature) {
  const double t = std::clamp(temperature, p.t_min, p.t_max);
  if (t < p.t_nominal) return 1.0 + p.gamma * ((p.t_nominal - t) / (p.t_nominal - p.t_min));
  return 1.0 - p.alpha * ((t - p.t_nominal) / (p.t_max - p.t_nominal));
}

/// Frequency in MHz.
inline double frequency(const GpuProfile& p, double temperature) {
  return p.f_base * frequency_ratio(p, temperature);
}

}  // namespace thermalfuzz
