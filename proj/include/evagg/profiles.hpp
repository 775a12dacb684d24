#pragma once

#include <cstdint>
#include <vector>

namespace evagg {

struct ProfilePoint {
  double t_s = 0;
  double p_wind_mw = 0;
  double p_load_mw = 0;
};

// Piecewise-linear wind/load traces sampled on a regular grid.
struct Profiles {
  std::vector<ProfilePoint> pts;  // ascending t_s

  double wind_at(double t_s) const;
  double load_at(double t_s) const;
};

struct ProfileConfig {
  double t0_s = 17.0 * 3600;
  double horizon_s = 5.0 * 3600;
  double step_s = 60.0;
  double load_base_mw = 460.0;
  double wind_base_mw = 25.0;
  // Smooth evening peak added to the load (cosine bump).
  double peak_mw = 45.0;
  double peak_center_s = 20.0 * 3600;
  double peak_width_s = 2.5 * 3600;
  // Sinusoidal components (load side) at 20/60/180 min periods.
  double amp20_mw = 3.0, amp60_mw = 5.0, amp180_mw = 7.0;
  double wind_amp_mw = 3.0;      // slow wind oscillation (45 min period)
  double noise_mw = 1.0;         // scale of the smoothed random component
  uint64_t seed = 0;
};

// Deterministic synthetic day: base + peak + sinusoids + a smooth random
// walk (increment-limited, exponentially faded to stay bounded).
Profiles synth_profiles(const ProfileConfig& c);

// Flat traces (for quiescent closed-loop tests).
Profiles flat_profiles(double t0_s, double horizon_s, double step_s,
                       double wind_mw, double load_mw);

}  // namespace evagg
