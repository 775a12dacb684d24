#include "evagg/profiles.hpp"

#include <cmath>
#include <stdexcept>

#include "evagg/rng.hpp"

namespace evagg {

namespace {

double interp(const std::vector<ProfilePoint>& pts, double t_s, bool wind) {
  if (pts.empty()) throw std::runtime_error("profiles: empty trace");
  const auto value = [&](const ProfilePoint& p) {
    return wind ? p.p_wind_mw : p.p_load_mw;
  };
  if (t_s <= pts.front().t_s) return value(pts.front());
  if (t_s >= pts.back().t_s) return value(pts.back());
  // Regular grid: jump straight to the bracketing segment.
  const double step = (pts.back().t_s - pts.front().t_s) / (pts.size() - 1);
  size_t i = static_cast<size_t>((t_s - pts.front().t_s) / step);
  if (i + 1 >= pts.size()) i = pts.size() - 2;
  while (pts[i + 1].t_s < t_s && i + 2 < pts.size()) ++i;
  while (pts[i].t_s > t_s && i > 0) --i;
  const double w = (t_s - pts[i].t_s) / (pts[i + 1].t_s - pts[i].t_s);
  return (1.0 - w) * value(pts[i]) + w * value(pts[i + 1]);
}

}  // namespace

double Profiles::wind_at(double t_s) const { return interp(pts, t_s, true); }
double Profiles::load_at(double t_s) const { return interp(pts, t_s, false); }

Profiles synth_profiles(const ProfileConfig& c) {
  if (c.step_s <= 0 || c.horizon_s <= 0)
    throw std::invalid_argument("synth_profiles: bad grid");
  const int n = static_cast<int>(std::floor(c.horizon_s / c.step_s)) + 1;
  Profiles pr;
  pr.pts.resize(static_cast<size_t>(n));
  Rng rng_l(c.seed, 0, Purpose::profile);
  Rng rng_w(c.seed, 1, Purpose::profile);
  double walk_l = 0, walk_w = 0;
  for (int i = 0; i < n; ++i) {
    const double t = c.t0_s + i * c.step_s;
    // Bounded smooth noise: faded random walk with per-sample increments
    // scaled to noise_mw at the 60 s grid.
    const double inc = c.noise_mw * std::sqrt(c.step_s / 60.0) * 0.25;
    walk_l = 0.98 * walk_l + inc * rng_l.normal();
    walk_w = 0.98 * walk_w + inc * rng_w.normal();
    const double x = t - c.t0_s;
    double load = c.load_base_mw;
    load += c.amp20_mw * std::sin(2.0 * M_PI * x / 1200.0);
    load += c.amp60_mw * std::sin(2.0 * M_PI * x / 3600.0 + 0.7);
    load += c.amp180_mw * std::sin(2.0 * M_PI * x / 10800.0 + 1.9);
    const double z = (t - c.peak_center_s) / c.peak_width_s;
    if (std::abs(z) < 1.0) load += c.peak_mw * 0.5 * (1.0 + std::cos(M_PI * z));
    load += walk_l;
    double wind = c.wind_base_mw;
    wind += c.wind_amp_mw * std::sin(2.0 * M_PI * x / 2700.0 + 0.3);
    wind += walk_w;
    if (wind < 0) wind = 0;
    pr.pts[static_cast<size_t>(i)] = {t, wind, load};
  }
  return pr;
}

Profiles flat_profiles(double t0_s, double horizon_s, double step_s, double wind_mw,
                       double load_mw) {
  if (step_s <= 0 || horizon_s <= 0)
    throw std::invalid_argument("flat_profiles: bad grid");
  const int n = static_cast<int>(std::floor(horizon_s / step_s)) + 1;
  Profiles pr;
  pr.pts.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    pr.pts[static_cast<size_t>(i)] = {t0_s + i * step_s, wind_mw, load_mw};
  return pr;
}

}  // namespace evagg
