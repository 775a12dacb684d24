#include "evagg/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evagg {

namespace {

double wrap24(double h) {
  double c = std::fmod(h, 24.0);
  return c < 0.0 ? c + 24.0 : c;
}

}  // namespace

std::vector<EvAgent> sample_fleet(const FleetScenario& sc) {
  if (sc.n_ev <= 0) throw std::invalid_argument("sample_fleet: n_ev must be positive");
  if (sc.charger_mixture.empty())
    throw std::invalid_argument("sample_fleet: empty charger mixture");
  double total = 0;
  for (const auto& [kw, prop] : sc.charger_mixture) {
    if (kw <= 0 || prop < 0)
      throw std::invalid_argument("sample_fleet: bad charger mixture entry");
    total += prop;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("sample_fleet: charger proportions must sum to 1");
  if (sc.eff_lo > sc.eff_hi || sc.cap_lo > sc.cap_hi || sc.cap_lo <= 0 || sc.eff_lo <= 0)
    throw std::invalid_argument("sample_fleet: inverted or non-positive parameter bounds");
  if (sc.s_min >= sc.s_max)
    throw std::invalid_argument("sample_fleet: s_min must be below s_max");

  std::vector<EvAgent> fleet(static_cast<size_t>(sc.n_ev));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < sc.n_ev; ++i) {
    Rng rng(sc.seed, static_cast<uint64_t>(i), Purpose::sampling);
    EvAgent a;
    a.id = static_cast<uint64_t>(i);
    const double z = rng.uniform() * total;
    double acc = 0;
    a.p_charge = sc.charger_mixture.back().first;
    for (const auto& [kw, prop] : sc.charger_mixture) {
      acc += prop;
      if (z < acc) {
        a.p_charge = kw;
        break;
      }
    }
    a.p_discharge = a.p_charge;
    a.eff_charge = rng.uniform(sc.eff_lo, sc.eff_hi);
    a.eff_discharge = a.eff_charge;
    a.capacity = rng.uniform(sc.cap_lo, sc.cap_hi);
    a.soc_initial = rng.trunc_normal(sc.s_initial.mean, sc.s_initial.stddev,
                                     sc.s_initial.lo, sc.s_initial.hi);
    a.soc_demanded = rng.trunc_normal(sc.s_demanded.mean, sc.s_demanded.stddev,
                                      sc.s_demanded.lo, sc.s_demanded.hi);
    a.t_arrive = rng.wrapped_normal_24(sc.t_arrive_mean, sc.t_arrive_std);
    a.t_depart = rng.wrapped_normal_24(sc.t_depart_mean, sc.t_depart_std);
    a.overnight = a.t_depart <= a.t_arrive;
    a.soc = a.soc_initial;
    a.soc_reported = a.soc;
    a.mode = Mode::OFFLINE;
    fleet[static_cast<size_t>(i)] = a;
  }
  return fleet;
}

bool is_connected(const EvAgent& a, double clock_h) {
  const double c = wrap24(clock_h);
  if (a.overnight) return c >= a.t_arrive || c < a.t_depart;
  return c >= a.t_arrive && c < a.t_depart;
}

double remaining_connected_h(const EvAgent& a, double clock_h) {
  return std::fmod(a.t_depart - wrap24(clock_h) + 24.0, 24.0);
}

bool soc_step(EvAgent& a, double dt_s, double s_min, double s_max) {
  const double dt_h = dt_s / 3600.0;
  double s = a.soc;
  switch (a.mode) {
    case Mode::CM:
    case Mode::FCM:
      s += a.p_charge * a.eff_charge * dt_h / a.capacity;
      break;
    case Mode::DM:
      s -= a.p_discharge * dt_h / (a.eff_discharge * a.capacity);
      break;
    default:
      break;
  }
  a.soc = std::clamp(s, s_min, s_max);
  return a.soc <= s_min || a.soc >= s_max;
}

bool fcm_check(const EvAgent& a, double clock_h) {
  if (a.soc >= a.soc_demanded) return false;
  const double required_h =
      (a.soc_demanded - a.soc) * a.capacity / (a.p_charge * a.eff_charge);
  return required_h >= remaining_connected_h(a, clock_h);
}

int soc_bin(double soc, int n_bins, double s_min, double s_max) {
  if (n_bins <= 0) throw std::invalid_argument("soc_bin: n_bins must be positive");
  if (s_min >= s_max) throw std::invalid_argument("soc_bin: bad SOC band");
  const double w = (s_max - s_min) / n_bins;
  const int b = static_cast<int>(std::floor((soc - s_min) / w)) + 1;
  return std::clamp(b, 1, n_bins);
}

FleetStepStats fleet_step(std::vector<EvAgent>& fleet, double clock_h, double dt_s,
                          double s_min, double s_max, bool parallel) {
  const int n = static_cast<int>(fleet.size());
  std::vector<double> p(fleet.size()), up(fleet.size()), lo(fleet.size());
  std::vector<uint8_t> mode_slot(fleet.size());
  const double t_end = clock_h + dt_s / 3600.0;

#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    EvAgent& a = fleet[static_cast<size_t>(i)];
    // Arrivals and departures keyed off the end-of-interval clock, so an
    // agent is "present this step" iff it is still present when it ends.
    const bool conn = is_connected(a, t_end);
    if (a.mode == Mode::OFFLINE && conn) {
      a.mode = Mode::CM;
      a.soc = a.soc_initial;
      a.soc_reported = a.soc;
    } else if (a.mode != Mode::OFFLINE && !conn) {
      a.mode = Mode::OFFLINE;
    }
    if (a.mode != Mode::OFFLINE) {
      if (a.mode == Mode::FCM && a.soc >= a.soc_demanded) a.mode = Mode::CM;
      if (a.mode != Mode::FCM && fcm_check(a, clock_h)) a.mode = Mode::FCM;
    }

    double pw = 0, pu = 0, pl = 0;
    switch (a.mode) {
      case Mode::CM:
        pw = -a.p_charge;
        pu = (a.soc > s_min) ? a.p_discharge : 0.0;
        pl = (a.soc < s_max) ? -a.p_charge : 0.0;
        break;
      case Mode::DM:
        pw = a.p_discharge;
        pu = (a.soc > s_min) ? a.p_discharge : 0.0;
        pl = (a.soc < s_max) ? -a.p_charge : 0.0;
        break;
      case Mode::IM:
        pu = (a.soc > s_min) ? a.p_discharge : 0.0;
        pl = (a.soc < s_max) ? -a.p_charge : 0.0;
        break;
      case Mode::FCM:
        pw = -a.p_charge;
        pu = -a.p_charge;  // pinned: forced charging is not curtailable
        pl = -a.p_charge;
        break;
      case Mode::OFFLINE:
        break;
    }
    p[static_cast<size_t>(i)] = pw;
    up[static_cast<size_t>(i)] = pu;
    lo[static_cast<size_t>(i)] = pl;
    mode_slot[static_cast<size_t>(i)] = static_cast<uint8_t>(a.mode);

    if (a.mode != Mode::OFFLINE) {
      soc_step(a, dt_s, s_min, s_max);
      // Batteries that hit a band edge idle there until told otherwise.
      if ((a.mode == Mode::CM || a.mode == Mode::FCM) && a.soc >= s_max)
        a.mode = Mode::IM;
      else if (a.mode == Mode::DM && a.soc <= s_min)
        a.mode = Mode::IM;
    }
  }

  FleetStepStats st;
  for (int i = 0; i < n; ++i) {
    st.p_kw += p[static_cast<size_t>(i)];
    st.p_upper_kw += up[static_cast<size_t>(i)];
    st.p_lower_kw += lo[static_cast<size_t>(i)];
    switch (static_cast<Mode>(mode_slot[static_cast<size_t>(i)])) {
      case Mode::CM: ++st.n_cm; break;
      case Mode::IM: ++st.n_im; break;
      case Mode::DM: ++st.n_dm; break;
      case Mode::FCM: ++st.n_fcm; break;
      case Mode::OFFLINE: ++st.n_off; break;
    }
  }
  return st;
}

long apply_broadcast(std::vector<EvAgent>& fleet, const Eigen::VectorXd& u, int n_bins,
                     uint64_t seed, uint64_t step, double s_min, double s_max,
                     bool parallel) {
  const int N = n_bins;
  if (N <= 0) throw std::invalid_argument("apply_broadcast: n_bins must be positive");
  if (u.size() != 4 * N + 2)
    throw std::invalid_argument("apply_broadcast: control vector has wrong length");
  for (Eigen::Index j = 0; j < u.size(); ++j)
    if (!(u[j] >= 0.0 && u[j] <= 1.0))
      throw std::invalid_argument("apply_broadcast: control entries must lie in [0,1]");

  const uint64_t step_seed =
      hash_mix(seed, step, static_cast<uint64_t>(Purpose::switching), 0);
  const int n = static_cast<int>(fleet.size());
  long switched = 0;

#pragma omp parallel for schedule(static) reduction(+ : switched) if (parallel)
  for (int i = 0; i < n; ++i) {
    EvAgent& a = fleet[static_cast<size_t>(i)];
    if (a.mode == Mode::OFFLINE || a.mode == Mode::FCM) continue;
    const uint64_t r =
        hash_mix(step_seed, a.id, static_cast<uint64_t>(Purpose::switching), 1);
    const double alpha = (static_cast<double>(r >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]

    if (a.mode == Mode::CM) {
      const int b = soc_bin(a.soc, N, s_min, s_max) - 1;
      if (alpha <= u[b]) { a.mode = Mode::IM; ++switched; }
    } else if (a.mode == Mode::DM) {
      const int b = soc_bin(a.soc, N, s_min, s_max) - 1;
      if (alpha <= u[2 * N + b]) { a.mode = Mode::IM; ++switched; }
    } else {  // IM: boundary idles listen to their dedicated entries only
      if (a.soc >= s_max) {
        if (alpha <= u[4 * N + 1]) { a.mode = Mode::DM; ++switched; }
      } else if (a.soc <= s_min) {
        if (alpha <= u[4 * N]) { a.mode = Mode::CM; ++switched; }
      } else {
        const int b = soc_bin(a.soc, N, s_min, s_max) - 1;
        const double to_dm = u[N + b];
        const double to_cm = u[3 * N + b];
        // Disjoint alpha intervals: the two competing requests cannot both
        // fire, and their joint probability is capped at 1.
        if (alpha <= to_dm) { a.mode = Mode::DM; ++switched; }
        else if (alpha <= std::min(to_dm + to_cm, 1.0)) { a.mode = Mode::CM; ++switched; }
      }
    }
  }
  return switched;
}

std::pair<double, double> imm_flexibility(const std::vector<EvAgent>& fleet,
                                          double /*clock_h*/, double s_min, double s_max) {
  double upper = 0, lower = 0;
  for (const auto& a : fleet) {
    if (a.mode == Mode::OFFLINE) continue;
    if (a.mode == Mode::FCM) {
      upper += -a.p_charge;
      lower += -a.p_charge;
      continue;
    }
    if (a.soc > s_min) upper += a.p_discharge;
    if (a.soc < s_max) lower += -a.p_charge;
  }
  return {upper, lower};
}

void inject_soc_noise(std::vector<EvAgent>& fleet, double bound_fraction,
                      uint64_t seed, uint64_t step) {
  if (bound_fraction < 0)
    throw std::invalid_argument("inject_soc_noise: negative bound fraction");
  const int n = static_cast<int>(fleet.size());
  if (bound_fraction == 0) {
    for (auto& a : fleet) a.soc_reported = a.soc;
    return;
  }
  const uint64_t step_seed =
      hash_mix(seed, step, static_cast<uint64_t>(Purpose::soc_noise), 0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    EvAgent& a = fleet[static_cast<size_t>(i)];
    // One base draw scaled by the error band: runs that differ only in the
    // bound share every draw, so their reports differ by scale alone.
    Rng rng(step_seed, a.id, Purpose::soc_noise);
    const double eps = bound_fraction * a.soc * rng.trunc_normal(0.0, 2.0, -1.0, 1.0);
    a.soc_reported = std::clamp(a.soc + eps, 0.0, 1.0);
  }
}

void fleet_init_natural(std::vector<EvAgent>& fleet, double clock_h, const FleetScenario& sc) {
  for (auto& a : fleet) {
    if (!is_connected(a, clock_h)) {
      a.mode = Mode::OFFLINE;
      continue;
    }
    const double h_conn = std::fmod(clock_h - a.t_arrive + 24.0, 24.0);
    const double soc =
        a.soc_initial + a.p_charge * a.eff_charge * h_conn / a.capacity;
    if (soc >= sc.s_max) {
      a.soc = sc.s_max;
      a.mode = Mode::IM;
    } else {
      a.soc = soc;
      a.mode = fcm_check(a, clock_h) ? Mode::FCM : Mode::CM;
    }
    a.soc_reported = a.soc;
  }
}

double fleet_power_instant(const std::vector<EvAgent>& fleet) {
  double p = 0;
  for (const auto& a : fleet) {
    if (a.mode == Mode::CM || a.mode == Mode::FCM) p -= a.p_charge;
    else if (a.mode == Mode::DM) p += a.p_discharge;
  }
  return p;
}

}  // namespace evagg
