#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "evagg/rng.hpp"

namespace evagg {

// Operating mode of one EV. "IM" covers interior idle as well as the two
// boundary idle conditions (battery full / battery empty), which are told
// apart by comparing soc against the band edges.
enum class Mode : uint8_t { CM, IM, DM, FCM, OFFLINE };

struct EvAgent {
  uint64_t id = 0;
  double p_charge = 0;     // kW; chargers are symmetric, p_discharge == p_charge
  double p_discharge = 0;  // kW
  double eff_charge = 1;
  double eff_discharge = 1;
  double capacity = 0;     // kWh
  double t_arrive = 0;     // h, [0, 24)
  double t_depart = 0;     // h, [0, 24)
  bool overnight = false;  // connection interval wraps past midnight
  double soc_initial = 0;
  double soc_demanded = 0;
  double soc = 0;           // true state of charge
  double soc_reported = 0;  // what the aggregator is told; may be corrupted
  Mode mode = Mode::OFFLINE;
};

struct TruncNormal {
  double mean = 0, stddev = 1, lo = 0, hi = 1;
};

struct FleetScenario {
  int n_ev = 10000;
  // (charger level kW, population proportion); proportions must sum to 1.
  std::vector<std::pair<double, double>> charger_mixture = {
      {6.2, 0.8525}, {7.2, 0.1380}, {9.6, 0.0021}, {11.5, 0.0053}, {19.2, 0.0021}};
  double eff_lo = 0.88, eff_hi = 0.95;
  double cap_lo = 20.0, cap_hi = 30.0;  // kWh
  TruncNormal s_initial{0.3, 0.05, 0.2, 0.4};
  TruncNormal s_demanded{0.8, 0.03, 0.7, 0.9};
  double t_arrive_mean = 17.5, t_arrive_std = 3.4;  // folded into [0, 24)
  double t_depart_mean = 8.9, t_depart_std = 3.4;
  double s_min = 0.0, s_max = 1.0;
  double dt_s = 15.0;
  uint64_t seed = 0;
};

struct FleetLogRow {
  double t_s = 0;
  double p_kw = 0;        // aggregated power, discharge positive
  double p_upper_kw = 0;  // instantaneous flexibility bounds
  double p_lower_kw = 0;
  int n_cm = 0, n_im = 0, n_dm = 0, n_fcm = 0, n_off = 0;
};
using FleetLog = std::vector<FleetLogRow>;

// Snapshot taken while stepping: power and capability of the modes in effect
// over the interval, so the bound always brackets the realized power.
struct FleetStepStats {
  double p_kw = 0, p_upper_kw = 0, p_lower_kw = 0;
  int n_cm = 0, n_im = 0, n_dm = 0, n_fcm = 0, n_off = 0;
};

std::vector<EvAgent> sample_fleet(const FleetScenario& sc);

bool is_connected(const EvAgent& a, double clock_h);
double remaining_connected_h(const EvAgent& a, double clock_h);

// Advances true SOC by one interval for the agent's current mode; clamps to
// [s_min, s_max]. Returns true when the result sits at a band edge.
bool soc_step(EvAgent& a, double dt_s, double s_min, double s_max);

// Forced-charging trigger: remaining connection time no longer exceeds the
// time needed to reach soc_demanded at full charger rate.
bool fcm_check(const EvAgent& a, double clock_h);

// 1-based SOC bin over [s_min, s_max]; the top edge folds into bin n_bins.
int soc_bin(double soc, int n_bins, double s_min = 0.0, double s_max = 1.0);

// One simulation interval: arrivals/departures, forced-charging override,
// SOC advance, boundary absorption. Power is the aggregate of the modes in
// effect during the interval. Per-agent contributions land in slots and are
// summed serially in index order, so parallel == serial bit-for-bit.
FleetStepStats fleet_step(std::vector<EvAgent>& fleet, double clock_h, double dt_s,
                          double s_min, double s_max, bool parallel = true);

// Probabilistic mode switching from one broadcast vector u (4N+2 entries in
// [0,1]). Each eligible agent draws a single alpha in (0,1] from its own
// counter stream, so u=0 never fires and u=1 always does. Decisions read the
// true SOC only. Returns the number of agents that switched.
long apply_broadcast(std::vector<EvAgent>& fleet, const Eigen::VectorXd& u, int n_bins,
                     uint64_t seed, uint64_t step, double s_min = 0.0, double s_max = 1.0,
                     bool parallel = true);

// (upper, lower) kW: what the fleet could do right now if every agent were
// switched to its extreme admissible mode. FCM agents are pinned to charging.
std::pair<double, double> imm_flexibility(const std::vector<EvAgent>& fleet, double clock_h,
                                          double s_min = 0.0, double s_max = 1.0);

// Corrupts soc_reported with truncated-normal noise in +-bound_fraction*soc,
// clamped to [0,1]. True SOC untouched; draws come from a dedicated purpose
// stream so every other decision in the system is unaffected.
void inject_soc_noise(std::vector<EvAgent>& fleet, double bound_fraction,
                      uint64_t seed, uint64_t step);

// Places every connected agent where uninterrupted charging since its arrival
// would have put it (closed form), for starting experiments mid-day.
void fleet_init_natural(std::vector<EvAgent>& fleet, double clock_h, const FleetScenario& sc);

// Instantaneous aggregate power of the current modes (no stepping).
double fleet_power_instant(const std::vector<EvAgent>& fleet);

}  // namespace evagg
