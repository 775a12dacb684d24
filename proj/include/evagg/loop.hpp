#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "evagg/control.hpp"
#include "evagg/essm.hpp"
#include "evagg/fleet.hpp"
#include "evagg/ident.hpp"
#include "evagg/profiles.hpp"

namespace evagg {

struct RunLogRow {
  double t_s = 0;
  double delta_f_hz = 0;    // deviation at the start of the interval
  double p_ev_real_kw = 0;  // realized fleet power over the interval
  double p_ref_kw = 0;      // reference handed to the broadcast optimizer
  double dp_cg_mw = 0;      // conventional-generation setpoint change
  double err_p = 0;         // relative tracking error at the interval end
  int refit_flag = 0;
};
using RunLog = std::vector<RunLogRow>;

struct MetricsReport {
  double mape_pct = 0;
  double mae_mw = 0;
  double max_abs_df_hz = 0;
  double inband_pct = 0;  // share of intervals with |delta_f| inside the dead band
  int refits = 0;
  int rows = 0;
};

// Mean absolute percentage error; entries with |ref| <= 1e-6 are skipped.
double mape_pct(const std::vector<double>& ref, const std::vector<double>& actual);
double mean_abs_err(const std::vector<double>& ref, const std::vector<double>& actual);
MetricsReport compute_metrics(const RunLog& log, double f_deadband);

enum class ControllerKind { bhmm, essm, none };

struct LoopConfig {
  FleetScenario scenario;
  RegulationConfig reg;
  GridState grid0;            // inertia / damping / CG limits starting point
  int n_bins = 3;
  int n_hist = 299;           // historical day-streams (identification uses n_hist+1)
  int k_win = 60;             // identification window length
  double t_start_h = 17.0;
  double horizon_s = 5.0 * 3600;
  double err_refit = 0.05;    // tracking-error refit trigger
  double soc_noise_bound = 0; // reported-SOC corruption fraction
  ControllerKind controller = ControllerKind::bhmm;
  // Excitation caps by arrow direction: arrows that weaken charging
  // (charging->idle, idle->discharging, full->discharging) vs arrows that
  // restore it. Asymmetric defaults keep the excited fleet power
  // sign-definite so relative errors stay meaningful.
  double cap_discharge_side = 0.15;
  double cap_charge_side = 0.30;
  int excitation_hold = 4;    // steps between excitation redraws
  uint64_t seed = 0;
};

// Excitation vector applied at one step of one day-stream; constant across
// excitation_hold consecutive steps.
Eigen::VectorXd excitation_u(const LoopConfig& cfg, uint64_t day_tag, int step);

// One day-stream under excitation: fresh fleet, natural placement at
// t_begin_h, then n_steps of broadcast + step with (u, y) recorded.
AggregatedLog run_excitation_day(const LoopConfig& cfg, uint64_t day_tag,
                                 double t_begin_h, int n_steps, bool parallel_fleet);

// n_hist day-streams all covering [t_start - k_win dt, t_start + horizon].
std::vector<AggregatedLog> make_history(const LoopConfig& cfg, bool parallel = true);

struct PredictionRun {
  std::vector<double> t_s;
  std::vector<double> p_real, p_pred;          // realized vs predicted-ahead
  std::vector<double> band_upper, band_lower;  // predicted flexibility band
  std::vector<double> real_upper, real_lower;  // extreme-broadcast replicas
  std::vector<double> fit_seconds, fit_min_eigs;
  int em_failures = 0;
  int refits = 0;
};

// Excitation run with sliding-window refits every reg.n_p steps. Each refit
// re-anchors a filter on the live tail, predicts the next n_p outputs under
// the upcoming (known) excitation plus the flexibility band, and realizes
// the band with two cloned fleets driven by the extreme broadcasts.
PredictionRun prediction_run(const LoopConfig& cfg,
                             const std::vector<AggregatedLog>& history);

struct LoopResult {
  RunLog log;
  std::vector<double> fit_seconds, mpc_seconds, fit_min_eigs;
  int refits = 0;
  int em_failures = 0;
  int broadcast_bytes = 0;  // wire payload per cycle
  int dispatch_clamps = 0;
};

// Closed-loop frequency regulation over the horizon. The bhmm controller
// identifies from aggregate data only (never touches per-EV state); the essm
// controller reads the reported SOCs each step; none leaves the fleet as an
// uncontrolled load. history is only consulted by the bhmm controller.
LoopResult regulation_loop(const LoopConfig& cfg, const Profiles& prof,
                           const std::vector<AggregatedLog>& history);

}  // namespace evagg
