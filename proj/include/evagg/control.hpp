#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "evagg/bhmm.hpp"

namespace evagg {

struct GridState {
  double delta_f = 0;    // frequency deviation, Hz
  double p_cg = 0;       // conventional generation setpoint, MW
  double p_load = 0;     // latest profile samples, MW
  double p_wind = 0;
  double lambda = 0;     // droop gain, MW/Hz
  double inertia = 120;  // MW*s/Hz
  double damping = 20;   // MW/Hz
};

struct RegulationConfig {
  double f_deadband = 0.1;       // Hz
  double ramp_mw_per_min = 50;   // conventional-generation ramp limit
  double cg_min_mw = 0, cg_max_mw = 500;
  double dt_s = 15;              // control interval
  int n_p = 12;                  // refit / prediction horizon in intervals
  int swing_substeps = 15;       // Euler sub-intervals per control interval
  double q_w = 1.0;              // tracking weight
  double r_w = 1e-6;             // input effort weight
  double band_weight = 1e6;      // soft flexibility-band penalty
  double mpc_tol = 1e-8;
  int mpc_max_iter = 500;
  int lambda_bisect_iters = 30;
  double lambda_max = -1;        // <= 0 selects 2*(inertia/dt + damping)
  // Fraction of the dead band the regulation loop treats as its own
  // tolerance. Corrections aim at this inner edge, so the steady deviation
  // under a growing disturbance settles inside the grid band instead of
  // hovering just outside it.
  double ctrl_band_frac = 0.5;
};

// Droop response with dead band: zero inside, linear beyond with the
// threshold subtracted so the response is continuous at the edge.
double pi_regulation(double delta_f, double lambda, double f_deadband);

// One explicit-Euler step of the aggregate swing dynamics.
void swing_step(GridState& g, double p_imbalance_mw, double dt_s);

// Deviation one control interval ahead, assuming the unobserved disturbance
// persists at the level the damping currently absorbs, with the droop
// response held constant; substep Euler integration.
double predict_deviation(const GridState& g, const RegulationConfig& c, double lambda);

// Bisects for the smallest droop gain that pulls the predicted deviation
// back to the dead-band edge; returns the current gain when already inside.
double update_lambda(const GridState& g, const RegulationConfig& c);

struct DispatchDecision {
  double dp_ev_kw = 0;   // regulation power assigned to the fleet
  double dp_cg_mw = 0;   // setpoint change assigned to conventional generation
  double p_ref_kw = 0;   // fleet power reference = predicted + dp_ev
  bool clamped = false;  // prediction fell outside the flexibility band
};

// Splits a regulation demand between the fleet (first, up to its predicted
// headroom) and conventional generation (ramp- and capacity-limited).
// Demands and grid quantities in MW; fleet quantities in kW.
DispatchDecision dispatch(double dp_demand_mw, double p_pred_kw, double p_upper_kw,
                          double p_lower_kw, const GridState& g, const RegulationConfig& c);

struct MpcResult {
  Eigen::VectorXd u;
  int iters = 0;
  double kkt = 0;           // step-scaled projected-gradient residual
  bool band_infeasible = false;  // reference lies outside the predicted band
};

// One-step-ahead broadcast optimization: quadratic tracking cost plus input
// effort, soft flexibility-band penalty, box constraints. Projected gradient
// with exact line search on the piecewise-quadratic restriction.
MpcResult mpc_solve(const ModelParams& p, const Eigen::VectorXd& mu_now, double p_ref_kw,
                    double p_upper_kw, double p_lower_kw, const RegulationConfig& c);

// Fixed wire format: [n_bins u8][seq u8][two zero bytes][4N+2 float32 LE].
std::vector<uint8_t> encode_broadcast(const Eigen::VectorXd& u, int n_bins, uint8_t seq);
Eigen::VectorXd decode_broadcast(const std::vector<uint8_t>& payload,
                                 int* n_bins = nullptr, uint8_t* seq = nullptr);

}  // namespace evagg
