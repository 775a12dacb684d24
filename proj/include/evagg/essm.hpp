#pragma once

#include <vector>

#include <Eigen/Dense>

#include "evagg/bhmm.hpp"
#include "evagg/fleet.hpp"

namespace evagg {

// Population averages over the currently connected EVs.
struct FleetStats {
  double eta_bar = 0.915;   // round-trip-symmetric efficiency
  double q_bar_kwh = 25.0;  // battery capacity
  double p_ac_kw = 6.4005;  // charger level (mixture mean by default)
  double p_ad_kw = 6.4005;
  int n_connected = 0;      // population scale for the output rows
};

FleetStats connected_stats(const std::vector<EvAgent>& fleet);
FleetStats default_stats();  // scenario-default averages, n_connected = 0

struct OutputTriple {
  double p_kw = 0, p_upper_kw = 0, p_lower_kw = 0;
};

// Occupancy-fraction state-space model: x+ = A x + B u', outputs C x.
// A carries the SOC drift of charging/discharging bins; B routes explicit
// mass transfers along the control arrows; C rows are power, upper bound,
// lower bound.
struct EssmModel {
  int n_bins = 0;
  int n_ev = 0;
  double p_ac = 0, p_ad = 0;
  Eigen::MatrixXd A, B, C;
};

EssmModel build_essm(const FleetStats& stats, int n_bins, double dt_s,
                     double s_min = 0.0, double s_max = 1.0);

// Rejects negative transfers and transfers exceeding the source mass
// (per entry and per source total).
Eigen::VectorXd essm_step(const EssmModel& m, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u_prime);

OutputTriple essm_output(const EssmModel& m, const Eigen::VectorXd& x);

// Fraction-based inputs u (switching probabilities) vs mass-based u'
// (explicit transfers): u_j = u'_j / x_src, with 0/0 -> 0.
Eigen::VectorXd u_to_uprime(const Eigen::VectorXd& u, const Eigen::VectorXd& x, int n_bins);
Eigen::VectorXd uprime_to_u(const Eigen::VectorXd& u_prime, const Eigen::VectorXd& x, int n_bins);

// Occupancy fractions of the connected sub-fleet. use_reported classifies by
// soc_reported instead of the true SOC (what an aggregator with noisy
// telemetry would see). Throws if nobody is connected.
Eigen::VectorXd fleet_state_vector(const std::vector<EvAgent>& fleet, int n_bins,
                                   double s_min = 0.0, double s_max = 1.0,
                                   bool use_reported = false);

// Physical-template parameter set sharing the eSSM drift and output row;
// zero drift rows, unit-free placeholder noise. Handy as ground truth in
// structural tests.
ModelParams template_params(const EssmModel& m);

}  // namespace evagg
