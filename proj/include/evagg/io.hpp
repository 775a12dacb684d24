#pragma once

#include <string>

#include <Eigen/Dense>

#include "evagg/fleet.hpp"
#include "evagg/ident.hpp"
#include "evagg/loop.hpp"
#include "evagg/profiles.hpp"

namespace evagg {

// Shortest decimal that round-trips an IEEE double exactly (printf %.17g).
std::string format_g17(double v);

void write_fleet_log_csv(const std::string& path, const FleetLog& log);
FleetLog read_fleet_log_csv(const std::string& path);

void write_run_log_csv(const std::string& path, const RunLog& log);
RunLog read_run_log_csv(const std::string& path);

// Only the per-iteration table goes through CSV; the scalar summary fields
// are recomputed or dropped.
void write_fit_report_csv(const std::string& path, const FitReport& rep);
FitReport read_fit_report_csv(const std::string& path);

void write_profiles_csv(const std::string& path, const Profiles& p);
Profiles read_profiles_csv(const std::string& path);

void write_prediction_csv(const std::string& path, const PredictionRun& pr);
PredictionRun read_prediction_csv(const std::string& path);

// Sparse triplet export, header i,j,value.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& mat);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// Self-describing parameter bundle, one labeled row per field, matrices
// flattened row-major; 17-significant-digit decimals so the round trip is
// bit-exact.
void save_params(const std::string& path, const ModelParams& p);
ModelParams load_params(const std::string& path);

// One CSV per trajectory (header k,u_1..u_m,p_kw; the final row carries the
// closing measurement with zero-padded input columns) plus a meta.csv with
// the clock info.
void save_dataset_dir(const std::string& dir, const TrajectoryDataset& ds);
TrajectoryDataset load_dataset_dir(const std::string& dir);

// Scenario config: JSON with exactly the FleetScenario keys; unknown keys
// rejected, missing keys keep their defaults.
FleetScenario load_scenario_json(const std::string& path);
void save_scenario_json(const std::string& path, const FleetScenario& sc);

void write_metrics_csv(const std::string& path, const MetricsReport& rep,
                       double fit_s_mean, double fit_s_max, int bytes_per_cycle);

}  // namespace evagg
