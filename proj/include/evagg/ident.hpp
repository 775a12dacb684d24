#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "evagg/bhmm.hpp"
#include "evagg/rng.hpp"

namespace evagg {

// One identification trajectory: K applied inputs and K+1 power measurements.
struct Trajectory {
  std::vector<Eigen::VectorXd> u;  // u(0..K-1)
  std::vector<double> y;           // y(0..K), kW
};

struct TrajectoryDataset {
  std::vector<Trajectory> trajs;
  double t_start_s = 0;  // clock of y(0)
  double dt_s = 15.0;

  int k_len() const;      // K, shared across trajectories
  int input_dim() const;  // may be 0
  void validate() const;  // throws std::invalid_argument on ragged data
};

// A full-day record of aggregate inputs/outputs that windows are cut from.
struct AggregatedLog {
  std::vector<Eigen::VectorXd> u;  // length T
  std::vector<double> y;           // length T+1
  double t0_s = 0;                 // clock of y[0]
  double dt_s = 15.0;
};

// Slides a K-step window ending at the latest live sample and cuts the same
// clock window out of every historical log. The live trajectory comes last.
TrajectoryDataset build_dataset(const std::vector<AggregatedLog>& history,
                                const AggregatedLog& live, int k_len);

struct FilterResult {
  std::vector<Eigen::VectorXd> mu_f;     // filtered means, 0..K
  std::vector<Eigen::MatrixXd> sigma_f;  // filtered covariances, 0..K
  std::vector<Eigen::VectorXd> mu_p;     // one-step predicted means, 0..K
  std::vector<Eigen::MatrixXd> sigma_p;  // one-step predicted covariances, 0..K
  std::vector<Eigen::MatrixXd> a;        // per-step dynamics, 0..K-1
  std::vector<Eigen::VectorXd> b;
  double loglik = 0;  // innovation-form log-likelihood
};

struct SmoothedPosterior {
  std::vector<Eigen::VectorXd> mu;     // smoothed means, 0..K
  std::vector<Eigen::MatrixXd> sigma;  // smoothed covariances, 0..K
  std::vector<Eigen::MatrixXd> cross;  // cross[k] = Cov(x_k, x_{k+1}), 0..K-1
  double loglik = 0;
};

class ExcitationError : public std::runtime_error {
 public:
  ExcitationError(const std::string& what, double eig)
      : std::runtime_error(what), min_eig(eig) {}
  double min_eig;
};

// Forward Kalman pass under the input-scheduled dynamics; throws
// std::runtime_error if an innovation variance fails to be positive.
FilterResult kalman_forward(const ModelParams& p, const Trajectory& tr);

// Backward RTS pass. A singular predicted covariance gets a 1e-10 ridge;
// occurrences are counted into *regularizations when provided.
SmoothedPosterior rts_smoother(const ModelParams& p, const FilterResult& f,
                               int* regularizations = nullptr);

std::vector<SmoothedPosterior> e_step(const ModelParams& p, const TrajectoryDataset& ds,
                                      bool parallel = true, int* regularizations = nullptr);

// Closed-form maximizer given the posteriors. c1 is inherited unchanged from
// prev. Throws ExcitationError when the input/state information matrix is
// numerically singular (normalized min eigenvalue <= 1e-8, reported via
// *min_eig_out when provided).
ModelParams m_step(const std::vector<SmoothedPosterior>& post, const TrajectoryDataset& ds,
                   const ModelParams& prev, double* min_eig_out = nullptr,
                   bool parallel = true);

double log_likelihood(const ModelParams& p, const TrajectoryDataset& ds,
                      bool parallel = true);

// Normalized minimum eigenvalue of the regression information matrix.
double pe_check(const std::vector<SmoothedPosterior>& post, const TrajectoryDataset& ds);
double pe_check(const ModelParams& p, const TrajectoryDataset& ds);

// Random restart for the physical layout: signed output template with a
// positive scale drawn from the observed power magnitudes, drift-default
// autonomous dynamics, unit-box initial mean, white covariances.
ModelParams init_params(const TrajectoryDataset& ds, int n_bins, Rng& rng);

struct FitIter {
  int iter = 0;
  double loglik = 0;
  double min_eig = 0;
  double elapsed_s = 0;  // cumulative wall time at the end of the iteration
};
struct FitReport {
  std::vector<FitIter> iters;  // row 0 is the starting point
  bool converged = false;
  int smoother_regularizations = 0;
  double total_s = 0;
};

// Alternates e_step / m_step until the log-likelihood gain drops to eps_min
// or n_iter_max is hit. eps_min <= 0 selects 1e-4 * |loglik at start|.
std::pair<ModelParams, FitReport> em_fit(const TrajectoryDataset& ds,
                                         const ModelParams& params0,
                                         double eps_min = 0.0, int n_iter_max = 100);

}  // namespace evagg
