#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace evagg {

// State layout for N SOC bins (0-based):
//   [0, N)      charging-mode bins, ascending SOC
//   [N, 2N)     idle-mode bins
//   [2N, 3N)    discharging-mode bins
//   3N          idle at the lower SOC edge (fully discharged)
//   3N+1        idle at the upper SOC edge (fully charged)
//   3N+2        forced charging
// Control entries are arrows on that graph, 0-based:
//   [0, N)      charging bin j   -> idle bin j
//   [N, 2N)     idle bin j       -> discharging bin j
//   [2N, 3N)    discharging bin j-> idle bin j
//   [3N, 4N)    idle bin j       -> charging bin j
//   4N          fully-discharged -> lowest charging bin
//   4N+1        fully-charged    -> highest discharging bin
int n_states(int n_bins);  // 3N+3
int n_inputs(int n_bins);  // 4N+2
int arrow_source(int j, int n_bins);
int arrow_dest(int j, int n_bins);

// One matrix per control entry: -1 at (src,src), +1 at (dst,src). Columns sum
// to zero, so every input preserves total mass.
std::vector<Eigen::MatrixXd> build_V(int n_bins);

struct ModelParams {
  int n = 0;     // state dimension
  int m = 0;     // input dimension
  int bins = 0;  // SOC bins when the physical layout applies; 0 for generic models
  Eigen::MatrixXd A;               // n x n autonomous dynamics
  std::vector<Eigen::MatrixXd> V;  // m bilinear input matrices, n x n
  Eigen::MatrixXd drift;           // (m+1) x n; row 0 constant drift, row j input-j drift
  Eigen::RowVectorXd c1;           // output row
  double c0 = 0;                   // output offset (kW)
  Eigen::MatrixXd sigma_w;         // process noise covariance
  double sigma_v = 0;              // output noise variance
  Eigen::VectorXd mu0;             // initial state mean
  Eigen::MatrixXd sigma0;          // initial state covariance

  void check_dims() const;  // throws std::invalid_argument on inconsistency
};

// Per-step affine dynamics under input u: x+ = a x + b (+ w).
struct AugmentedDynamics {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};
AugmentedDynamics augment(const ModelParams& p, const Eigen::VectorXd& u);

Eigen::VectorXd bhmm_step(const ModelParams& p, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u, const Eigen::VectorXd& w);

double output(const ModelParams& p, const Eigen::VectorXd& x);

// Mean rollout: expected outputs at steps 1..len(u_seq) from mu_start.
std::vector<double> mean_rollout(const ModelParams& p, const Eigen::VectorXd& mu_start,
                                 const std::vector<Eigen::VectorXd>& u_seq);

// The two extreme broadcasts: everything toward discharging (upper) or
// toward charging (lower). Physical layout only.
Eigen::VectorXd upper_extreme_u(int n_bins);
Eigen::VectorXd lower_extreme_u(int n_bins);

// (upper, lower) expected power bounds at steps 1..horizon, obtained by
// rolling the mean forward under the two extreme broadcasts.
std::pair<std::vector<double>, std::vector<double>> flexibility_rollout(
    const ModelParams& p, const Eigen::VectorXd& mu_start, int horizon);

}  // namespace evagg
