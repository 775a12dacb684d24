#include "evagg/bhmm.hpp"

#include <stdexcept>

namespace evagg {

int n_states(int n_bins) { return 3 * n_bins + 3; }
int n_inputs(int n_bins) { return 4 * n_bins + 2; }

int arrow_source(int j, int n_bins) {
  const int N = n_bins;
  if (j < 0 || j >= n_inputs(N)) throw std::invalid_argument("arrow_source: bad index");
  if (j < N) return j;                    // charging bin j
  if (j < 2 * N) return j;                // idle bin j-N
  if (j < 3 * N) return j;                // discharging bin j-2N
  if (j < 4 * N) return j - 2 * N;        // idle bin j-3N
  if (j == 4 * N) return 3 * N;           // fully discharged
  return 3 * N + 1;                       // fully charged
}

int arrow_dest(int j, int n_bins) {
  const int N = n_bins;
  if (j < 0 || j >= n_inputs(N)) throw std::invalid_argument("arrow_dest: bad index");
  if (j < N) return N + j;                // -> idle bin j
  if (j < 2 * N) return j + N;            // -> discharging bin j-N
  if (j < 3 * N) return j - N;            // -> idle bin j-2N
  if (j < 4 * N) return j - 3 * N;        // -> charging bin j-3N
  if (j == 4 * N) return 0;               // -> lowest charging bin
  return 3 * N - 1;                       // -> highest discharging bin
}

std::vector<Eigen::MatrixXd> build_V(int n_bins) {
  if (n_bins <= 0) throw std::invalid_argument("build_V: n_bins must be positive");
  const int n = n_states(n_bins);
  const int m = n_inputs(n_bins);
  std::vector<Eigen::MatrixXd> V(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    const int src = arrow_source(j, n_bins);
    const int dst = arrow_dest(j, n_bins);
    M(src, src) = -1.0;
    M(dst, src) = 1.0;
    V[static_cast<size_t>(j)] = std::move(M);
  }
  return V;
}

void ModelParams::check_dims() const {
  if (n <= 0) throw std::invalid_argument("ModelParams: n must be positive");
  if (m < 0) throw std::invalid_argument("ModelParams: m must be nonnegative");
  if (bins > 0 && (n != n_states(bins) || m != n_inputs(bins)))
    throw std::invalid_argument("ModelParams: dims inconsistent with bin count");
  if (A.rows() != n || A.cols() != n) throw std::invalid_argument("ModelParams: bad A");
  if (static_cast<int>(V.size()) != m) throw std::invalid_argument("ModelParams: bad V count");
  for (const auto& Vj : V)
    if (Vj.rows() != n || Vj.cols() != n) throw std::invalid_argument("ModelParams: bad V dims");
  if (drift.rows() != m + 1 || drift.cols() != n)
    throw std::invalid_argument("ModelParams: bad drift");
  if (c1.size() != n) throw std::invalid_argument("ModelParams: bad c1");
  if (sigma_w.rows() != n || sigma_w.cols() != n)
    throw std::invalid_argument("ModelParams: bad sigma_w");
  if (mu0.size() != n) throw std::invalid_argument("ModelParams: bad mu0");
  if (sigma0.rows() != n || sigma0.cols() != n)
    throw std::invalid_argument("ModelParams: bad sigma0");
  if (sigma_v < 0) throw std::invalid_argument("ModelParams: negative sigma_v");
}

AugmentedDynamics augment(const ModelParams& p, const Eigen::VectorXd& u) {
  if (u.size() != p.m) throw std::invalid_argument("augment: input dimension mismatch");
  AugmentedDynamics d;
  d.a = p.A;
  d.b = p.drift.row(0).transpose();
  for (int j = 0; j < p.m; ++j) {
    if (u[j] != 0.0) {
      d.a.noalias() += u[j] * p.V[static_cast<size_t>(j)];
      d.b.noalias() += u[j] * p.drift.row(j + 1).transpose();
    }
  }
  return d;
}

Eigen::VectorXd bhmm_step(const ModelParams& p, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
  if (x.size() != p.n || w.size() != p.n)
    throw std::invalid_argument("bhmm_step: state dimension mismatch");
  const AugmentedDynamics d = augment(p, u);
  return d.a * x + d.b + w;
}

double output(const ModelParams& p, const Eigen::VectorXd& x) {
  if (x.size() != p.n) throw std::invalid_argument("output: state dimension mismatch");
  return p.c0 + p.c1.dot(x);
}

std::vector<double> mean_rollout(const ModelParams& p, const Eigen::VectorXd& mu_start,
                                 const std::vector<Eigen::VectorXd>& u_seq) {
  if (mu_start.size() != p.n)
    throw std::invalid_argument("mean_rollout: state dimension mismatch");
  std::vector<double> out;
  out.reserve(u_seq.size());
  Eigen::VectorXd mu = mu_start;
  for (const auto& u : u_seq) {
    const AugmentedDynamics d = augment(p, u);
    mu = d.a * mu + d.b;
    out.push_back(p.c0 + p.c1.dot(mu));
  }
  return out;
}

Eigen::VectorXd upper_extreme_u(int n_bins) {
  const int N = n_bins;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n_inputs(N));
  for (int j = 0; j < 2 * N; ++j) u[j] = 1.0;  // charging->idle, idle->discharging
  u[4 * N + 1] = 1.0;                          // fully charged -> discharging
  return u;
}

Eigen::VectorXd lower_extreme_u(int n_bins) {
  const int N = n_bins;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n_inputs(N));
  for (int j = 2 * N; j < 4 * N; ++j) u[j] = 1.0;  // discharging->idle, idle->charging
  u[4 * N] = 1.0;                                  // fully discharged -> charging
  return u;
}

std::pair<std::vector<double>, std::vector<double>> flexibility_rollout(
    const ModelParams& p, const Eigen::VectorXd& mu_start, int horizon) {
  if (p.bins <= 0)
    throw std::invalid_argument("flexibility_rollout: model has no physical bin layout");
  if (horizon < 0) throw std::invalid_argument("flexibility_rollout: negative horizon");
  std::vector<Eigen::VectorXd> up_seq(static_cast<size_t>(horizon), upper_extreme_u(p.bins));
  std::vector<Eigen::VectorXd> lo_seq(static_cast<size_t>(horizon), lower_extreme_u(p.bins));
  return {mean_rollout(p, mu_start, up_seq), mean_rollout(p, mu_start, lo_seq)};
}

}  // namespace evagg
