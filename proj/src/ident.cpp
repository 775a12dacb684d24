#include "evagg/ident.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "evagg/essm.hpp"

namespace evagg {

namespace {

// Trajectory-block size for chunked reductions. Partials are accumulated per
// block and reduced serially in block order, so the parallel path adds
// numbers in the exact same order as the serial one.
constexpr int kBlock = 16;

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) {
  return 0.5 * (M + M.transpose());
}

// Clamps eigenvalues from below; leaves the matrix bit-identical when the
// floor is inactive, so healthy updates stay exact maximizers.
Eigen::MatrixXd floor_spd(const Eigen::MatrixXd& M, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("floor_spd: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= floor) return M;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double total_loglik(const std::vector<SmoothedPosterior>& post) {
  double s = 0;
  for (const auto& p : post) s += p.loglik;
  return s;
}

// Information matrix and right-hand side of the stacked dynamics regression:
//   S = sum_{l,k} (ub ub^T) kron G_k,   Rhs = sum_{l,k} ub kron E[z d^T],
// with ub = [1; u_k], z = [1; x_k], d = x_{k+1} - x_k, and G_k = E[z z^T].
struct NormalEqs {
  Eigen::MatrixXd S;
  Eigen::MatrixXd rhs;
};

NormalEqs accumulate_normal_eqs(const std::vector<SmoothedPosterior>& post,
                                const TrajectoryDataset& ds, bool parallel) {
  const int L = static_cast<int>(ds.trajs.size());
  const int K = ds.k_len();
  const int m = ds.input_dim();
  const int n = static_cast<int>(post[0].mu[0].size());
  const int nb = n + 1;
  const int dim = (m + 1) * nb;
  const int n_blocks = (L + kBlock - 1) / kBlock;

  std::vector<Eigen::MatrixXd> part_s(static_cast<size_t>(n_blocks),
                                      Eigen::MatrixXd::Zero(dim, dim));
  std::vector<Eigen::MatrixXd> part_r(static_cast<size_t>(n_blocks),
                                      Eigen::MatrixXd::Zero(dim, n));

#pragma omp parallel for schedule(static) if (parallel)
  for (int blk = 0; blk < n_blocks; ++blk) {
    Eigen::MatrixXd g(nb, nb);
    Eigen::MatrixXd ezd(nb, n);
    Eigen::VectorXd ub(m + 1);
    Eigen::MatrixXd& sb = part_s[static_cast<size_t>(blk)];
    Eigen::MatrixXd& rb = part_r[static_cast<size_t>(blk)];
    const int l_hi = std::min((blk + 1) * kBlock, L);
    for (int l = blk * kBlock; l < l_hi; ++l) {
      const SmoothedPosterior& po = post[static_cast<size_t>(l)];
      const Trajectory& tr = ds.trajs[static_cast<size_t>(l)];
      for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd& mu_k = po.mu[static_cast<size_t>(k)];
        const Eigen::VectorXd& mu_k1 = po.mu[static_cast<size_t>(k) + 1];
        g(0, 0) = 1.0;
        g.block(0, 1, 1, n) = mu_k.transpose();
        g.block(1, 0, n, 1) = mu_k;
        g.block(1, 1, n, n) =
            po.sigma[static_cast<size_t>(k)] + mu_k * mu_k.transpose();
        ezd.row(0) = (mu_k1 - mu_k).transpose();
        ezd.bottomRows(n) = po.cross[static_cast<size_t>(k)] +
                            mu_k * mu_k1.transpose() -
                            po.sigma[static_cast<size_t>(k)] -
                            mu_k * mu_k.transpose();
        ub[0] = 1.0;
        if (m > 0) ub.tail(m) = tr.u[static_cast<size_t>(k)];
        for (int i = 0; i <= m; ++i) {
          if (ub[i] == 0.0) continue;
          rb.middleRows(i * nb, nb).noalias() += ub[i] * ezd;
          for (int j = i; j <= m; ++j) {
            if (ub[j] == 0.0) continue;
            sb.block(i * nb, j * nb, nb, nb).noalias() += (ub[i] * ub[j]) * g;
          }
        }
      }
    }
  }

  NormalEqs eq{Eigen::MatrixXd::Zero(dim, dim), Eigen::MatrixXd::Zero(dim, n)};
  for (int blk = 0; blk < n_blocks; ++blk) {
    eq.S += part_s[static_cast<size_t>(blk)];
    eq.rhs += part_r[static_cast<size_t>(blk)];
  }
  for (int i = 0; i <= m; ++i)
    for (int j = i + 1; j <= m; ++j)
      eq.S.block(j * nb, i * nb, nb, nb) = eq.S.block(i * nb, j * nb, nb, nb).transpose();
  return eq;
}

double normalized_min_eig(const Eigen::MatrixXd& S, const TrajectoryDataset& ds) {
  const double scale =
      static_cast<double>(ds.trajs.size()) * (ds.k_len() + 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S / scale,
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("pe_check: eigendecomposition failed");
  return es.eigenvalues().minCoeff();
}

}  // namespace

int TrajectoryDataset::k_len() const {
  return trajs.empty() ? 0 : static_cast<int>(trajs.front().u.size());
}

int TrajectoryDataset::input_dim() const {
  if (trajs.empty() || trajs.front().u.empty()) return 0;
  return static_cast<int>(trajs.front().u.front().size());
}

void TrajectoryDataset::validate() const {
  if (trajs.empty()) throw std::invalid_argument("dataset: no trajectories");
  const int K = k_len();
  if (K < 1) throw std::invalid_argument("dataset: window must be at least 1 step");
  const int m = input_dim();
  for (const auto& tr : trajs) {
    if (static_cast<int>(tr.u.size()) != K)
      throw std::invalid_argument("dataset: ragged input lengths");
    if (static_cast<int>(tr.y.size()) != K + 1)
      throw std::invalid_argument("dataset: output length must be K+1");
    for (const auto& u : tr.u)
      if (static_cast<int>(u.size()) != m)
        throw std::invalid_argument("dataset: ragged input dimension");
  }
  if (dt_s <= 0) throw std::invalid_argument("dataset: interval must be positive");
}

TrajectoryDataset build_dataset(const std::vector<AggregatedLog>& history,
                                const AggregatedLog& live, int k_len) {
  if (k_len < 1) throw std::invalid_argument("build_dataset: window must be at least 1 step");
  const int T = static_cast<int>(live.u.size());
  if (static_cast<int>(live.y.size()) != T + 1)
    throw std::invalid_argument("build_dataset: live log y/u length mismatch");
  if (T < k_len)
    throw std::invalid_argument("build_dataset: live log shorter than the window");

  const double dt = live.dt_s;
  const double win_t0 = live.t0_s + (T - k_len) * dt;
  TrajectoryDataset ds;
  ds.dt_s = dt;
  ds.t_start_s = win_t0;
  for (const auto& h : history) {
    if (h.dt_s != dt)
      throw std::invalid_argument("build_dataset: history interval mismatch");
    const double off_f = (win_t0 - h.t0_s) / dt;
    const long off = std::lround(off_f);
    if (std::abs(off_f - static_cast<double>(off)) > 1e-6)
      throw std::invalid_argument("build_dataset: history log misaligned with the window");
    if (off < 0 || off + k_len > static_cast<long>(h.u.size()) ||
        static_cast<long>(h.y.size()) < off + k_len + 1)
      throw std::invalid_argument("build_dataset: history log does not cover the window");
    Trajectory tr;
    tr.u.assign(h.u.begin() + off, h.u.begin() + off + k_len);
    tr.y.assign(h.y.begin() + off, h.y.begin() + off + k_len + 1);
    ds.trajs.push_back(std::move(tr));
  }
  Trajectory lv;
  lv.u.assign(live.u.end() - k_len, live.u.end());
  lv.y.assign(live.y.end() - (k_len + 1), live.y.end());
  ds.trajs.push_back(std::move(lv));
  ds.validate();
  return ds;
}

FilterResult kalman_forward(const ModelParams& p, const Trajectory& tr) {
  p.check_dims();
  const int K = static_cast<int>(tr.u.size());
  if (static_cast<int>(tr.y.size()) != K + 1)
    throw std::invalid_argument("kalman_forward: y must have one more sample than u");
  const int n = p.n;

  FilterResult f;
  f.mu_f.resize(static_cast<size_t>(K) + 1);
  f.sigma_f.resize(static_cast<size_t>(K) + 1);
  f.mu_p.resize(static_cast<size_t>(K) + 1);
  f.sigma_p.resize(static_cast<size_t>(K) + 1);
  f.a.resize(static_cast<size_t>(K));
  f.b.resize(static_cast<size_t>(K));

  Eigen::VectorXd mu_pred = p.mu0;
  Eigen::MatrixXd sig_pred = symmetrize(p.sigma0);
  double ll = 0;
  for (int k = 0; k <= K; ++k) {
    f.mu_p[static_cast<size_t>(k)] = mu_pred;
    f.sigma_p[static_cast<size_t>(k)] = sig_pred;
    const Eigen::VectorXd sc = sig_pred * p.c1.transpose();
    const double s = p.c1.dot(sc) + p.sigma_v;  // innovation variance
    if (!(s > 0.0))
      throw std::runtime_error("kalman_forward: innovation variance not positive");
    const double innov = tr.y[static_cast<size_t>(k)] - p.c0 - p.c1.dot(mu_pred);
    ll += -0.5 * (std::log(2.0 * M_PI * s) + innov * innov / s);
    const Eigen::VectorXd kg = sc / s;
    f.mu_f[static_cast<size_t>(k)] = mu_pred + kg * innov;
    f.sigma_f[static_cast<size_t>(k)] = symmetrize(sig_pred - kg * sc.transpose());
    if (k < K) {
      AugmentedDynamics d = augment(p, tr.u[static_cast<size_t>(k)]);
      mu_pred = d.a * f.mu_f[static_cast<size_t>(k)] + d.b;
      sig_pred = symmetrize(
          d.a * f.sigma_f[static_cast<size_t>(k)] * d.a.transpose() + p.sigma_w);
      f.a[static_cast<size_t>(k)] = std::move(d.a);
      f.b[static_cast<size_t>(k)] = std::move(d.b);
    }
  }
  f.loglik = ll;
  (void)n;
  return f;
}

SmoothedPosterior rts_smoother(const ModelParams& p, const FilterResult& f,
                               int* regularizations) {
  const int K = static_cast<int>(f.a.size());
  const int n = p.n;
  SmoothedPosterior sp;
  sp.mu.resize(static_cast<size_t>(K) + 1);
  sp.sigma.resize(static_cast<size_t>(K) + 1);
  sp.cross.resize(static_cast<size_t>(K));
  sp.loglik = f.loglik;
  sp.mu[static_cast<size_t>(K)] = f.mu_f[static_cast<size_t>(K)];
  sp.sigma[static_cast<size_t>(K)] = f.sigma_f[static_cast<size_t>(K)];
  for (int k = K - 1; k >= 0; --k) {
    Eigen::MatrixXd spred = f.sigma_p[static_cast<size_t>(k) + 1];
    Eigen::LLT<Eigen::MatrixXd> llt(spred);
    if (llt.info() != Eigen::Success) {
      spred += 1e-10 * Eigen::MatrixXd::Identity(n, n);
      if (regularizations) ++*regularizations;
      llt.compute(spred);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("rts_smoother: predicted covariance not factorizable");
    }
    // Gain J = sigma_f a^T spred^{-1}, computed via J^T = spred^{-1}(a sigma_f).
    const Eigen::MatrixXd j_gain =
        llt.solve(f.a[static_cast<size_t>(k)] * f.sigma_f[static_cast<size_t>(k)])
            .transpose();
    sp.mu[static_cast<size_t>(k)] =
        f.mu_f[static_cast<size_t>(k)] +
        j_gain * (sp.mu[static_cast<size_t>(k) + 1] - f.mu_p[static_cast<size_t>(k) + 1]);
    sp.cross[static_cast<size_t>(k)] = j_gain * sp.sigma[static_cast<size_t>(k) + 1];
    sp.sigma[static_cast<size_t>(k)] = symmetrize(
        f.sigma_f[static_cast<size_t>(k)] +
        j_gain *
            (sp.sigma[static_cast<size_t>(k) + 1] - f.sigma_p[static_cast<size_t>(k) + 1]) *
            j_gain.transpose());
  }
  return sp;
}

std::vector<SmoothedPosterior> e_step(const ModelParams& p, const TrajectoryDataset& ds,
                                      bool parallel, int* regularizations) {
  p.check_dims();
  ds.validate();
  const int L = static_cast<int>(ds.trajs.size());
  std::vector<SmoothedPosterior> post(static_cast<size_t>(L));
  std::vector<int> regs(static_cast<size_t>(L), 0);
#pragma omp parallel for schedule(static) if (parallel)
  for (int l = 0; l < L; ++l) {
    const FilterResult f = kalman_forward(p, ds.trajs[static_cast<size_t>(l)]);
    post[static_cast<size_t>(l)] = rts_smoother(p, f, &regs[static_cast<size_t>(l)]);
  }
  if (regularizations)
    for (int r : regs) *regularizations += r;
  return post;
}

double log_likelihood(const ModelParams& p, const TrajectoryDataset& ds, bool parallel) {
  p.check_dims();
  ds.validate();
  const int L = static_cast<int>(ds.trajs.size());
  std::vector<double> ll(static_cast<size_t>(L));
#pragma omp parallel for schedule(static) if (parallel)
  for (int l = 0; l < L; ++l)
    ll[static_cast<size_t>(l)] = kalman_forward(p, ds.trajs[static_cast<size_t>(l)]).loglik;
  double s = 0;
  for (double v : ll) s += v;
  return s;
}

double pe_check(const std::vector<SmoothedPosterior>& post, const TrajectoryDataset& ds) {
  if (post.size() != ds.trajs.size())
    throw std::invalid_argument("pe_check: posterior/dataset size mismatch");
  return normalized_min_eig(accumulate_normal_eqs(post, ds, true).S, ds);
}

double pe_check(const ModelParams& p, const TrajectoryDataset& ds) {
  return pe_check(e_step(p, ds), ds);
}

ModelParams m_step(const std::vector<SmoothedPosterior>& post, const TrajectoryDataset& ds,
                   const ModelParams& prev, double* min_eig_out, bool parallel) {
  ds.validate();
  prev.check_dims();
  if (post.size() != ds.trajs.size())
    throw std::invalid_argument("m_step: posterior/dataset size mismatch");
  const int L = static_cast<int>(ds.trajs.size());
  const int K = ds.k_len();
  const int m = ds.input_dim();
  const int n = prev.n;
  const int nb = n + 1;
  if (m != prev.m)
    throw std::invalid_argument("m_step: dataset input dim does not match the model");

  NormalEqs eq = accumulate_normal_eqs(post, ds, parallel);
  const double min_eig = normalized_min_eig(eq.S, ds);
  if (min_eig_out) *min_eig_out = min_eig;
  if (min_eig <= 1e-8)
    throw ExcitationError(
        "m_step: inputs not persistently exciting (normalized min eigenvalue " +
            std::to_string(min_eig) + ")",
        min_eig);

  // Stacked solve; block j of the solution is [drift_j; W_j^T].
  const Eigen::MatrixXd x_sol = eq.S.ldlt().solve(eq.rhs);

  ModelParams out;
  out.n = n;
  out.m = m;
  out.bins = prev.bins;
  out.c1 = prev.c1;
  out.V.resize(static_cast<size_t>(m));
  out.drift = Eigen::MatrixXd::Zero(m + 1, n);
  for (int j = 0; j <= m; ++j) {
    const Eigen::MatrixXd blockj = x_sol.middleRows(j * nb, nb);
    out.drift.row(j) = blockj.row(0);
    const Eigen::MatrixXd w_j = blockj.bottomRows(n).transpose();
    if (j == 0)
      out.A = w_j + Eigen::MatrixXd::Identity(n, n);
    else
      out.V[static_cast<size_t>(j) - 1] = w_j;
  }

  // Output equation: offset from the residual mean, variance from the
  // residual second moment around it plus the posterior-variance term.
  const double n_obs = static_cast<double>(L) * (K + 1);
  double sum_r = 0, sum_r2 = 0, sum_cvc = 0;
  for (int l = 0; l < L; ++l) {
    const SmoothedPosterior& po = post[static_cast<size_t>(l)];
    const Trajectory& tr = ds.trajs[static_cast<size_t>(l)];
    for (int k = 0; k <= K; ++k) {
      const double r =
          tr.y[static_cast<size_t>(k)] - prev.c1.dot(po.mu[static_cast<size_t>(k)]);
      sum_r += r;
      sum_r2 += r * r;
      sum_cvc += prev.c1.dot(po.sigma[static_cast<size_t>(k)] * prev.c1.transpose());
    }
  }
  out.c0 = sum_r / n_obs;
  out.sigma_v = std::max((sum_cvc + sum_r2 - sum_r * sum_r / n_obs) / n_obs, 1e-12);

  // Initial-state block.
  Eigen::VectorXd mu0_sum = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd m0_second = Eigen::MatrixXd::Zero(n, n);
  for (int l = 0; l < L; ++l) {
    const SmoothedPosterior& po = post[static_cast<size_t>(l)];
    mu0_sum += po.mu[0];
    m0_second += po.sigma[0] + po.mu[0] * po.mu[0].transpose();
  }
  out.mu0 = mu0_sum / L;
  out.sigma0 =
      floor_spd(symmetrize(m0_second / L - out.mu0 * out.mu0.transpose()), 1e-12);

  // Process noise from the residuals of the freshly solved dynamics.
  const int n_blocks = (L + kBlock - 1) / kBlock;
  std::vector<Eigen::MatrixXd> part_w(static_cast<size_t>(n_blocks),
                                      Eigen::MatrixXd::Zero(n, n));
#pragma omp parallel for schedule(static) if (parallel)
  for (int blk = 0; blk < n_blocks; ++blk) {
    Eigen::MatrixXd& wacc = part_w[static_cast<size_t>(blk)];
    const int l_hi = std::min((blk + 1) * kBlock, L);
    for (int l = blk * kBlock; l < l_hi; ++l) {
      const SmoothedPosterior& po = post[static_cast<size_t>(l)];
      const Trajectory& tr = ds.trajs[static_cast<size_t>(l)];
      for (int k = 0; k < K; ++k) {
        const AugmentedDynamics d = augment(out, tr.u[static_cast<size_t>(k)]);
        const Eigen::MatrixXd& cr = po.cross[static_cast<size_t>(k)];
        const Eigen::VectorXd delta = po.mu[static_cast<size_t>(k) + 1] -
                                      d.a * po.mu[static_cast<size_t>(k)] - d.b;
        wacc.noalias() += po.sigma[static_cast<size_t>(k) + 1];
        wacc.noalias() -= cr.transpose() * d.a.transpose();
        wacc.noalias() -= d.a * cr;
        wacc.noalias() += d.a * po.sigma[static_cast<size_t>(k)] * d.a.transpose();
        wacc.noalias() += delta * delta.transpose();
      }
    }
  }
  Eigen::MatrixXd w_sum = Eigen::MatrixXd::Zero(n, n);
  for (int blk = 0; blk < n_blocks; ++blk) w_sum += part_w[static_cast<size_t>(blk)];
  out.sigma_w =
      floor_spd(symmetrize(w_sum / (static_cast<double>(K) * L)), 1e-12);

  out.check_dims();
  return out;
}

ModelParams init_params(const TrajectoryDataset& ds, int n_bins, Rng& rng) {
  ds.validate();
  if (n_bins <= 0) throw std::invalid_argument("init_params: n_bins must be positive");
  if (ds.input_dim() != n_inputs(n_bins))
    throw std::invalid_argument("init_params: dataset input dim does not match bin count");
  const int N = n_bins;
  const int n = n_states(N);
  const int m = n_inputs(N);

  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (const auto& tr : ds.trajs)
    for (double y : tr.y) {
      const double a = std::abs(y);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  if (!(hi > 0)) lo = hi = 1.0;
  const double eta = (hi > lo) ? rng.uniform(lo, hi) : hi;

  ModelParams p;
  p.bins = N;
  p.n = n;
  p.m = m;
  p.A = build_essm(default_stats(), N, ds.dt_s).A;
  p.V = build_V(N);
  p.drift = Eigen::MatrixXd::Zero(m + 1, n);
  p.c1 = Eigen::RowVectorXd::Zero(n);
  for (int b = 0; b < N; ++b) {
    p.c1[b] = -eta;           // charging bins draw power
    p.c1[2 * N + b] = eta;    // discharging bins deliver it
  }
  p.c1[3 * N + 2] = -eta;     // forced charging draws power
  p.c0 = 0.0;
  p.mu0 = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return rng.uniform(); });
  p.sigma0 = std::max(rng.uniform(), 1e-12) * Eigen::MatrixXd::Identity(n, n);
  p.sigma_w = std::max(rng.uniform(), 1e-12) * Eigen::MatrixXd::Identity(n, n);
  p.sigma_v = std::max(rng.uniform(), 1e-12);
  p.check_dims();
  return p;
}

std::pair<ModelParams, FitReport> em_fit(const TrajectoryDataset& ds,
                                         const ModelParams& params0, double eps_min,
                                         int n_iter_max) {
  ds.validate();
  params0.check_dims();
  if (n_iter_max < 1) throw std::invalid_argument("em_fit: n_iter_max must be positive");

  using clk = std::chrono::steady_clock;
  const auto t0 = clk::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(clk::now() - t0).count();
  };

  FitReport rep;
  int regs = 0;
  ModelParams params = params0;
  std::vector<SmoothedPosterior> post = e_step(params, ds, true, &regs);
  double ll_prev = total_loglik(post);
  rep.iters.push_back({0, ll_prev, pe_check(post, ds), elapsed()});
  const double eps = eps_min > 0 ? eps_min : 1e-4 * std::abs(ll_prev);

  for (int it = 1; it <= n_iter_max; ++it) {
    double min_eig = 0;
    params = m_step(post, ds, params, &min_eig);
    post = e_step(params, ds, true, &regs);
    const double ll_now = total_loglik(post);
    rep.iters.push_back({it, ll_now, min_eig, elapsed()});
    const double gain = ll_now - ll_prev;
    ll_prev = ll_now;
    if (gain <= eps) {
      rep.converged = true;
      break;
    }
  }
  rep.smoother_regularizations = regs;
  rep.total_s = elapsed();
  return {params, rep};
}

}  // namespace evagg
