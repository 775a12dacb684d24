#include "evagg/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace evagg {

double pi_regulation(double delta_f, double lambda, double f_deadband) {
  if (f_deadband < 0) throw std::invalid_argument("pi_regulation: negative dead band");
  if (std::abs(delta_f) <= f_deadband) return 0.0;
  const double sgn = delta_f > 0 ? 1.0 : -1.0;
  return lambda * (delta_f - sgn * f_deadband);
}

void swing_step(GridState& g, double p_imbalance_mw, double dt_s) {
  if (dt_s <= 0) throw std::invalid_argument("swing_step: dt must be positive");
  if (g.inertia <= 0) throw std::invalid_argument("swing_step: inertia must be positive");
  g.delta_f += (dt_s / g.inertia) * (p_imbalance_mw - g.damping * g.delta_f);
}

double predict_deviation(const GridState& g, const RegulationConfig& c, double lambda) {
  // The unobserved base imbalance is assumed to sit at whatever the damping
  // currently absorbs (d * delta_f), i.e. the disturbance persists. The droop
  // response is computed once from the current deviation and held through the
  // interval, mirroring how the loop actually applies it.
  const double dp = pi_regulation(-g.delta_f, lambda, c.f_deadband);
  const double base = g.damping * g.delta_f;
  const int s = std::max(1, c.swing_substeps);
  const double dts = c.dt_s / s;
  double df = g.delta_f;
  for (int i = 0; i < s; ++i)
    df += (dts / g.inertia) * (base + dp - g.damping * df);
  return df;
}

double update_lambda(const GridState& g, const RegulationConfig& c) {
  const double eps = c.f_deadband;
  if (std::abs(g.delta_f) <= eps) return g.lambda;  // inside: nothing to retune
  const double sgn = g.delta_f > 0 ? 1.0 : -1.0;
  const auto excess = [&](double lam) {
    return sgn * predict_deviation(g, c, lam) - eps;
  };
  double hi = c.lambda_max > 0 ? c.lambda_max
                               : 2.0 * (g.inertia / c.dt_s + g.damping);
  if (excess(0.0) <= 0.0) return 0.0;  // damping alone pulls it back
  if (excess(hi) > 0.0) return hi;     // saturated: best available gain
  double lo = 0.0;
  for (int i = 0; i < c.lambda_bisect_iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return hi;  // the side with the predicted deviation at or inside the edge
}

DispatchDecision dispatch(double dp_demand_mw, double p_pred_kw, double p_upper_kw,
                          double p_lower_kw, const GridState& g,
                          const RegulationConfig& c) {
  if (p_lower_kw > p_upper_kw)
    throw std::invalid_argument("dispatch: inverted flexibility band");
  DispatchDecision d;
  const double ramp_mw = c.ramp_mw_per_min * c.dt_s / 60.0;
  if (dp_demand_mw >= 0) {
    double head_mw = (p_upper_kw - p_pred_kw) / 1000.0;
    if (head_mw < 0) {
      head_mw = 0;
      d.clamped = true;
    }
    if (head_mw > dp_demand_mw) {
      d.dp_ev_kw = dp_demand_mw * 1000.0;
      d.dp_cg_mw = 0.0;
    } else {
      d.dp_ev_kw = head_mw * 1000.0;
      d.dp_cg_mw = std::min({c.cg_max_mw - g.p_cg, ramp_mw,
                             dp_demand_mw - head_mw});
      d.dp_cg_mw = std::max(d.dp_cg_mw, 0.0);
    }
  } else {
    double room_mw = (p_pred_kw - p_lower_kw) / 1000.0;
    if (room_mw < 0) {
      room_mw = 0;
      d.clamped = true;
    }
    if (room_mw > -dp_demand_mw) {
      d.dp_ev_kw = dp_demand_mw * 1000.0;
      d.dp_cg_mw = 0.0;
    } else {
      d.dp_ev_kw = -room_mw * 1000.0;
      d.dp_cg_mw = std::max({c.cg_min_mw - g.p_cg, -ramp_mw,
                             dp_demand_mw + room_mw});
      d.dp_cg_mw = std::min(d.dp_cg_mw, 0.0);
    }
  }
  d.p_ref_kw = p_pred_kw + d.dp_ev_kw;
  return d;
}

MpcResult mpc_solve(const ModelParams& p, const Eigen::VectorXd& mu_now, double p_ref_kw,
                    double p_upper_kw, double p_lower_kw, const RegulationConfig& c) {
  p.check_dims();
  if (mu_now.size() != p.n) throw std::invalid_argument("mpc_solve: state size mismatch");
  if (p_lower_kw > p_upper_kw)
    throw std::invalid_argument("mpc_solve: inverted flexibility band");
  const int m = p.m;

  // One-step power prediction is affine in the broadcast: p(u) = p0 + g.u
  const Eigen::VectorXd base = p.A * mu_now + p.drift.row(0).transpose();
  const double p0 = p.c0 + p.c1.dot(base);
  Eigen::VectorXd g(m);
  for (int j = 0; j < m; ++j)
    g[j] = p.c1.dot(p.V[static_cast<size_t>(j)] * mu_now +
                    p.drift.row(j + 1).transpose());

  MpcResult res;
  res.band_infeasible = p_ref_kw > p_upper_kw || p_ref_kw < p_lower_kw;

  const auto objective = [&](const Eigen::VectorXd& uu) {
    const double pw = p0 + g.dot(uu);
    double v = c.q_w * (pw - p_ref_kw) * (pw - p_ref_kw) + c.r_w * uu.squaredNorm();
    if (pw > p_upper_kw) v += c.band_weight * (pw - p_upper_kw) * (pw - p_upper_kw);
    if (pw < p_lower_kw) v += c.band_weight * (p_lower_kw - pw) * (p_lower_kw - pw);
    return v;
  };
  const auto gradient = [&](const Eigen::VectorXd& uu) {
    const double pw = p0 + g.dot(uu);
    double go = 2.0 * c.q_w * (pw - p_ref_kw);
    if (pw > p_upper_kw) go += 2.0 * c.band_weight * (pw - p_upper_kw);
    if (pw < p_lower_kw) go += 2.0 * c.band_weight * (pw - p_lower_kw);
    return (go * g + 2.0 * c.r_w * uu).eval();
  };

  // Trial-step curvature matches the piece the iterate sits on; stepping
  // across a band edge is safe because the line search below evaluates the
  // exact piecewise minimum along the segment.
  const auto local_curv = [&](double pw) {
    const bool on_penalty = pw > p_upper_kw || pw < p_lower_kw;
    return 2.0 * (c.q_w + (on_penalty ? c.band_weight : 0.0)) * g.squaredNorm() +
           2.0 * c.r_w;
  };
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  for (res.iters = 0; res.iters < c.mpc_max_iter; ++res.iters) {
    const Eigen::VectorXd gr = gradient(u);
    const Eigen::VectorXd v =
        (u - gr / local_curv(p0 + g.dot(u))).cwiseMax(0.0).cwiseMin(1.0);
    const Eigen::VectorXd d = v - u;
    res.kkt = d.lpNorm<Eigen::Infinity>();
    if (res.kkt <= c.mpc_tol) break;

    // Exact line search: the restriction of the objective to [u, u+d] is
    // piecewise quadratic with breakpoints where p(u + a d) crosses a band
    // edge. Evaluate every breakpoint and every per-piece critical point.
    const double pu = p0 + g.dot(u);
    const double gd = g.dot(d);
    const double dd = d.squaredNorm();
    const double ud = u.dot(d);
    double bks[4] = {0.0, 1.0, -1.0, -1.0};
    int nbk = 2;
    if (gd != 0.0) {
      const double a_up = (p_upper_kw - pu) / gd;
      const double a_lo = (p_lower_kw - pu) / gd;
      if (a_up > 0.0 && a_up < 1.0) bks[nbk++] = a_up;
      if (a_lo > 0.0 && a_lo < 1.0) bks[nbk++] = a_lo;
    }
    std::sort(bks, bks + nbk);
    double best_a = 0.0;
    double best_j = objective(u);
    const auto consider = [&](double a) {
      const double jv = objective(u + a * d);
      if (jv < best_j) {
        best_j = jv;
        best_a = a;
      }
    };
    for (int i = 0; i + 1 < nbk; ++i) {
      const double a0 = bks[i], a1 = bks[i + 1];
      consider(a1);
      const double pm = pu + 0.5 * (a0 + a1) * gd;
      const double up = pm > p_upper_kw ? 1.0 : 0.0;
      const double lo = pm < p_lower_kw ? 1.0 : 0.0;
      const double q1 =
          2.0 * gd * (c.q_w * (pu - p_ref_kw) + c.band_weight * up * (pu - p_upper_kw) +
                      c.band_weight * lo * (pu - p_lower_kw)) +
          2.0 * c.r_w * ud;
      const double q2 =
          2.0 * gd * gd * (c.q_w + c.band_weight * (up + lo)) + 2.0 * c.r_w * dd;
      if (q2 > 0.0) {
        const double a_star = -q1 / q2;
        if (a_star > a0 && a_star < a1) consider(a_star);
      }
    }
    if (best_a == 0.0) break;  // no descent available along the step
    u += best_a * d;
  }
  res.u = u;
  return res;
}

std::vector<uint8_t> encode_broadcast(const Eigen::VectorXd& u, int n_bins, uint8_t seq) {
  if (n_bins <= 0 || n_bins > 255)
    throw std::invalid_argument("encode_broadcast: bin count out of range");
  const int m = n_inputs(n_bins);
  if (u.size() != m)
    throw std::invalid_argument("encode_broadcast: control vector has wrong length");
  std::vector<uint8_t> buf(4 + 4 * static_cast<size_t>(m), 0);
  buf[0] = static_cast<uint8_t>(n_bins);
  buf[1] = seq;
  for (int j = 0; j < m; ++j) {
    const float f = static_cast<float>(u[j]);
    std::memcpy(&buf[4 + 4 * static_cast<size_t>(j)], &f, 4);
  }
  return buf;
}

Eigen::VectorXd decode_broadcast(const std::vector<uint8_t>& payload, int* n_bins,
                                 uint8_t* seq) {
  if (payload.size() < 4) throw std::invalid_argument("decode_broadcast: short payload");
  const int N = payload[0];
  if (N <= 0) throw std::invalid_argument("decode_broadcast: bad bin count");
  const int m = n_inputs(N);
  if (payload.size() != 4 + 4 * static_cast<size_t>(m))
    throw std::invalid_argument("decode_broadcast: payload length mismatch");
  if (n_bins) *n_bins = N;
  if (seq) *seq = payload[1];
  Eigen::VectorXd u(m);
  for (int j = 0; j < m; ++j) {
    float f;
    std::memcpy(&f, &payload[4 + 4 * static_cast<size_t>(j)], 4);
    u[j] = static_cast<double>(f);
  }
  return u;
}

}  // namespace evagg
