#include "evagg/loop.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evagg {

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

uint64_t day_seed(const LoopConfig& cfg, uint64_t day_tag) {
  return hash_mix(cfg.seed, day_tag, static_cast<uint64_t>(Purpose::misc), 0);
}

struct LiveFilter {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sig;
};

// Re-anchors a filter on the tail of the live stream: start from the model
// prior and replay the last k_win recorded (u, y) pairs.
LiveFilter replay_filter(const ModelParams& p, const AggregatedLog& live, int k_win) {
  const int avail = static_cast<int>(live.u.size());
  const int k = std::min(k_win, avail);
  if (k <= 0) return {p.mu0, p.sigma0};
  Trajectory tr;
  tr.u.assign(live.u.end() - k, live.u.end());
  tr.y.assign(live.y.end() - (k + 1), live.y.end());
  const FilterResult f = kalman_forward(p, tr);
  return {f.mu_f.back(), f.sigma_f.back()};
}

void filter_advance(const ModelParams& p, Eigen::VectorXd& mu, Eigen::MatrixXd& sig,
                    const Eigen::VectorXd& u, double y) {
  const AugmentedDynamics d = augment(p, u);
  mu = d.a * mu + d.b;
  sig = d.a * sig * d.a.transpose() + p.sigma_w;
  sig = (0.5 * (sig + sig.transpose())).eval();
  const double s = (p.c1 * sig * p.c1.transpose())(0) + p.sigma_v;
  if (s <= 0) throw std::runtime_error("live filter: nonpositive innovation variance");
  const Eigen::VectorXd kg = (sig * p.c1.transpose()) / s;
  mu += kg * (y - p.c0 - (p.c1 * mu)(0));
  sig = (sig - kg * (p.c1 * sig)).eval();
  sig = (0.5 * (sig + sig.transpose())).eval();
}

struct FitState {
  ModelParams params;
  bool have = false;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sig;
};

// Refit on the latest window and re-anchor the live filter. A failed fit
// keeps the previous model (if any); cold starts get a few fresh restarts
// since a bad random initialization can blow the forward pass up.
bool refit_and_anchor(const LoopConfig& cfg, const std::vector<AggregatedLog>& history,
                      const AggregatedLog& live, Rng& init_rng, FitState& fs,
                      std::vector<double>& fit_seconds, std::vector<double>& fit_min_eigs,
                      int& em_failures, int& refits) {
  const TrajectoryDataset ds = build_dataset(history, live, cfg.k_win);
  const int attempts = fs.have ? 1 : 3;
  const double t0 = now_s();
  bool accepted = false;
  for (int a = 0; a < attempts && !accepted; ++a) {
    try {
      const ModelParams p0 = fs.have ? fs.params : init_params(ds, cfg.n_bins, init_rng);
      auto [pf, rep] = em_fit(ds, p0);
      fs.params = std::move(pf);
      fs.have = true;
      accepted = true;
      fit_seconds.push_back(now_s() - t0);
      for (const FitIter& it : rep.iters) fit_min_eigs.push_back(it.min_eig);
      ++refits;
    } catch (const std::runtime_error&) {
      ++em_failures;
    }
  }
  if (!fs.have) return false;
  const LiveFilter lf = replay_filter(fs.params, live, cfg.k_win);
  fs.mu = lf.mu;
  fs.sig = lf.sig;
  return accepted;
}

// Projection onto { w >= 0, sum over each source's arrows <= mass at source }.
// Sources are disjoint across arrows, so the projection decomposes per group
// (groups have at most two members: the interior idle bins).
Eigen::VectorXd project_transfers(Eigen::VectorXd v, const Eigen::VectorXd& x,
                                  const std::vector<std::vector<int>>& by_src) {
  v = v.cwiseMax(0.0);
  for (size_t s = 0; s < by_src.size(); ++s) {
    const auto& grp = by_src[s];
    if (grp.empty()) continue;
    const double cap = std::max(0.0, x[static_cast<int>(s)]);
    double total = 0;
    for (int j : grp) total += v[j];
    if (total <= cap) continue;
    if (grp.size() == 1) {
      v[grp[0]] = cap;
      continue;
    }
    double lo = 0, hi = 0;
    for (int j : grp) hi = std::max(hi, v[j]);
    for (int it = 0; it < 60; ++it) {
      const double tau = 0.5 * (lo + hi);
      double sum = 0;
      for (int j : grp) sum += std::max(v[j] - tau, 0.0);
      (sum > cap ? lo : hi) = tau;
    }
    for (int j : grp) v[j] = std::max(v[j] - hi, 0.0);
  }
  return v;
}

// Broadcast chosen from the occupancy model: projected gradient on the mass
// transfers u' with quadratic tracking + effort cost, then converted back to
// switching fractions.
Eigen::VectorXd essm_broadcast(const EssmModel& em, const Eigen::VectorXd& x,
                               double p_now_kw, double p_ref_kw,
                               const RegulationConfig& c) {
  const int nb = em.n_bins;
  const int m = n_inputs(nb);
  const Eigen::RowVectorXd crow = em.C.row(0);
  // Anchor the hold prediction on measured aggregate power so the solver
  // sizes transfers against the real level, not the occupancy estimate of it.
  const double p0 = p_now_kw + crow.dot(em.A * x - x);
  const Eigen::VectorXd gb = (crow * em.B).transpose();

  std::vector<std::vector<int>> by_src(n_states(nb));
  for (int j = 0; j < m; ++j) by_src[arrow_source(j, nb)].push_back(j);

  const double lip = 2.0 * (c.q_w * gb.squaredNorm() + c.r_w);
  Eigen::VectorXd up = Eigen::VectorXd::Zero(m);
  for (int it = 0; it < c.mpc_max_iter; ++it) {
    const double e = p0 + gb.dot(up) - p_ref_kw;
    const Eigen::VectorXd grad = 2.0 * c.q_w * e * gb + 2.0 * c.r_w * up;
    const Eigen::VectorXd nxt = project_transfers(up - grad / lip, x, by_src);
    const double move = (nxt - up).lpNorm<Eigen::Infinity>();
    up = nxt;
    if (move <= 1e-12) break;
  }
  Eigen::VectorXd u = uprime_to_u(up, x, nb);
  return u.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

double mape_pct(const std::vector<double>& ref, const std::vector<double>& actual) {
  if (ref.size() != actual.size()) throw std::invalid_argument("mape_pct: size mismatch");
  double sum = 0;
  long n = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    if (std::abs(ref[i]) <= 1e-6) continue;
    sum += std::abs(actual[i] - ref[i]) / std::abs(ref[i]);
    ++n;
  }
  return n ? 100.0 * sum / static_cast<double>(n) : 0.0;
}

double mean_abs_err(const std::vector<double>& ref, const std::vector<double>& actual) {
  if (ref.size() != actual.size()) throw std::invalid_argument("mean_abs_err: size mismatch");
  if (ref.empty()) return 0.0;
  double sum = 0;
  for (size_t i = 0; i < ref.size(); ++i) sum += std::abs(actual[i] - ref[i]);
  return sum / static_cast<double>(ref.size());
}

MetricsReport compute_metrics(const RunLog& log, double f_deadband) {
  MetricsReport rep;
  rep.rows = static_cast<int>(log.size());
  if (log.empty()) return rep;
  std::vector<double> ref, real;
  ref.reserve(log.size());
  real.reserve(log.size());
  long inband = 0;
  double mae_sum = 0;
  for (const RunLogRow& r : log) {
    ref.push_back(r.p_ref_kw);
    real.push_back(r.p_ev_real_kw);
    mae_sum += std::abs(r.p_ref_kw - r.p_ev_real_kw);
    rep.max_abs_df_hz = std::max(rep.max_abs_df_hz, std::abs(r.delta_f_hz));
    if (std::abs(r.delta_f_hz) <= f_deadband) ++inband;
    rep.refits += r.refit_flag;
  }
  rep.mape_pct = mape_pct(ref, real);
  rep.mae_mw = mae_sum / static_cast<double>(log.size()) / 1000.0;
  rep.inband_pct = 100.0 * static_cast<double>(inband) / static_cast<double>(log.size());
  return rep;
}

Eigen::VectorXd excitation_u(const LoopConfig& cfg, uint64_t day_tag, int step) {
  const int nb = cfg.n_bins;
  const int m = n_inputs(nb);
  const int hold = std::max(1, cfg.excitation_hold);
  Rng rng(day_seed(cfg, day_tag), static_cast<uint64_t>(step / hold), Purpose::excitation);
  Eigen::VectorXd u(m);
  for (int j = 0; j < m; ++j) {
    // Arrows leaving charging, entering discharging, or leaving the
    // fully-charged edge all weaken the charging dominance of the fleet.
    const bool discharge_side = j < 2 * nb || j == 4 * nb + 1;
    const double cap = discharge_side ? cfg.cap_discharge_side : cfg.cap_charge_side;
    u[j] = cap * rng.uniform();
  }
  return u;
}

AggregatedLog run_excitation_day(const LoopConfig& cfg, uint64_t day_tag,
                                 double t_begin_h, int n_steps, bool parallel_fleet) {
  const uint64_t dseed = day_seed(cfg, day_tag);
  FleetScenario sc = cfg.scenario;
  sc.seed = dseed;
  sc.dt_s = cfg.reg.dt_s;
  std::vector<EvAgent> fleet = sample_fleet(sc);
  fleet_init_natural(fleet, t_begin_h, sc);

  AggregatedLog log;
  log.t0_s = t_begin_h * 3600.0;
  log.dt_s = cfg.reg.dt_s;
  log.u.reserve(n_steps);
  log.y.reserve(n_steps + 1);
  log.y.push_back(fleet_power_instant(fleet));
  for (int k = 0; k < n_steps; ++k) {
    const double t_h = t_begin_h + k * cfg.reg.dt_s / 3600.0;
    Eigen::VectorXd u = excitation_u(cfg, day_tag, k);
    apply_broadcast(fleet, u, cfg.n_bins, dseed, static_cast<uint64_t>(k), sc.s_min,
                    sc.s_max, parallel_fleet);
    const FleetStepStats st =
        fleet_step(fleet, t_h, cfg.reg.dt_s, sc.s_min, sc.s_max, parallel_fleet);
    log.u.push_back(std::move(u));
    log.y.push_back(st.p_kw);
  }
  return log;
}

std::vector<AggregatedLog> make_history(const LoopConfig& cfg, bool parallel) {
  const int n_steps =
      cfg.k_win + static_cast<int>(std::lround(cfg.horizon_s / cfg.reg.dt_s));
  const double t_begin_h = cfg.t_start_h - cfg.k_win * cfg.reg.dt_s / 3600.0;
  std::vector<AggregatedLog> hist(cfg.n_hist);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int d = 0; d < cfg.n_hist; ++d) {
    hist[d] = run_excitation_day(cfg, static_cast<uint64_t>(d) + 1, t_begin_h, n_steps,
                                 /*parallel_fleet=*/false);
  }
  return hist;
}

PredictionRun prediction_run(const LoopConfig& cfg,
                             const std::vector<AggregatedLog>& history) {
  const double dt = cfg.reg.dt_s;
  const int burn = cfg.k_win;
  const int horizon = static_cast<int>(std::lround(cfg.horizon_s / dt));
  const int n_p = cfg.reg.n_p;
  const int nb = cfg.n_bins;
  const uint64_t lseed = day_seed(cfg, 0);
  const double t_begin_h = cfg.t_start_h - burn * dt / 3600.0;

  FleetScenario sc = cfg.scenario;
  sc.seed = lseed;
  sc.dt_s = dt;
  std::vector<EvAgent> fleet = sample_fleet(sc);
  fleet_init_natural(fleet, t_begin_h, sc);

  AggregatedLog live;
  live.t0_s = t_begin_h * 3600.0;
  live.dt_s = dt;
  live.y.push_back(fleet_power_instant(fleet));

  auto excited_step = [&](std::vector<EvAgent>& fl, int kg) {
    const double t_h = t_begin_h + kg * dt / 3600.0;
    Eigen::VectorXd u = excitation_u(cfg, 0, kg);
    apply_broadcast(fl, u, nb, lseed, static_cast<uint64_t>(kg), sc.s_min, sc.s_max, true);
    const FleetStepStats st = fleet_step(fl, t_h, dt, sc.s_min, sc.s_max, true);
    live.u.push_back(std::move(u));
    live.y.push_back(st.p_kw);
    return st;
  };

  for (int k = 0; k < burn; ++k) excited_step(fleet, k);

  PredictionRun pr;
  pr.t_s.assign(horizon, 0.0);
  pr.p_real.assign(horizon, 0.0);
  pr.p_pred.assign(horizon, 0.0);
  pr.band_upper.assign(horizon, 0.0);
  pr.band_lower.assign(horizon, 0.0);
  pr.real_upper.assign(horizon, 0.0);
  pr.real_lower.assign(horizon, 0.0);

  FitState fs;
  Rng init_rng(cfg.seed, 0xF17, Purpose::init);
  const Eigen::VectorXd u_hi = upper_extreme_u(nb);
  const Eigen::VectorXd u_lo = lower_extreme_u(nb);

  for (int k = 0; k < horizon; ++k) {
    const int kg = burn + k;
    if (k % n_p == 0)
      refit_and_anchor(cfg, history, live, init_rng, fs, pr.fit_seconds,
                       pr.fit_min_eigs, pr.em_failures, pr.refits);
    if (fs.have) {
      // One-interval-ahead power prediction from the current filter state;
      // the state is refreshed below as each aggregate sample lands.
      const std::vector<Eigen::VectorXd> unext(1, excitation_u(cfg, 0, kg));
      pr.p_pred[k] = mean_rollout(fs.params, fs.mu, unext)[0];
      // The quoted band is the envelope of the extreme rollouts over the
      // roll-in depth: mode occupancy reaches its extreme-direction power
      // mode within two transition hops (charging → idle → discharging and
      // the reverse), plus one step for the drift to settle. An immediate
      // all-out command therefore lands inside the envelope rather than at
      // its edge, and the short depth keeps the quote physical even when the
      // fitted extreme dynamics are marginally unstable.
      const auto band = flexibility_rollout(fs.params, fs.mu, std::min(n_p, 3));
      pr.band_upper[k] = *std::max_element(band.first.begin(), band.first.end());
      pr.band_lower[k] = *std::min_element(band.second.begin(), band.second.end());
      // Fresh fleet copies answer what an all-out command would deliver over
      // the next interval.
      const double t_h = t_begin_h + kg * dt / 3600.0;
      std::vector<EvAgent> rep = fleet;
      apply_broadcast(rep, u_hi, nb, lseed, static_cast<uint64_t>(kg), sc.s_min,
                      sc.s_max, true);
      pr.real_upper[k] = fleet_step(rep, t_h, dt, sc.s_min, sc.s_max, true).p_kw;
      rep = fleet;
      apply_broadcast(rep, u_lo, nb, lseed, static_cast<uint64_t>(kg), sc.s_min,
                      sc.s_max, true);
      pr.real_lower[k] = fleet_step(rep, t_h, dt, sc.s_min, sc.s_max, true).p_kw;
    }
    const FleetStepStats st = excited_step(fleet, kg);
    pr.p_real[k] = st.p_kw;
    pr.t_s[k] = (t_begin_h + (kg + 1) * dt / 3600.0) * 3600.0;
    if (fs.have) filter_advance(fs.params, fs.mu, fs.sig, live.u.back(), st.p_kw);
  }
  return pr;
}

LoopResult regulation_loop(const LoopConfig& cfg, const Profiles& prof,
                           const std::vector<AggregatedLog>& history) {
  const double dt = cfg.reg.dt_s;
  const int horizon = static_cast<int>(std::lround(cfg.horizon_s / dt));
  const int n_p = cfg.reg.n_p;
  const int nb = cfg.n_bins;
  const int m = n_inputs(nb);
  const bool is_bhmm = cfg.controller == ControllerKind::bhmm;
  const bool is_essm = cfg.controller == ControllerKind::essm;
  const int burn = is_bhmm ? cfg.k_win : 0;
  const uint64_t lseed = day_seed(cfg, 0);
  const double t_begin_h = cfg.t_start_h - burn * dt / 3600.0;

  FleetScenario sc = cfg.scenario;
  sc.seed = lseed;
  sc.dt_s = dt;
  std::vector<EvAgent> fleet = sample_fleet(sc);
  fleet_init_natural(fleet, t_begin_h, sc);
  inject_soc_noise(fleet, cfg.soc_noise_bound, lseed, 0);

  AggregatedLog live;
  live.t0_s = t_begin_h * 3600.0;
  live.dt_s = dt;
  live.y.push_back(fleet_power_instant(fleet));

  uint64_t gstep = 0;
  for (int k = 0; k < burn; ++k) {
    const double t_h = t_begin_h + k * dt / 3600.0;
    Eigen::VectorXd u = excitation_u(cfg, 0, k);
    apply_broadcast(fleet, u, nb, lseed, gstep, sc.s_min, sc.s_max, true);
    const FleetStepStats st = fleet_step(fleet, t_h, dt, sc.s_min, sc.s_max, true);
    inject_soc_noise(fleet, cfg.soc_noise_bound, lseed, gstep + 1);
    live.u.push_back(std::move(u));
    live.y.push_back(st.p_kw);
    ++gstep;
  }

  GridState g = cfg.grid0;
  const double t_start_s = cfg.t_start_h * 3600.0;
  g.p_load = prof.load_at(t_start_s);
  g.p_wind = prof.wind_at(t_start_s);
  g.p_cg = std::clamp(g.p_load - g.p_wind - fleet_power_instant(fleet) / 1000.0,
                      cfg.reg.cg_min_mw, cfg.reg.cg_max_mw);
  g.lambda = 0;

  // The loop regulates toward an inner fraction of the dead band; disturbance
  // growth between corrections then keeps deviations inside the grid band.
  RegulationConfig rc = cfg.reg;
  rc.f_deadband *= std::clamp(rc.ctrl_band_frac, 0.0, 1.0);

  LoopResult res;
  res.log.reserve(horizon);
  FitState fs;
  Rng init_rng(cfg.seed, 0xF17, Purpose::init);
  double err_prev = 0;

  for (int k = 0; k < horizon; ++k) {
    const double t_h = cfg.t_start_h + k * dt / 3600.0;
    const double t_s = t_h * 3600.0;
    const double df_start = g.delta_f;

    int refit_flag = 0;
    if (is_bhmm && (k % n_p == 0 || err_prev > cfg.err_refit)) {
      refit_flag = 1;
      refit_and_anchor(cfg, history, live, init_rng, fs, res.fit_seconds,
                       res.fit_min_eigs, res.em_failures, res.refits);
    }

    // One-interval-ahead fleet prediction and flexibility band.
    double p_pred = 0, band_up = 0, band_lo = 0, p_now = 0;
    EssmModel em;
    Eigen::VectorXd x_rep;
    if (is_bhmm && fs.have) {
      const std::vector<Eigen::VectorXd> hold(1, Eigen::VectorXd::Zero(m));
      p_pred = mean_rollout(fs.params, fs.mu, hold)[0];
      const auto band = flexibility_rollout(fs.params, fs.mu, 1);
      band_up = band.first[0];
      band_lo = band.second[0];
    } else if (is_essm) {
      em = build_essm(connected_stats(fleet), nb, dt, sc.s_min, sc.s_max);
      x_rep = fleet_state_vector(fleet, nb, sc.s_min, sc.s_max, /*use_reported=*/true);
      // The occupancy estimate of the power level carries the charger-mix
      // error of whoever happens to be plugged in; measured aggregate power
      // has no such error and is telemetry the operator holds anyway. Anchor
      // all three one-step outputs on it and keep only the transition terms
      // from the reported-SOC state. The filter gives the other controller
      // the same anchoring for free.
      p_now = fleet_power_instant(fleet);
      const OutputTriple now3 = essm_output(em, x_rep);
      const OutputTriple nxt3 = essm_output(em, em.A * x_rep);
      p_pred = p_now + (nxt3.p_kw - now3.p_kw);
      band_up = p_now + (nxt3.p_upper_kw - now3.p_kw);
      band_lo = p_now + (nxt3.p_lower_kw - now3.p_kw);
    }

    g.lambda = update_lambda(g, rc);
    const double dp_demand = pi_regulation(-g.delta_f, g.lambda, rc.f_deadband);
    const DispatchDecision dec =
        dispatch(dp_demand, p_pred, band_up, band_lo, g, rc);
    res.dispatch_clamps += dec.clamped ? 1 : 0;
    g.p_cg = std::clamp(g.p_cg + dec.dp_cg_mw, rc.cg_min_mw, rc.cg_max_mw);

    // Broadcast selection, wire round trip, application.
    Eigen::VectorXd u_apply = Eigen::VectorXd::Zero(m);
    bool send = false;
    if (is_bhmm && fs.have) {
      const double t0 = now_s();
      const MpcResult mr =
          mpc_solve(fs.params, fs.mu, dec.p_ref_kw, band_up, band_lo, rc);
      res.mpc_seconds.push_back(now_s() - t0);
      u_apply = mr.u;
      send = true;
    } else if (is_essm) {
      const double t0 = now_s();
      u_apply = essm_broadcast(em, x_rep, p_now, dec.p_ref_kw, rc);
      res.mpc_seconds.push_back(now_s() - t0);
      send = true;
    }
    if (send) {
      const std::vector<uint8_t> payload =
          encode_broadcast(u_apply, nb, static_cast<uint8_t>(k & 0xff));
      res.broadcast_bytes = static_cast<int>(payload.size());
      u_apply = decode_broadcast(payload);
      apply_broadcast(fleet, u_apply, nb, lseed, gstep, sc.s_min, sc.s_max, true);
    }

    const FleetStepStats st = fleet_step(fleet, t_h, dt, sc.s_min, sc.s_max, true);
    inject_soc_noise(fleet, cfg.soc_noise_bound, lseed, gstep + 1);
    if (is_bhmm) {
      live.u.push_back(u_apply);
      live.y.push_back(st.p_kw);
    }

    // Swing dynamics over the interval, profiles sampled per sub-step.
    const int subs = std::max(1, cfg.reg.swing_substeps);
    const double dts = dt / subs;
    for (int si = 0; si < subs; ++si) {
      const double ts = t_s + si * dts;
      const double imb = g.p_cg + prof.wind_at(ts) + st.p_kw / 1000.0 - prof.load_at(ts);
      swing_step(g, imb, dts);
    }
    g.p_load = prof.load_at(t_s + dt);
    g.p_wind = prof.wind_at(t_s + dt);

    if (is_bhmm && fs.have) filter_advance(fs.params, fs.mu, fs.sig, u_apply, st.p_kw);

    const double err =
        std::abs(dec.p_ref_kw) > 1e-6
            ? std::abs(dec.p_ref_kw - st.p_kw) / std::abs(dec.p_ref_kw)
            : 0.0;
    err_prev = err;

    RunLogRow row;
    row.t_s = t_s;
    row.delta_f_hz = df_start;
    row.p_ev_real_kw = st.p_kw;
    row.p_ref_kw = dec.p_ref_kw;
    row.dp_cg_mw = dec.dp_cg_mw;
    row.err_p = err;
    row.refit_flag = refit_flag;
    res.log.push_back(row);
    ++gstep;
  }
  return res;
}

}  // namespace evagg
