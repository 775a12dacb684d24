#include "evagg/essm.hpp"

#include <cmath>
#include <stdexcept>

namespace evagg {

FleetStats connected_stats(const std::vector<EvAgent>& fleet) {
  FleetStats s;
  s.eta_bar = 0;
  s.q_bar_kwh = 0;
  s.p_ac_kw = 0;
  s.p_ad_kw = 0;
  s.n_connected = 0;
  for (const auto& a : fleet) {
    if (a.mode == Mode::OFFLINE) continue;
    s.eta_bar += a.eff_charge;
    s.q_bar_kwh += a.capacity;
    s.p_ac_kw += a.p_charge;
    s.p_ad_kw += a.p_discharge;
    ++s.n_connected;
  }
  if (s.n_connected == 0) throw std::runtime_error("connected_stats: no EV is connected");
  const double inv = 1.0 / s.n_connected;
  s.eta_bar *= inv;
  s.q_bar_kwh *= inv;
  s.p_ac_kw *= inv;
  s.p_ad_kw *= inv;
  return s;
}

FleetStats default_stats() { return FleetStats{}; }

EssmModel build_essm(const FleetStats& stats, int n_bins, double dt_s,
                     double s_min, double s_max) {
  if (n_bins <= 0) throw std::invalid_argument("build_essm: n_bins must be positive");
  if (dt_s <= 0) throw std::invalid_argument("build_essm: dt must be positive");
  if (s_min >= s_max) throw std::invalid_argument("build_essm: bad SOC band");
  const int N = n_bins;
  const int n = n_states(N);
  const int m = n_inputs(N);
  const double bin_w = (s_max - s_min) / N;
  const double dt_h = dt_s / 3600.0;
  // Fraction of a bin crossed per interval at the average charge/discharge rate.
  const double q_c = stats.p_ac_kw * stats.eta_bar * dt_h / stats.q_bar_kwh / bin_w;
  const double q_d = stats.p_ad_kw * dt_h / (stats.eta_bar * stats.q_bar_kwh) / bin_w;
  if (q_c > 1.0 || q_d > 1.0)
    throw std::invalid_argument("build_essm: interval too long for bin width");

  EssmModel em;
  em.n_bins = N;
  em.n_ev = stats.n_connected;
  em.p_ac = stats.p_ac_kw;
  em.p_ad = stats.p_ad_kw;

  const int idle_min = 3 * N;
  const int idle_max = 3 * N + 1;
  const int fcm = 3 * N + 2;

  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  for (int b = 0; b < N; ++b) {
    // Charging bins climb; the top one spills into fully-charged idle.
    A(b, b) = 1.0 - q_c;
    A(b + 1 < N ? b + 1 : idle_max, b) = q_c;
    // Discharging bins descend; the bottom one drains into fully-discharged idle.
    const int d = 2 * N + b;
    A(d, d) = 1.0 - q_d;
    A(b > 0 ? d - 1 : idle_min, d) = q_d;
  }
  // Forced charging behaves like charging and exits at the full edge.
  A(fcm, fcm) = 1.0 - q_c;
  A(idle_max, fcm) = q_c;
  em.A = A;

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, m);
  for (int j = 0; j < m; ++j) {
    B(arrow_source(j, N), j) = -1.0;
    B(arrow_dest(j, N), j) = 1.0;
  }
  em.B = B;

  const double ne = static_cast<double>(stats.n_connected);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, n);
  for (int b = 0; b < N; ++b) {
    C(0, b) = -ne * stats.p_ac_kw;          // charging draws power
    C(0, 2 * N + b) = ne * stats.p_ad_kw;   // discharging delivers power
  }
  C(0, fcm) = -ne * stats.p_ac_kw;
  for (int s = 0; s < 3 * N; ++s) {
    C(1, s) = ne * stats.p_ad_kw;   // any binned EV could discharge
    C(2, s) = -ne * stats.p_ac_kw;  // ... or charge
  }
  C(1, idle_min) = 0.0;             // empty batteries cannot discharge
  C(1, idle_max) = ne * stats.p_ad_kw;
  C(1, fcm) = -ne * stats.p_ac_kw;  // forced charging is not curtailable
  C(2, idle_min) = -ne * stats.p_ac_kw;
  C(2, idle_max) = 0.0;             // full batteries cannot charge
  C(2, fcm) = -ne * stats.p_ac_kw;
  em.C = C;
  return em;
}

Eigen::VectorXd essm_step(const EssmModel& m, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u_prime) {
  const int N = m.n_bins;
  if (x.size() != n_states(N)) throw std::invalid_argument("essm_step: bad state size");
  if (u_prime.size() != n_inputs(N)) throw std::invalid_argument("essm_step: bad input size");
  Eigen::VectorXd outflow = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index j = 0; j < u_prime.size(); ++j) {
    if (u_prime[j] < 0)
      throw std::invalid_argument("essm_step: negative mass transfer");
    const int src = arrow_source(static_cast<int>(j), N);
    if (u_prime[j] > x[src] + 1e-12)
      throw std::invalid_argument("essm_step: transfer exceeds source mass");
    outflow[src] += u_prime[j];
  }
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (outflow[i] > x[i] + 1e-12)
      throw std::invalid_argument("essm_step: combined transfers exceed source mass");
  return m.A * x + m.B * u_prime;
}

OutputTriple essm_output(const EssmModel& m, const Eigen::VectorXd& x) {
  if (x.size() != n_states(m.n_bins))
    throw std::invalid_argument("essm_output: bad state size");
  const Eigen::Vector3d y = m.C * x;
  return {y[0], y[1], y[2]};
}

Eigen::VectorXd u_to_uprime(const Eigen::VectorXd& u, const Eigen::VectorXd& x, int n_bins) {
  if (u.size() != n_inputs(n_bins) || x.size() != n_states(n_bins))
    throw std::invalid_argument("u_to_uprime: bad sizes");
  Eigen::VectorXd up(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j)
    up[j] = u[j] * x[arrow_source(static_cast<int>(j), n_bins)];
  return up;
}

Eigen::VectorXd uprime_to_u(const Eigen::VectorXd& u_prime, const Eigen::VectorXd& x,
                            int n_bins) {
  if (u_prime.size() != n_inputs(n_bins) || x.size() != n_states(n_bins))
    throw std::invalid_argument("uprime_to_u: bad sizes");
  Eigen::VectorXd u(u_prime.size());
  for (Eigen::Index j = 0; j < u_prime.size(); ++j) {
    const double mass = x[arrow_source(static_cast<int>(j), n_bins)];
    u[j] = (u_prime[j] == 0.0) ? 0.0 : u_prime[j] / mass;
  }
  return u;
}

Eigen::VectorXd fleet_state_vector(const std::vector<EvAgent>& fleet, int n_bins,
                                   double s_min, double s_max, bool use_reported) {
  const int N = n_bins;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_states(N));
  long online = 0;
  for (const auto& a : fleet) {
    if (a.mode == Mode::OFFLINE) continue;
    ++online;
    const double soc = use_reported ? a.soc_reported : a.soc;
    int state;
    switch (a.mode) {
      case Mode::CM:
        state = soc_bin(soc, N, s_min, s_max) - 1;
        break;
      case Mode::DM:
        state = 2 * N + soc_bin(soc, N, s_min, s_max) - 1;
        break;
      case Mode::FCM:
        state = 3 * N + 2;
        break;
      default:  // IM, with the two SOC edges as dedicated states
        if (soc >= s_max) state = 3 * N + 1;
        else if (soc <= s_min) state = 3 * N;
        else state = N + soc_bin(soc, N, s_min, s_max) - 1;
        break;
    }
    x[state] += 1.0;
  }
  if (online == 0)
    throw std::runtime_error("fleet_state_vector: no EV is connected");
  x /= static_cast<double>(online);
  return x;
}

ModelParams template_params(const EssmModel& m) {
  ModelParams p;
  p.bins = m.n_bins;
  p.n = n_states(m.n_bins);
  p.m = n_inputs(m.n_bins);
  p.A = m.A;
  p.V = build_V(m.n_bins);
  p.drift = Eigen::MatrixXd::Zero(p.m + 1, p.n);
  p.c1 = m.C.row(0);
  p.c0 = 0.0;
  p.sigma_w = 1e-8 * Eigen::MatrixXd::Identity(p.n, p.n);
  p.sigma_v = 1e-4;
  p.mu0 = Eigen::VectorXd::Constant(p.n, 1.0 / p.n);
  p.sigma0 = 1e-6 * Eigen::MatrixXd::Identity(p.n, p.n);
  return p;
}

}  // namespace evagg
