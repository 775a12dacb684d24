#include <cmath>
#include <vector>

#include "doctest.h"
#include "evagg/essm.hpp"
#include "evagg/fleet.hpp"

using namespace evagg;

namespace {

FleetStats level_stats(int n_connected) {
  FleetStats st;
  st.eta_bar = 0.915;
  st.q_bar_kwh = 25.0;
  st.p_ac_kw = 6.2;
  st.p_ad_kw = 6.2;
  st.n_connected = n_connected;
  return st;
}

}  // namespace

TEST_CASE("bin transit fractions and drift structure") {
  const EssmModel m = build_essm(level_stats(100), 3, 15.0);
  // 6.2 kW * 0.915 for 15 s on a 25 kWh battery, over a 1/3-wide bin.
  const double q_c = 0.0028365;
  const double q_d = 0.00338798;
  CHECK(m.A(0, 0) == doctest::Approx(1.0 - q_c).epsilon(1e-9));
  CHECK(m.A(1, 0) == doctest::Approx(q_c).epsilon(1e-6));
  CHECK(m.A(2, 1) == doctest::Approx(q_c).epsilon(1e-6));
  CHECK(m.A(10, 2) == doctest::Approx(q_c).epsilon(1e-6));   // top bin -> full idle
  CHECK(m.A(6, 6) == doctest::Approx(1.0 - q_d).epsilon(1e-9));
  CHECK(m.A(9, 6) == doctest::Approx(q_d).epsilon(1e-6));    // bottom bin -> empty idle
  CHECK(m.A(6, 7) == doctest::Approx(q_d).epsilon(1e-6));
  CHECK(m.A(7, 8) == doctest::Approx(q_d).epsilon(1e-6));
  CHECK(m.A(11, 11) == doctest::Approx(1.0 - q_c).epsilon(1e-9));
  CHECK(m.A(10, 11) == doctest::Approx(q_c).epsilon(1e-6));  // forced exits when full
  for (int b = 3; b <= 5; ++b) CHECK(m.A(b, b) == 1.0);      // idle bins do not drift
  CHECK(m.A(9, 9) == 1.0);
  CHECK(m.A(10, 10) == 1.0);

  // Occupancy is conserved: every column sums to one.
  const Eigen::RowVectorXd sums = m.A.colwise().sum();
  for (int c = 0; c < 12; ++c) CHECK(sums[c] == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(build_essm(level_stats(100), 0, 15.0), std::invalid_argument);
  CHECK_THROWS_AS(build_essm(level_stats(100), 3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_essm(level_stats(100), 3, 15.0, 0.9, 0.1), std::invalid_argument);
  // An interval long enough to cross a whole bin cannot be represented.
  CHECK_THROWS_AS(build_essm(level_stats(100), 3, 2.0e5), std::invalid_argument);
}

TEST_CASE("transfer matrix routes one arrow per column") {
  const EssmModel m = build_essm(level_stats(100), 3, 15.0);
  REQUIRE(m.B.rows() == 12);
  REQUIRE(m.B.cols() == 14);
  for (int j = 0; j < 14; ++j) {
    CHECK(m.B(arrow_source(j, 3), j) == -1.0);
    CHECK(m.B(arrow_dest(j, 3), j) == 1.0);
    CHECK(m.B.col(j).cwiseAbs().sum() == 2.0);
    CHECK(m.B.col(j).sum() == 0.0);
  }
}

TEST_CASE("output rows scale with the connected population") {
  const EssmModel m = build_essm(level_stats(100), 3, 15.0);
  for (int b = 0; b < 3; ++b) {
    CHECK(m.C(0, b) == doctest::Approx(-620.0));      // charging bins draw
    CHECK(m.C(0, 6 + b) == doctest::Approx(620.0));   // discharging bins deliver
    CHECK(m.C(0, 3 + b) == 0.0);                      // idle bins are silent
  }
  CHECK(m.C(0, 11) == doctest::Approx(-620.0));
  CHECK(m.C(0, 9) == 0.0);
  CHECK(m.C(0, 10) == 0.0);
  for (int s = 0; s < 9; ++s) {
    CHECK(m.C(1, s) == doctest::Approx(620.0));
    CHECK(m.C(2, s) == doctest::Approx(-620.0));
  }
  CHECK(m.C(1, 9) == 0.0);                            // empty cannot discharge
  CHECK(m.C(1, 10) == doctest::Approx(620.0));
  CHECK(m.C(1, 11) == doctest::Approx(-620.0));       // forced charge is pinned
  CHECK(m.C(2, 9) == doctest::Approx(-620.0));
  CHECK(m.C(2, 10) == 0.0);                           // full cannot charge
  CHECK(m.C(2, 11) == doctest::Approx(-620.0));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
  x[6] = 1.0;
  const OutputTriple y = essm_output(m, x);
  CHECK(y.p_kw == doctest::Approx(620.0));
  CHECK(y.p_upper_kw == doctest::Approx(620.0));
  CHECK(y.p_lower_kw == doctest::Approx(-620.0));
  CHECK_THROWS_AS(essm_output(m, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("stepping conserves mass and rejects overdrawn transfers") {
  const EssmModel m = build_essm(level_stats(100), 3, 15.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
  x[0] = 1.0;

  Eigen::VectorXd none = Eigen::VectorXd::Zero(14);
  Eigen::VectorXd nx = essm_step(m, x, none);
  CHECK(nx[0] == doctest::Approx(1.0 - 0.0028365).epsilon(1e-6));
  CHECK(nx[1] == doctest::Approx(0.0028365).epsilon(1e-4));
  CHECK(nx.sum() == doctest::Approx(1.0).epsilon(1e-14));

  Eigen::VectorXd move = none;
  move[0] = 0.4;  // lowest charging bin -> its idle bin
  nx = essm_step(m, x, move);
  CHECK(nx[3] == doctest::Approx(0.4));
  CHECK(nx[0] == doctest::Approx(0.6 - 0.0028365).epsilon(1e-6));
  CHECK(nx.sum() == doctest::Approx(1.0).epsilon(1e-14));

  Eigen::VectorXd bad = none;
  bad[0] = -0.1;
  CHECK_THROWS_AS(essm_step(m, x, bad), std::invalid_argument);
  bad[0] = 1.1;  // more than the bin holds
  CHECK_THROWS_AS(essm_step(m, x, bad), std::invalid_argument);

  // Two admissible transfers from the same idle bin can still overdraw it.
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(12);
  xi[4] = 0.5;
  Eigen::VectorXd pair = none;
  pair[4] = 0.3;   // idle -> discharging
  pair[10] = 0.3;  // idle -> charging
  CHECK_THROWS_AS(essm_step(m, xi, pair), std::invalid_argument);
  pair[10] = 0.2;
  CHECK_NOTHROW(essm_step(m, xi, pair));

  CHECK_THROWS_AS(essm_step(m, Eigen::VectorXd::Zero(3), none), std::invalid_argument);
  CHECK_THROWS_AS(essm_step(m, x, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("switching fractions and mass transfers are inverse views") {
  Rng rng(41, 0, Purpose::misc);
  Eigen::VectorXd x(12);
  for (int i = 0; i < 12; ++i) x[i] = 0.05 + rng.uniform();
  x /= x.sum();
  Eigen::VectorXd u(14);
  for (int j = 0; j < 14; ++j) u[j] = rng.uniform();

  const Eigen::VectorXd up = u_to_uprime(u, x, 3);
  for (int j = 0; j < 14; ++j)
    CHECK(up[j] == doctest::Approx(u[j] * x[arrow_source(j, 3)]));
  const Eigen::VectorXd back = uprime_to_u(up, x, 3);
  for (int j = 0; j < 14; ++j) CHECK(back[j] == doctest::Approx(u[j]).epsilon(1e-12));

  // An empty source maps 0/0 to 0 instead of poisoning the vector.
  Eigen::VectorXd xe = x;
  xe[0] = 0.0;
  const Eigen::VectorXd upe = u_to_uprime(u, xe, 3);
  CHECK(upe[0] == 0.0);
  CHECK(uprime_to_u(upe, xe, 3)[0] == 0.0);

  CHECK_THROWS_AS(u_to_uprime(u, Eigen::VectorXd::Zero(5), 3), std::invalid_argument);
  CHECK_THROWS_AS(uprime_to_u(Eigen::VectorXd::Zero(5), x, 3), std::invalid_argument);
}

TEST_CASE("occupancy vector classifies agents by mode and SOC") {
  auto agent = [](Mode mode, double soc, double rep) {
    EvAgent a;
    a.p_charge = a.p_discharge = 6.2;
    a.eff_charge = a.eff_discharge = 0.9;
    a.capacity = 25.0;
    a.soc = soc;
    a.soc_reported = rep;
    a.mode = mode;
    return a;
  };
  std::vector<EvAgent> fleet{
      agent(Mode::CM, 0.1, 0.1),  agent(Mode::CM, 0.5, 0.9),
      agent(Mode::DM, 0.9, 0.9),  agent(Mode::IM, 0.5, 0.5),
      agent(Mode::IM, 1.0, 1.0),  agent(Mode::IM, 0.0, 0.0),
      agent(Mode::FCM, 0.5, 0.5), agent(Mode::OFFLINE, 0.5, 0.5)};

  const Eigen::VectorXd x = fleet_state_vector(fleet, 3);
  CHECK(x.sum() == doctest::Approx(1.0));
  CHECK(x[0] == doctest::Approx(1.0 / 7));   // charging, bottom bin
  CHECK(x[1] == doctest::Approx(1.0 / 7));   // charging, middle bin
  CHECK(x[8] == doctest::Approx(1.0 / 7));   // discharging, top bin
  CHECK(x[4] == doctest::Approx(1.0 / 7));   // interior idle
  CHECK(x[10] == doctest::Approx(1.0 / 7));  // full
  CHECK(x[9] == doctest::Approx(1.0 / 7));   // empty
  CHECK(x[11] == doctest::Approx(1.0 / 7));  // forced charging

  // Reported SOC moves the second agent to the top charging bin.
  const Eigen::VectorXd xr = fleet_state_vector(fleet, 3, 0.0, 1.0, true);
  CHECK(xr[1] == 0.0);
  CHECK(xr[2] == doctest::Approx(1.0 / 7));

  std::vector<EvAgent> empty{agent(Mode::OFFLINE, 0.5, 0.5)};
  CHECK_THROWS_AS(fleet_state_vector(empty, 3), std::runtime_error);
}

TEST_CASE("connected averages skip absent agents") {
  auto agent = [](Mode mode, double p, double eff, double cap) {
    EvAgent a;
    a.p_charge = a.p_discharge = p;
    a.eff_charge = a.eff_discharge = eff;
    a.capacity = cap;
    a.mode = mode;
    return a;
  };
  std::vector<EvAgent> fleet{agent(Mode::CM, 6.2, 0.90, 20.0),
                             agent(Mode::IM, 7.2, 0.92, 30.0),
                             agent(Mode::OFFLINE, 19.2, 0.88, 25.0)};
  const FleetStats st = connected_stats(fleet);
  CHECK(st.n_connected == 2);
  CHECK(st.p_ac_kw == doctest::Approx(6.7));
  CHECK(st.eta_bar == doctest::Approx(0.91));
  CHECK(st.q_bar_kwh == doctest::Approx(25.0));

  std::vector<EvAgent> nobody{agent(Mode::OFFLINE, 6.2, 0.9, 25.0)};
  CHECK_THROWS_AS(connected_stats(nobody), std::runtime_error);
}

TEST_CASE("physical template mirrors the occupancy model") {
  const EssmModel m = build_essm(level_stats(250), 3, 15.0);
  const ModelParams p = template_params(m);
  CHECK_NOTHROW(p.check_dims());
  CHECK(p.bins == 3);
  CHECK(p.n == 12);
  CHECK(p.m == 14);
  CHECK((p.A - m.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.c1 - m.C.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.drift.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.c0 == 0.0);
  for (int j = 0; j < 14; ++j) {
    CHECK(p.V[static_cast<size_t>(j)](arrow_source(j, 3), arrow_source(j, 3)) == -1.0);
  }
}

TEST_CASE("occupancy model tracks a large simulated fleet") {
  FleetScenario sc;
  sc.n_ev = 10000;
  sc.seed = 77;
  auto fleet = sample_fleet(sc);
  fleet_init_natural(fleet, 17.0, sc);
  // Roll the microsimulation to 18:00 so the evening population is in place.
  for (int k = 0; k < 240; ++k)
    fleet_step(fleet, 17.0 + k * 15.0 / 3600.0, 15.0, 0.0, 1.0);

  // One-step-ahead power predictions, re-anchored on the true occupancy.
  double err_sum = 0, n_err = 0;
  Eigen::VectorXd x = fleet_state_vector(fleet, 3);
  FleetStats st = connected_stats(fleet);
  EssmModel m = build_essm(st, 3, 15.0);
  for (int k = 0; k < 240; ++k) {
    const double y_hat = essm_output(m, x).p_kw;
    const FleetStepStats real = fleet_step(fleet, 18.0 + k * 15.0 / 3600.0, 15.0, 0.0, 1.0);
    err_sum += std::abs((y_hat - real.p_kw) / real.p_kw);
    n_err += 1;
    st = connected_stats(fleet);
    m = build_essm(st, 3, 15.0);
    x = fleet_state_vector(fleet, 3);
  }
  CHECK(100.0 * err_sum / n_err < 5.0);

  // Short open-loop rollout of occupancy alone stays within the same band.
  Eigen::VectorXd xh = fleet_state_vector(fleet, 3);
  double roll_err = 0;
  for (int k = 0; k < 20; ++k) {
    xh = essm_step(m, xh, Eigen::VectorXd::Zero(14));
    const FleetStepStats real = fleet_step(fleet, 19.0 + k * 15.0 / 3600.0, 15.0, 0.0, 1.0);
    roll_err += std::abs((essm_output(m, xh).p_kw - real.p_kw) / real.p_kw);
  }
  CHECK(100.0 * roll_err / 20.0 < 5.0);
}
