#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evagg/io.hpp"
#include "evagg/loop.hpp"

namespace fs = std::filesystem;
using namespace evagg;

namespace {

// Flag surface shared by the subcommands; mirrors the experiment knobs.
struct CliSpec {
  std::string command;
  std::string scenario_path;
  std::string config_path;
  std::string out_dir = "out";
  std::string data_dir;
  std::string write_scenario;
  uint64_t seed = 1;
  int n_ev = -1;  // <= 0 keeps the scenario value
  int n_bins = 3;
  int days = 300;  // total day-streams incl. the live one
  int k_win = 60;
  double t0_h = 17.0;
  double horizon_h = 5.0;
  double noise = 0.0;
  std::string controller = "bhmm";
  double excitation_cap = -1;
  bool full_range = false;
  int restarts = 3;
  double eps = 0.0;
  int max_iter = 100;
  double load_base_mw = 460.0, wind_base_mw = 25.0, peak_mw = 45.0;
  bool full_bench = false;
};

double vec_mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double vec_max(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s = std::max(s, x);
  return s;
}

RegulationConfig load_reg_json(const std::string& path, RegulationConfig c) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  static const char* known[] = {"f_deadband",    "ramp_mw_per_min", "cg_min_mw",
                                "cg_max_mw",     "dt_s",            "n_p",
                                "swing_substeps", "q_w",            "r_w",
                                "band_weight",   "mpc_tol",         "mpc_max_iter",
                                "lambda_bisect_iters", "lambda_max",
                                "ctrl_band_frac"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw std::runtime_error("unknown config key '" + item.key() + "' in " + path);
  }
  c.f_deadband = j.value("f_deadband", c.f_deadband);
  c.ramp_mw_per_min = j.value("ramp_mw_per_min", c.ramp_mw_per_min);
  c.cg_min_mw = j.value("cg_min_mw", c.cg_min_mw);
  c.cg_max_mw = j.value("cg_max_mw", c.cg_max_mw);
  c.dt_s = j.value("dt_s", c.dt_s);
  c.n_p = j.value("n_p", c.n_p);
  c.swing_substeps = j.value("swing_substeps", c.swing_substeps);
  c.q_w = j.value("q_w", c.q_w);
  c.r_w = j.value("r_w", c.r_w);
  c.band_weight = j.value("band_weight", c.band_weight);
  c.mpc_tol = j.value("mpc_tol", c.mpc_tol);
  c.mpc_max_iter = j.value("mpc_max_iter", c.mpc_max_iter);
  c.lambda_bisect_iters = j.value("lambda_bisect_iters", c.lambda_bisect_iters);
  c.lambda_max = j.value("lambda_max", c.lambda_max);
  c.ctrl_band_frac = j.value("ctrl_band_frac", c.ctrl_band_frac);
  return c;
}

LoopConfig make_loop_cfg(const CliSpec& s) {
  LoopConfig cfg;
  if (!s.scenario_path.empty()) cfg.scenario = load_scenario_json(s.scenario_path);
  if (s.n_ev > 0) cfg.scenario.n_ev = s.n_ev;
  if (!s.config_path.empty()) cfg.reg = load_reg_json(s.config_path, cfg.reg);
  cfg.n_bins = s.n_bins;
  cfg.n_hist = std::max(0, s.days - 1);
  cfg.k_win = s.k_win;
  cfg.t_start_h = s.t0_h;
  cfg.horizon_s = s.horizon_h * 3600.0;
  cfg.soc_noise_bound = s.noise;
  cfg.seed = s.seed;
  if (s.controller == "bhmm") cfg.controller = ControllerKind::bhmm;
  else if (s.controller == "essm") cfg.controller = ControllerKind::essm;
  else if (s.controller == "none") cfg.controller = ControllerKind::none;
  else throw std::runtime_error("unknown controller '" + s.controller + "'");
  if (s.full_range) {
    cfg.cap_discharge_side = cfg.cap_charge_side = 1.0;
  } else if (s.excitation_cap > 0) {
    cfg.cap_discharge_side = cfg.cap_charge_side = s.excitation_cap;
  }
  return cfg;
}

MetricsReport prediction_metrics(const PredictionRun& pr) {
  MetricsReport rep;
  rep.rows = static_cast<int>(pr.t_s.size());
  rep.mape_pct = mape_pct(pr.p_real, pr.p_pred);
  rep.mae_mw = mean_abs_err(pr.p_real, pr.p_pred) / 1000.0;
  rep.refits = pr.refits;
  return rep;
}

int cmd_simulate_fleet(const CliSpec& s) {
  if (!s.write_scenario.empty()) {
    save_scenario_json(s.write_scenario, FleetScenario{});
    return 0;
  }
  FleetScenario sc =
      s.scenario_path.empty() ? FleetScenario{} : load_scenario_json(s.scenario_path);
  if (s.n_ev > 0) sc.n_ev = s.n_ev;
  sc.seed = s.seed;
  std::vector<EvAgent> fleet = sample_fleet(sc);
  fleet_init_natural(fleet, s.t0_h, sc);
  const int n_steps = static_cast<int>(std::lround(s.horizon_h * 3600.0 / sc.dt_s));
  FleetLog log;
  log.reserve(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    const double t_h = s.t0_h + k * sc.dt_s / 3600.0;
    const FleetStepStats st = fleet_step(fleet, t_h, sc.dt_s, sc.s_min, sc.s_max);
    FleetLogRow row;
    row.t_s = t_h * 3600.0;
    row.p_kw = st.p_kw;
    row.p_upper_kw = st.p_upper_kw;
    row.p_lower_kw = st.p_lower_kw;
    row.n_cm = st.n_cm;
    row.n_im = st.n_im;
    row.n_dm = st.n_dm;
    row.n_fcm = st.n_fcm;
    row.n_off = st.n_off;
    log.push_back(row);
  }
  fs::create_directories(s.out_dir);
  write_fleet_log_csv((fs::path(s.out_dir) / "fleet_log.csv").string(), log);
  return 0;
}

int cmd_gen_dataset(const CliSpec& s) {
  const LoopConfig cfg = make_loop_cfg(s);
  const int n_steps = static_cast<int>(std::lround(s.horizon_h * 3600.0 / cfg.reg.dt_s));
  std::vector<AggregatedLog> logs(s.days);
#pragma omp parallel for schedule(dynamic)
  for (int d = 0; d < s.days; ++d)
    logs[d] = run_excitation_day(cfg, static_cast<uint64_t>(d) + 1, s.t0_h, n_steps,
                                 /*parallel_fleet=*/false);
  TrajectoryDataset ds;
  ds.t_start_s = s.t0_h * 3600.0;
  ds.dt_s = cfg.reg.dt_s;
  for (AggregatedLog& log : logs) {
    Trajectory tr;
    tr.u = std::move(log.u);
    tr.y = std::move(log.y);
    ds.trajs.push_back(std::move(tr));
  }
  save_dataset_dir((fs::path(s.out_dir) / "dataset").string(), ds);
  return 0;
}

int cmd_fit(const CliSpec& s) {
  const TrajectoryDataset ds = load_dataset_dir(s.data_dir);
  Rng rng(s.seed, 0, Purpose::init);
  ModelParams best;
  FitReport best_rep;
  bool have = false;
  std::string last_err = "no restarts attempted";
  for (int r = 0; r < std::max(1, s.restarts); ++r) {
    try {
      const ModelParams p0 = init_params(ds, s.n_bins, rng);
      auto [pf, rep] = em_fit(ds, p0, s.eps, s.max_iter);
      if (!have || rep.iters.back().loglik > best_rep.iters.back().loglik) {
        best = pf;
        best_rep = rep;
        have = true;
      }
    } catch (const std::runtime_error& e) {
      last_err = e.what();
    }
  }
  if (!have) throw std::runtime_error("all restarts failed: " + last_err);
  fs::create_directories(s.out_dir);
  write_fit_report_csv((fs::path(s.out_dir) / "fit_report.csv").string(), best_rep);
  save_params((fs::path(s.out_dir) / "params.csv").string(), best);
  write_matrix_csv((fs::path(s.out_dir) / "A.csv").string(), best.A);
  return 0;
}

int cmd_predict(const CliSpec& s) {
  const LoopConfig cfg = make_loop_cfg(s);
  const std::vector<AggregatedLog> hist = make_history(cfg);
  const PredictionRun pr = prediction_run(cfg, hist);
  fs::create_directories(s.out_dir);
  write_prediction_csv((fs::path(s.out_dir) / "prediction.csv").string(), pr);
  write_metrics_csv((fs::path(s.out_dir) / "metrics.csv").string(), prediction_metrics(pr),
                    vec_mean(pr.fit_seconds), vec_max(pr.fit_seconds), 0);
  return 0;
}

int cmd_regulate(const CliSpec& s) {
  const LoopConfig cfg = make_loop_cfg(s);
  ProfileConfig pc;
  pc.t0_s = s.t0_h * 3600.0;
  pc.horizon_s = s.horizon_h * 3600.0;
  pc.load_base_mw = s.load_base_mw;
  pc.wind_base_mw = s.wind_base_mw;
  pc.peak_mw = s.peak_mw;
  pc.seed = s.seed;
  const Profiles prof = synth_profiles(pc);
  std::vector<AggregatedLog> hist;
  if (cfg.controller == ControllerKind::bhmm) hist = make_history(cfg);
  const LoopResult res = regulation_loop(cfg, prof, hist);
  fs::create_directories(s.out_dir);
  write_run_log_csv((fs::path(s.out_dir) / "run_log.csv").string(), res.log);
  write_profiles_csv((fs::path(s.out_dir) / "profiles.csv").string(), prof);
  write_metrics_csv((fs::path(s.out_dir) / "metrics.csv").string(),
                    compute_metrics(res.log, cfg.reg.f_deadband),
                    vec_mean(res.fit_seconds), vec_max(res.fit_seconds),
                    res.broadcast_bytes);
  return 0;
}

int cmd_bench(const CliSpec& s) {
  struct Row {
    std::string sweep;
    double value, mape, fit_mean;
    int refits;
  };
  std::vector<Row> rows;
  auto point = [&](const std::string& sweep, double val, int nev, int bins, int days,
                   int k) {
    CliSpec p = s;
    p.n_ev = nev;
    p.n_bins = bins;
    p.days = days;
    p.k_win = k;
    p.horizon_h = s.full_bench ? 5.0 : 1.0;
    const LoopConfig cfg = make_loop_cfg(p);
    const std::vector<AggregatedLog> hist = make_history(cfg);
    const PredictionRun pr = prediction_run(cfg, hist);
    rows.push_back({sweep, val, mape_pct(pr.p_real, pr.p_pred),
                    vec_mean(pr.fit_seconds), pr.refits});
    std::printf("bench %s=%g mape=%.3f%% fit=%.3fs\n", sweep.c_str(), val,
                rows.back().mape, rows.back().fit_mean);
  };
  const int base_days = s.full_bench ? 300 : 60;
  for (int nev : {200, 1000, 5000, 10000}) point("n_ev", nev, nev, 3, base_days, 60);
  for (int nb : {2, 3, 4}) point("n_bins", nb, 2000, nb, base_days, 60);
  for (int d : {30, 60, 120}) point("n_days", d, 2000, 3, d, 60);
  for (int k : {30, 60, 90}) point("k_win", k, 2000, 3, base_days, k);
  fs::create_directories(s.out_dir);
  std::ofstream out(fs::path(s.out_dir) / "bench.csv");
  out << "sweep,value,mape_pct,fit_s_mean,refits\n";
  for (const Row& r : rows)
    out << r.sweep << ',' << format_g17(r.value) << ',' << format_g17(r.mape) << ','
        << format_g17(r.fit_mean) << ',' << r.refits << '\n';
  return 0;
}

int run_command(const CliSpec& s) {
  if (s.command == "simulate-fleet") return cmd_simulate_fleet(s);
  if (s.command == "gen-dataset") return cmd_gen_dataset(s);
  if (s.command == "fit") return cmd_fit(s);
  if (s.command == "predict") return cmd_predict(s);
  if (s.command == "regulate") return cmd_regulate(s);
  if (s.command == "bench") return cmd_bench(s);
  throw std::runtime_error("unknown command '" + s.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CliSpec s;
  if (const char* env = std::getenv("EVAGG_OUT")) s.out_dir = env;

  CLI::App app{"aggregated EV fleet identification and regulation toolkit"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", s.seed, "master seed; all randomness derives from it");
    sub->add_option("--out", s.out_dir, "output directory (env EVAGG_OUT overrides default)");
    sub->add_option("--scenario", s.scenario_path, "fleet scenario JSON");
    sub->add_option("--nev", s.n_ev, "override fleet size");
    sub->add_option("--t0", s.t0_h, "start-of-run clock, hours");
    sub->add_option("--horizon", s.horizon_h, "run length, hours");
  };
  auto add_ident = [&](CLI::App* sub) {
    sub->add_option("--bins", s.n_bins, "SOC bins per mode");
    sub->add_option("--days", s.days, "day-streams (identification uses all of them)");
    sub->add_option("--k", s.k_win, "identification window length, steps");
    sub->add_option("--config", s.config_path, "regulation config JSON");
  };

  CLI::App* sim = app.add_subcommand("simulate-fleet", "natural fleet day, no broadcasts");
  add_common(sim);
  sim->add_option("--write-default-scenario", s.write_scenario,
                  "emit the default scenario JSON to this path and exit");

  CLI::App* gen = app.add_subcommand("gen-dataset", "excited-fleet trajectory CSVs");
  add_common(gen);
  add_ident(gen);
  gen->add_option("--cap", s.excitation_cap, "per-entry excitation cap (default 0.15/0.30)");
  gen->add_flag("--full-range", s.full_range, "draw excitation entries from U(0,1)");

  CLI::App* fit = app.add_subcommand("fit", "EM identification on a saved dataset");
  fit->add_option("--data", s.data_dir, "dataset directory from gen-dataset")->required();
  fit->add_option("--bins", s.n_bins, "SOC bins per mode");
  fit->add_option("--seed", s.seed, "master seed");
  fit->add_option("--out", s.out_dir, "output directory");
  fit->add_option("--restarts", s.restarts, "random restarts");
  fit->add_option("--eps", s.eps, "log-likelihood gain threshold (<=0 auto)");
  fit->add_option("--max-iter", s.max_iter, "iteration cap");

  CLI::App* pred = app.add_subcommand("predict", "sliding-window prediction vs microsim");
  add_common(pred);
  add_ident(pred);

  CLI::App* reg = app.add_subcommand("regulate", "closed-loop frequency regulation");
  add_common(reg);
  add_ident(reg);
  reg->add_option("--controller", s.controller, "bhmm | essm | none");
  reg->add_option("--noise", s.noise, "reported-SOC corruption bound, fraction");
  reg->add_option("--load-base", s.load_base_mw, "base load, MW");
  reg->add_option("--wind-base", s.wind_base_mw, "base wind, MW");
  reg->add_option("--peak", s.peak_mw, "evening peak bump, MW");

  CLI::App* bench = app.add_subcommand("bench", "accuracy/runtime sweeps");
  bench->add_option("--seed", s.seed, "master seed");
  bench->add_option("--out", s.out_dir, "output directory");
  bench->add_flag("--full", s.full_bench, "paper-scale sweep (slow)");

  CLI11_PARSE(app, argc, argv);
  s.command = app.get_subcommands().front()->get_name();

  try {
    return run_command(s);
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"command", s.command}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}
