#include "evagg/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace evagg {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) cells.push_back(cur);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::vector<std::string>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv(line));
  }
  return rows;
}

double to_d(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("bad numeric cell '" + s + "' in " + where);
  return v;
}

long to_l(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("bad integer cell '" + s + "' in " + where);
  return v;
}

void expect_header(const std::vector<std::vector<std::string>>& rows,
                   const std::string& header, const std::string& path) {
  if (rows.empty() || rows[0] != split_csv(header))
    throw std::runtime_error("unexpected header in " + path + ", want: " + header);
}

void write_flat(std::ofstream& out, const std::string& key, const double* data, long count) {
  out << key;
  for (long i = 0; i < count; ++i) out << ',' << format_g17(data[i]);
  out << '\n';
}

}  // namespace

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_fleet_log_csv(const std::string& path, const FleetLog& log) {
  auto out = open_out(path);
  out << "t_s,p_kw,p_upper_kw,p_lower_kw,n_cm,n_im,n_dm,n_fcm,n_off\n";
  for (const FleetLogRow& r : log) {
    out << format_g17(r.t_s) << ',' << format_g17(r.p_kw) << ','
        << format_g17(r.p_upper_kw) << ',' << format_g17(r.p_lower_kw) << ','
        << r.n_cm << ',' << r.n_im << ',' << r.n_dm << ',' << r.n_fcm << ','
        << r.n_off << '\n';
  }
}

FleetLog read_fleet_log_csv(const std::string& path) {
  const auto rows = read_rows(path);
  expect_header(rows, "t_s,p_kw,p_upper_kw,p_lower_kw,n_cm,n_im,n_dm,n_fcm,n_off", path);
  FleetLog log;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != 9) throw std::runtime_error("bad row width in " + path);
    FleetLogRow r;
    r.t_s = to_d(c[0], path);
    r.p_kw = to_d(c[1], path);
    r.p_upper_kw = to_d(c[2], path);
    r.p_lower_kw = to_d(c[3], path);
    r.n_cm = static_cast<int>(to_l(c[4], path));
    r.n_im = static_cast<int>(to_l(c[5], path));
    r.n_dm = static_cast<int>(to_l(c[6], path));
    r.n_fcm = static_cast<int>(to_l(c[7], path));
    r.n_off = static_cast<int>(to_l(c[8], path));
    log.push_back(r);
  }
  return log;
}

void write_run_log_csv(const std::string& path, const RunLog& log) {
  auto out = open_out(path);
  out << "t_s,delta_f_hz,p_ev_real_kw,p_ref_kw,dp_cg_mw,err_p,refit_flag\n";
  for (const RunLogRow& r : log) {
    out << format_g17(r.t_s) << ',' << format_g17(r.delta_f_hz) << ','
        << format_g17(r.p_ev_real_kw) << ',' << format_g17(r.p_ref_kw) << ','
        << format_g17(r.dp_cg_mw) << ',' << format_g17(r.err_p) << ','
        << r.refit_flag << '\n';
  }
}

RunLog read_run_log_csv(const std::string& path) {
  const auto rows = read_rows(path);
  expect_header(rows, "t_s,delta_f_hz,p_ev_real_kw,p_ref_kw,dp_cg_mw,err_p,refit_flag", path);
  RunLog log;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != 7) throw std::runtime_error("bad row width in " + path);
    RunLogRow r;
    r.t_s = to_d(c[0], path);
    r.delta_f_hz = to_d(c[1], path);
    r.p_ev_real_kw = to_d(c[2], path);
    r.p_ref_kw = to_d(c[3], path);
    r.dp_cg_mw = to_d(c[4], path);
    r.err_p = to_d(c[5], path);
    r.refit_flag = static_cast<int>(to_l(c[6], path));
    log.push_back(r);
  }
  return log;
}

void write_fit_report_csv(const std::string& path, const FitReport& rep) {
  auto out = open_out(path);
  out << "iter,loglik,min_eig,elapsed_s\n";
  for (const FitIter& it : rep.iters) {
    out << it.iter << ',' << format_g17(it.loglik) << ',' << format_g17(it.min_eig)
        << ',' << format_g17(it.elapsed_s) << '\n';
  }
}

FitReport read_fit_report_csv(const std::string& path) {
  const auto rows = read_rows(path);
  expect_header(rows, "iter,loglik,min_eig,elapsed_s", path);
  FitReport rep;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != 4) throw std::runtime_error("bad row width in " + path);
    FitIter it;
    it.iter = static_cast<int>(to_l(c[0], path));
    it.loglik = to_d(c[1], path);
    it.min_eig = to_d(c[2], path);
    it.elapsed_s = to_d(c[3], path);
    rep.iters.push_back(it);
  }
  if (!rep.iters.empty()) rep.total_s = rep.iters.back().elapsed_s;
  return rep;
}

void write_profiles_csv(const std::string& path, const Profiles& p) {
  auto out = open_out(path);
  out << "t_s,p_wind_mw,p_load_mw\n";
  for (const ProfilePoint& pt : p.pts) {
    out << format_g17(pt.t_s) << ',' << format_g17(pt.p_wind_mw) << ','
        << format_g17(pt.p_load_mw) << '\n';
  }
}

Profiles read_profiles_csv(const std::string& path) {
  const auto rows = read_rows(path);
  expect_header(rows, "t_s,p_wind_mw,p_load_mw", path);
  Profiles p;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != 3) throw std::runtime_error("bad row width in " + path);
    p.pts.push_back({to_d(c[0], path), to_d(c[1], path), to_d(c[2], path)});
  }
  return p;
}

void write_prediction_csv(const std::string& path, const PredictionRun& pr) {
  auto out = open_out(path);
  out << "t_s,p_real_kw,p_pred_kw,band_upper_kw,band_lower_kw,real_upper_kw,real_lower_kw\n";
  for (size_t i = 0; i < pr.t_s.size(); ++i) {
    out << format_g17(pr.t_s[i]) << ',' << format_g17(pr.p_real[i]) << ','
        << format_g17(pr.p_pred[i]) << ',' << format_g17(pr.band_upper[i]) << ','
        << format_g17(pr.band_lower[i]) << ',' << format_g17(pr.real_upper[i]) << ','
        << format_g17(pr.real_lower[i]) << '\n';
  }
}

PredictionRun read_prediction_csv(const std::string& path) {
  const auto rows = read_rows(path);
  expect_header(
      rows, "t_s,p_real_kw,p_pred_kw,band_upper_kw,band_lower_kw,real_upper_kw,real_lower_kw",
      path);
  PredictionRun pr;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != 7) throw std::runtime_error("bad row width in " + path);
    pr.t_s.push_back(to_d(c[0], path));
    pr.p_real.push_back(to_d(c[1], path));
    pr.p_pred.push_back(to_d(c[2], path));
    pr.band_upper.push_back(to_d(c[3], path));
    pr.band_lower.push_back(to_d(c[4], path));
    pr.real_upper.push_back(to_d(c[5], path));
    pr.real_lower.push_back(to_d(c[6], path));
  }
  return pr;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& mat) {
  auto out = open_out(path);
  out << "i,j,value\n";
  for (Eigen::Index i = 0; i < mat.rows(); ++i)
    for (Eigen::Index j = 0; j < mat.cols(); ++j)
      out << i << ',' << j << ',' << format_g17(mat(i, j)) << '\n';
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const auto rows = read_rows(path);
  expect_header(rows, "i,j,value", path);
  long max_i = -1, max_j = -1;
  for (size_t r = 1; r < rows.size(); ++r) {
    max_i = std::max(max_i, to_l(rows[r][0], path));
    max_j = std::max(max_j, to_l(rows[r][1], path));
  }
  Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(max_i + 1, max_j + 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& c = rows[r];
    if (c.size() != 3) throw std::runtime_error("bad row width in " + path);
    mat(to_l(c[0], path), to_l(c[1], path)) = to_d(c[2], path);
  }
  return mat;
}

void save_params(const std::string& path, const ModelParams& p) {
  p.check_dims();
  auto out = open_out(path);
  out << "format,evagg-params-1\n";
  out << "bins," << p.bins << '\n';
  out << "n," << p.n << '\n';
  out << "m," << p.m << '\n';
  out << "c0," << format_g17(p.c0) << '\n';
  out << "sigma_v," << format_g17(p.sigma_v) << '\n';
  Eigen::MatrixXd t = p.A.transpose();  // row-major flattening
  write_flat(out, "A", t.data(), t.size());
  for (int j = 0; j < p.m; ++j) {
    t = p.V[j].transpose();
    write_flat(out, "V" + std::to_string(j), t.data(), t.size());
  }
  t = p.drift.transpose();
  write_flat(out, "drift", t.data(), t.size());
  Eigen::VectorXd row = p.c1.transpose();
  write_flat(out, "c1", row.data(), row.size());
  write_flat(out, "mu0", p.mu0.data(), p.mu0.size());
  t = p.sigma0.transpose();
  write_flat(out, "sigma0", t.data(), t.size());
  t = p.sigma_w.transpose();
  write_flat(out, "sigma_w", t.data(), t.size());
}

ModelParams load_params(const std::string& path) {
  const auto rows = read_rows(path);
  std::map<std::string, std::vector<double>> fields;
  for (const auto& r : rows) {
    if (r.empty()) continue;
    if (r[0] == "format") {
      if (r.size() != 2 || r[1] != "evagg-params-1")
        throw std::runtime_error("unknown params format in " + path);
      continue;
    }
    std::vector<double> vals;
    for (size_t i = 1; i < r.size(); ++i) vals.push_back(to_d(r[i], path));
    fields[r[0]] = std::move(vals);
  }
  auto get = [&](const std::string& key) -> const std::vector<double>& {
    auto it = fields.find(key);
    if (it == fields.end())
      throw std::runtime_error("missing field '" + key + "' in " + path);
    return it->second;
  };
  auto as_mat = [&](const std::string& key, int r, int c) {
    const auto& v = get(key);
    if (static_cast<long>(v.size()) != static_cast<long>(r) * c)
      throw std::runtime_error("bad size for field '" + key + "' in " + path);
    Eigen::MatrixXd mat(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) mat(i, j) = v[static_cast<size_t>(i) * c + j];
    return mat;
  };
  ModelParams p;
  p.bins = static_cast<int>(get("bins").at(0));
  p.n = static_cast<int>(get("n").at(0));
  p.m = static_cast<int>(get("m").at(0));
  p.c0 = get("c0").at(0);
  p.sigma_v = get("sigma_v").at(0);
  p.A = as_mat("A", p.n, p.n);
  p.V.resize(p.m);
  for (int j = 0; j < p.m; ++j) p.V[j] = as_mat("V" + std::to_string(j), p.n, p.n);
  p.drift = as_mat("drift", p.m + 1, p.n);
  p.c1 = as_mat("c1", 1, p.n).row(0);
  p.mu0 = as_mat("mu0", 1, p.n).row(0).transpose();
  p.sigma0 = as_mat("sigma0", p.n, p.n);
  p.sigma_w = as_mat("sigma_w", p.n, p.n);
  p.check_dims();
  return p;
}

void save_dataset_dir(const std::string& dir, const TrajectoryDataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  const int m = ds.input_dim();
  const int k = ds.k_len();
  {
    auto out = open_out((fs::path(dir) / "meta.csv").string());
    out << "t_start_s,dt_s,k_len,input_dim,n_trajs\n";
    out << format_g17(ds.t_start_s) << ',' << format_g17(ds.dt_s) << ',' << k << ','
        << m << ',' << ds.trajs.size() << '\n';
  }
  for (size_t t = 0; t < ds.trajs.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "traj_%04zu.csv", t);
    auto out = open_out((fs::path(dir) / name).string());
    out << "k";
    for (int j = 1; j <= m; ++j) out << ",u_" << j;
    out << ",p_kw\n";
    const Trajectory& tr = ds.trajs[t];
    for (int i = 0; i <= k; ++i) {
      out << i;
      for (int j = 0; j < m; ++j)
        out << ',' << format_g17(i < k ? tr.u[i][j] : 0.0);
      out << ',' << format_g17(tr.y[i]) << '\n';
    }
  }
}

TrajectoryDataset load_dataset_dir(const std::string& dir) {
  const auto meta = read_rows((fs::path(dir) / "meta.csv").string());
  expect_header(meta, "t_start_s,dt_s,k_len,input_dim,n_trajs", dir + "/meta.csv");
  if (meta.size() != 2 || meta[1].size() != 5)
    throw std::runtime_error("bad meta.csv in " + dir);
  TrajectoryDataset ds;
  ds.t_start_s = to_d(meta[1][0], dir);
  ds.dt_s = to_d(meta[1][1], dir);
  const int k = static_cast<int>(to_l(meta[1][2], dir));
  const int m = static_cast<int>(to_l(meta[1][3], dir));
  const long n_trajs = to_l(meta[1][4], dir);
  for (long t = 0; t < n_trajs; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "traj_%04ld.csv", t);
    const std::string path = (fs::path(dir) / name).string();
    const auto rows = read_rows(path);
    if (rows.size() != static_cast<size_t>(k) + 2)
      throw std::runtime_error("bad row count in " + path);
    Trajectory tr;
    for (int i = 0; i <= k; ++i) {
      const auto& c = rows[static_cast<size_t>(i) + 1];
      if (c.size() != static_cast<size_t>(m) + 2)
        throw std::runtime_error("bad row width in " + path);
      if (i < k) {
        Eigen::VectorXd u(m);
        for (int j = 0; j < m; ++j) u[j] = to_d(c[static_cast<size_t>(j) + 1], path);
        tr.u.push_back(std::move(u));
      }
      tr.y.push_back(to_d(c[static_cast<size_t>(m) + 1], path));
    }
    ds.trajs.push_back(std::move(tr));
  }
  ds.validate();
  return ds;
}

FleetScenario load_scenario_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  static const char* known[] = {
      "n_ev",          "charger_mixture", "eff_lo",        "eff_hi",
      "cap_lo",        "cap_hi",          "s_initial",     "s_demanded",
      "t_arrive_mean", "t_arrive_std",    "t_depart_mean", "t_depart_std",
      "s_min",         "s_max",           "dt_s",          "seed"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw std::runtime_error("unknown scenario key '" + item.key() + "' in " + path);
  }
  FleetScenario sc;
  auto tn = [&](const nlohmann::json& o, TruncNormal dflt) {
    TruncNormal t = dflt;
    t.mean = o.value("mean", t.mean);
    t.stddev = o.value("stddev", t.stddev);
    t.lo = o.value("lo", t.lo);
    t.hi = o.value("hi", t.hi);
    return t;
  };
  sc.n_ev = j.value("n_ev", sc.n_ev);
  if (j.contains("charger_mixture")) {
    sc.charger_mixture.clear();
    for (const auto& pr : j["charger_mixture"])
      sc.charger_mixture.emplace_back(pr.at(0).get<double>(), pr.at(1).get<double>());
  }
  sc.eff_lo = j.value("eff_lo", sc.eff_lo);
  sc.eff_hi = j.value("eff_hi", sc.eff_hi);
  sc.cap_lo = j.value("cap_lo", sc.cap_lo);
  sc.cap_hi = j.value("cap_hi", sc.cap_hi);
  if (j.contains("s_initial")) sc.s_initial = tn(j["s_initial"], sc.s_initial);
  if (j.contains("s_demanded")) sc.s_demanded = tn(j["s_demanded"], sc.s_demanded);
  sc.t_arrive_mean = j.value("t_arrive_mean", sc.t_arrive_mean);
  sc.t_arrive_std = j.value("t_arrive_std", sc.t_arrive_std);
  sc.t_depart_mean = j.value("t_depart_mean", sc.t_depart_mean);
  sc.t_depart_std = j.value("t_depart_std", sc.t_depart_std);
  sc.s_min = j.value("s_min", sc.s_min);
  sc.s_max = j.value("s_max", sc.s_max);
  sc.dt_s = j.value("dt_s", sc.dt_s);
  sc.seed = j.value("seed", sc.seed);
  return sc;
}

void save_scenario_json(const std::string& path, const FleetScenario& sc) {
  nlohmann::json j;
  j["n_ev"] = sc.n_ev;
  j["charger_mixture"] = nlohmann::json::array();
  for (const auto& pr : sc.charger_mixture)
    j["charger_mixture"].push_back({pr.first, pr.second});
  j["eff_lo"] = sc.eff_lo;
  j["eff_hi"] = sc.eff_hi;
  j["cap_lo"] = sc.cap_lo;
  j["cap_hi"] = sc.cap_hi;
  j["s_initial"] = {{"mean", sc.s_initial.mean},
                    {"stddev", sc.s_initial.stddev},
                    {"lo", sc.s_initial.lo},
                    {"hi", sc.s_initial.hi}};
  j["s_demanded"] = {{"mean", sc.s_demanded.mean},
                     {"stddev", sc.s_demanded.stddev},
                     {"lo", sc.s_demanded.lo},
                     {"hi", sc.s_demanded.hi}};
  j["t_arrive_mean"] = sc.t_arrive_mean;
  j["t_arrive_std"] = sc.t_arrive_std;
  j["t_depart_mean"] = sc.t_depart_mean;
  j["t_depart_std"] = sc.t_depart_std;
  j["s_min"] = sc.s_min;
  j["s_max"] = sc.s_max;
  j["dt_s"] = sc.dt_s;
  j["seed"] = sc.seed;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_metrics_csv(const std::string& path, const MetricsReport& rep,
                       double fit_s_mean, double fit_s_max, int bytes_per_cycle) {
  auto out = open_out(path);
  out << "mape_pct,mae_mw,max_abs_df_hz,inband_pct,refits,rows,fit_s_mean,fit_s_max,"
         "bytes_per_cycle\n";
  out << format_g17(rep.mape_pct) << ',' << format_g17(rep.mae_mw) << ','
      << format_g17(rep.max_abs_df_hz) << ',' << format_g17(rep.inband_pct) << ','
      << rep.refits << ',' << rep.rows << ',' << format_g17(fit_s_mean) << ','
      << format_g17(fit_s_max) << ',' << bytes_per_cycle << '\n';
}

}  // namespace evagg
