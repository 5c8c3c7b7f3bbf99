#include "itr/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "itr/errors.hpp"
#include "itr/inference.hpp"
#include "itr/kernel.hpp"
#include "itr/parallel.hpp"
#include "itr/randomization.hpp"
#include "itr/rules.hpp"
#include "itr/solver.hpp"

namespace itr {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& cell, long row, const std::string& col) {
  if (cell.empty()) {
    std::ostringstream msg;
    msg << "load_csv: empty cell at data row " << row << ", column '" << col << "'";
    throw DataError(msg.str());
  }
  try {
    size_t pos = 0;
    double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    std::ostringstream msg;
    msg << "load_csv: non-numeric value '" << cell << "' at data row " << row << ", column '"
        << col << "'";
    throw DataError(msg.str());
  }
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  if (schema.x_cols.empty()) throw ConfigError("load_csv: no covariate columns declared");
  if (schema.z_col.empty() || schema.y_col.empty())
    throw ConfigError("load_csv: treatment/outcome columns not declared");
  std::ifstream f(path);
  if (!f) throw IoError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(f, line)) throw DataError("load_csv: empty file '" + path + "'");
  std::vector<std::string> header = split_csv_line(line);
  auto col_index = [&](const std::string& name) -> long {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return long(i);
    throw DataError("load_csv: schema mismatch, column '" + name + "' not in header");
  };
  std::vector<long> xi;
  for (const auto& c : schema.x_cols) xi.push_back(col_index(c));
  long zi = col_index(schema.z_col), yi = col_index(schema.y_col);

  std::vector<std::vector<double>> xrows;
  std::vector<double> zs, ys;
  long row = 0;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() < header.size()) {
      std::ostringstream msg;
      msg << "load_csv: data row " << row << " has " << cells.size() << " cells, header has "
          << header.size();
      throw DataError(msg.str());
    }
    std::vector<double> xr;
    for (size_t k = 0; k < xi.size(); ++k)
      xr.push_back(parse_cell(cells[size_t(xi[k])], row, schema.x_cols[k]));
    double z = parse_cell(cells[size_t(zi)], row, schema.z_col);
    double y = parse_cell(cells[size_t(yi)], row, schema.y_col);
    switch (schema.kind) {
      case TreatmentKind::Binary:
        if (z != 0.0 && z != 1.0) {
          std::ostringstream msg;
          msg << "load_csv: binary treatment must be 0/1, got " << z << " at data row " << row;
          throw DataError(msg.str());
        }
        break;
      case TreatmentKind::Categorical: {
        double r = std::round(z);
        if (std::abs(z - r) > 1e-9 || r < 0 || r > schema.n_arms) {
          std::ostringstream msg;
          msg << "load_csv: treatment code " << z << " outside 0.." << schema.n_arms
              << " at data row " << row;
          throw DataError(msg.str());
        }
        break;
      }
      case TreatmentKind::ContinuousDose:
        if (z < schema.dose_a - 1e-12 || z > schema.dose_b + 1e-12) {
          std::ostringstream msg;
          msg << "load_csv: dose " << z << " outside [" << schema.dose_a << ", " << schema.dose_b
              << "] at data row " << row;
          throw DataError(msg.str());
        }
        break;
    }
    xrows.push_back(std::move(xr));
    zs.push_back(z);
    ys.push_back(y);
    ++row;
  }
  if (xrows.empty()) throw DataError("load_csv: no data rows in '" + path + "'");

  Dataset data;
  data.kind = schema.kind;
  data.x.resize(long(xrows.size()), long(schema.x_cols.size()));
  data.z.resize(long(zs.size()));
  data.y.resize(long(ys.size()));
  for (size_t i = 0; i < xrows.size(); ++i) {
    for (size_t j = 0; j < xrows[i].size(); ++j) data.x(long(i), long(j)) = xrows[i][j];
    data.z[long(i)] = zs[i];
    data.y[long(i)] = ys[i];
  }
  return data;
}

namespace {

using nlohmann::json;

constexpr double kBigResidual = 1e12;

std::string kernel_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::Epanechnikov: return "epan";
    case KernelFamily::Gaussian: return "gauss";
    case KernelFamily::Quartic: return "quartic";
  }
  return "?";
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (long i = 0; i < v.size(); ++i)
    a.push_back(std::isfinite(v[i]) ? json(v[i]) : json());
  return a;
}

double interp_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double h = q * double(v.size() - 1);
  long lo = long(std::floor(h));
  long hi = std::min<long>(lo + 1, long(v.size()) - 1);
  return v[size_t(lo)] + (h - lo) * (v[size_t(hi)] - v[size_t(lo)]);
}

// 101 equally spaced index values between the 1st and 99th percentile of
// beta-hat' x
Eigen::VectorXd index_grid(const IndexFit& fit) {
  Eigen::VectorXd t = fit.data->x * fit.beta;
  std::vector<double> tv(t.data(), t.data() + t.size());
  double lo = interp_quantile(tv, 0.01), hi = interp_quantile(tv, 0.99);
  Eigen::VectorXd grid(101);
  for (int i = 0; i <= 100; ++i) grid[i] = lo + (hi - lo) * double(i) / 100.0;
  return grid;
}

json config_echo(const RunConfig& rc, const RandomizationSpec& spec, const IndexFit* fit) {
  json j;
  j["method"] = method_name(rc.method);
  j["kernel"] = kernel_name(rc.fit.kernel.family);
  j["cv_bandwidth"] = rc.fit.cv_bandwidth;
  j["fstar"] = "zero";
  j["level"] = rc.level;
  if (rc.seed_set) j["seed"] = rc.seed;
  if (rc.scenario) {
    j["scenario"] = scenario_name(*rc.scenario);
    j["n"] = rc.n;
  }
  if (rc.data_path) j["data"] = *rc.data_path;
  switch (spec.kind) {
    case TreatmentKind::Binary:
      j["randomization"] = spec.law == LawKind::LogisticBernoulli ? "logistic" : "bern";
      break;
    case TreatmentKind::Categorical:
      j["randomization"] = "cat";
      break;
    case TreatmentKind::ContinuousDose:
      j["randomization"] = "dose";
      break;
  }
  if (fit) {
    Eigen::VectorXd t = fit->data->x * fit->beta;
    j["h_g_resolved"] = resolve_h_g(fit->config.kernel, t);
    j["h_u_resolved"] = resolve_h_u(fit->config.kernel, t);
    j["bandwidth_mode"] = fit->config.kernel.h_g.has_value() ? "fixed" : "auto";
  }
  return j;
}

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw IoError("cannot open output file '" + out_path + "'");
  f << text;
  f.flush();
  if (!f.good()) throw IoError("failed while writing '" + out_path + "'");
}

// curve values at grid points, local-linear, null where the fit degenerates
json curve_json(const IndexFit& fit, const Eigen::VectorXd& grid) {
  json out;
  out["t"] = vec_json(grid);
  if (fit.spec.kind == TreatmentKind::Binary) {
    json g = json::array();
    for (long i = 0; i < grid.size(); ++i) {
      try {
        g.push_back(predict_g_at(fit, grid[i]));
      } catch (const NumericalError&) {
        g.push_back(json());
      }
    }
    out["g"] = g;
  } else {
    std::vector<json> gs(size_t(fit.K), json::array());
    for (long i = 0; i < grid.size(); ++i) {
      try {
        Eigen::VectorXd v = predict_g_multi_at(fit, grid[i]);
        for (int k = 0; k < fit.K; ++k) gs[size_t(k)].push_back(v[k]);
      } catch (const NumericalError&) {
        for (int k = 0; k < fit.K; ++k) gs[size_t(k)].push_back(json());
      }
    }
    for (int k = 0; k < fit.K; ++k) out["g" + std::to_string(k + 1)] = gs[size_t(k)];
  }
  return out;
}

double order_stat_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  long m = long(v.size());
  long k = std::clamp(long(std::ceil(q * double(m))), 1L, m);
  return v[size_t(k - 1)];
}

struct Prepared {
  Dataset data;
  RandomizationSpec spec;
  int K = 1;
};

Prepared prepare(const RunConfig& rc) {
  if (rc.data_path && rc.scenario)
    throw ConfigError("give either --data or --scenario, not both");
  if (!rc.data_path && !rc.scenario)
    throw ConfigError("one of --data or --scenario is required");
  Prepared p;
  if (rc.scenario) {
    const ScenarioTruth& tr = scenario_truth(*rc.scenario);
    p.spec = tr.spec;
    p.K = tr.K;
    Scenario sc;
    sc.id = *rc.scenario;
    sc.n = rc.n;
    sc.seed = rc.seed;
    p.data = generate(sc);
  } else {
    p.data = load_csv(*rc.data_path, rc.schema);
    p.spec = rc.rand_spec;
    if (p.spec.kind != rc.schema.kind)
      throw ConfigError("randomization law and csv schema declare different treatment kinds");
    p.K = (p.spec.kind == TreatmentKind::Categorical) ? p.spec.n_arms() : rc.K;
  }
  validate_dataset(p.data, p.spec);
  return p;
}

// resampled curve band: refit warm-started on each bootstrap sample, evaluate
// the curve on the shared grid
json bootstrap_curve_band(const RunConfig& rc, const Prepared& p, const IndexFit& fit,
                          const Eigen::VectorXd& grid) {
  const long n = p.data.n(), G = grid.size();
  const int B = rc.B;
  FitConfig cfg = fit.config;
  {
    Eigen::VectorXd tf = p.data.x * fit.beta;
    double hu = resolve_h_u(cfg.kernel, tf);
    double hg = resolve_h_g(cfg.kernel, tf);
    cfg.kernel.h_g = hg;
    cfg.kernel.h_u = hu;
  }
  Eigen::VectorXd warm = fit.beta_L();
  Eigen::MatrixXd curves =
      Eigen::MatrixXd::Constant(B, G, std::numeric_limits<double>::quiet_NaN());
  long out_dim = (rc.method == Method::M4) ? n : warm.size();

  parallel_for(B, max_threads(), [&](int b) {
    RngEngine eng = make_engine(derive_seed(rc.seed, 0xCBULL * 131 + std::uint64_t(b)));
    std::uniform_int_distribution<long> pick(0, n - 1);
    Dataset db;
    db.kind = p.data.kind;
    db.x.resize(n, p.data.p());
    db.z.resize(n);
    db.y.resize(n);
    for (long i = 0; i < n; ++i) {
      long j = pick(eng);
      db.x.row(i) = p.data.x.row(j);
      db.z[i] = p.data.z[j];
      db.y[i] = p.data.y[j];
    }
    auto raw = score_residuals_fn(db, p.spec, rc.method, p.K, fit.f_star, cfg);
    auto safe = [&raw, out_dim](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      try {
        Eigen::VectorXd v = raw(x);
        if (!v.allFinite()) return Eigen::VectorXd::Constant(out_dim, kBigResidual);
        return v;
      } catch (const NumericalError&) {
        return Eigen::VectorXd::Constant(out_dim, kBigResidual);
      }
    };
    double f0 = safe(warm).norm();
    if (f0 >= kBigResidual) return;
    LMOptions opt;
    opt.tol = cfg.solver_tol * (1.0 + f0);
    opt.max_iter = cfg.max_iter;
    opt.fd_step = cfg.fd_step;
    LMResult res = lm_least_squares(safe, warm, opt);
    if (!res.converged) return;

    IndexFit fb;
    fb.beta = Eigen::VectorXd(warm.size() + 1);
    fb.beta[0] = 1.0;
    fb.beta.tail(warm.size()) = res.x;
    fb.method = rc.method;
    fb.K = p.K;
    fb.data = std::make_shared<Dataset>(db);
    fb.spec = p.spec;
    fb.config = cfg;
    fb.f_star = fit.f_star;
    for (long gidx = 0; gidx < G; ++gidx) {
      try {
        curves(b, gidx) = (p.spec.kind == TreatmentKind::Binary)
                              ? predict_g_at(fb, grid[gidx])
                              : predict_g_multi_at(fb, grid[gidx])[0];
      } catch (const NumericalError&) {
        // stays NaN
      }
    }
  });

  json out;
  out["t"] = vec_json(grid);
  json lo = json::array(), hi = json::array(), used = json::array();
  for (long gidx = 0; gidx < G; ++gidx) {
    std::vector<double> col;
    for (int b = 0; b < B; ++b)
      if (std::isfinite(curves(b, gidx))) col.push_back(curves(b, gidx));
    if (col.empty()) {
      lo.push_back(json());
      hi.push_back(json());
      used.push_back(0);
      continue;
    }
    lo.push_back(order_stat_of(col, (1.0 - rc.level) / 2.0));
    hi.push_back(order_stat_of(col, (1.0 + rc.level) / 2.0));
    used.push_back(long(col.size()));
  }
  out["lo"] = lo;
  out["hi"] = hi;
  out["draws_used"] = used;
  return out;
}

}  // namespace

int run(const RunConfig& rc) {
  bool needs_seed = rc.scenario.has_value() || rc.command == "simulate" || rc.B > 0 ||
                    rc.n_perm > 0 || rc.command == "bootstrap" || rc.command == "permtest" ||
                    rc.command == "curve";
  if (needs_seed && !rc.seed_set)
    throw ConfigError("--seed is required for stochastic commands");
  if (rc.format != "json" && rc.format != "csv")
    throw ConfigError("unknown format '" + rc.format + "'");
  if (rc.format == "csv" && rc.command != "simulate")
    throw ConfigError("csv output is only available for simulate");

  if (rc.command == "simulate") {
    if (!rc.scenario) throw ConfigError("simulate requires --scenario");
    if (rc.reps < 1) throw ConfigError("simulate: need --reps >= 1");
    Scenario sc;
    sc.id = *rc.scenario;
    sc.n = rc.n;
    sc.seed = rc.seed;
    ReplicationOptions opts;
    opts.with_cp = rc.with_cp;
    if (rc.B > 0) opts.cp_B = rc.B;
    opts.cp_level = rc.level;
    ReplicationReport rep = run_replications(sc, rc.method, rc.reps, rc.fit, opts);
    std::string text = emit_tables(rep, rc.format);
    if (rc.format == "json") {
      json j = json::parse(text);
      j["config"] = config_echo(rc, scenario_truth(*rc.scenario).spec, nullptr);
      text = j.dump(2) + "\n";
    }
    write_output(text, rc.out_path);
    return 0;
  }

  Prepared p = prepare(rc);

  if (rc.command == "fit") {
    IndexFit fit = solve_index(p.data, p.spec, rc.method, rc.fit, rc.fit.user_init, p.K);
    if (!fit.converged)
      throw NumericalError("fit: estimating equations did not converge (score norm " +
                           std::to_string(fit.score_norm) + ")");
    json j;
    j["command"] = "fit";
    j["beta"] = vec_json(fit.beta);
    j["converged"] = fit.converged;
    j["score_norm"] = fit.score_norm;
    j["iterations"] = fit.iterations;
    j["curve"] = curve_json(fit, index_grid(fit));
    if (rc.B > 0) {
      BootstrapResult boot = bootstrap_beta(p.data, p.spec, rc.method, rc.fit, rc.B, rc.level,
                                            rc.seed, 0, p.K);
      json ci = json::array();
      for (long k = 0; k < boot.ci.rows(); ++k)
        ci.push_back({boot.ci(k, 0), boot.ci(k, 1)});
      j["ci"] = ci;
      j["boot_draws"] = boot.beta_draws.rows();
      j["boot_retried"] = boot.retried;
    }
    j["config"] = config_echo(rc, p.spec, &fit);
    write_output(j.dump(2) + "\n", rc.out_path);
    return 0;
  }

  if (rc.command == "bootstrap") {
    if (rc.B <= 0) throw ConfigError("bootstrap requires --boot");
    BootstrapResult boot =
        bootstrap_beta(p.data, p.spec, rc.method, rc.fit, rc.B, rc.level, rc.seed, 0, p.K);
    IndexFit fit = solve_index(p.data, p.spec, rc.method, rc.fit, rc.fit.user_init, p.K);
    json j;
    j["command"] = "bootstrap";
    j["beta"] = vec_json(fit.beta);
    json ci = json::array();
    for (long k = 0; k < boot.ci.rows(); ++k) ci.push_back({boot.ci(k, 0), boot.ci(k, 1)});
    j["ci"] = ci;
    j["level"] = boot.level;
    j["B"] = boot.B;
    j["retried"] = boot.retried;
    json draws = json::array();
    for (long b = 0; b < boot.beta_draws.rows(); ++b)
      draws.push_back(vec_json(boot.beta_draws.row(b).transpose()));
    j["draws"] = draws;
    j["config"] = config_echo(rc, p.spec, &fit);
    write_output(j.dump(2) + "\n", rc.out_path);
    return 0;
  }

  if (rc.command == "permtest") {
    if (rc.n_perm <= 0) throw ConfigError("permtest requires --perm");
    IndexFit fit = solve_index(p.data, p.spec, rc.method, rc.fit, rc.fit.user_init, p.K);
    Eigen::VectorXd grid = index_grid(fit);
    PermutationBand band = permutation_band_g(p.data, p.spec, fit, grid, rc.n_perm, rc.level,
                                              derive_seed(rc.seed, 0x9E37ULL));
    json j;
    j["command"] = "permtest";
    j["beta"] = vec_json(fit.beta);
    j["curve"] = curve_json(fit, grid);
    j["band"] = vec_json(band.upper_quantile_curve);
    json fl = json::array();
    for (char c : band.flagged) fl.push_back(int(c));
    j["flagged"] = fl;
    j["n_perm"] = band.n_perm;
    j["level"] = band.level;
    int exceed = 0, finite = 0;
    for (long k = 0; k < grid.size(); ++k) {
      double ghat;
      try {
        ghat = predict_g_at(fit, grid[k]);
      } catch (const NumericalError&) {
        continue;
      }
      if (!std::isfinite(band.upper_quantile_curve[k])) continue;
      ++finite;
      if (ghat > band.upper_quantile_curve[k]) ++exceed;
    }
    j["exceed_frac"] = finite > 0 ? double(exceed) / double(finite) : 0.0;
    j["config"] = config_echo(rc, p.spec, &fit);
    write_output(j.dump(2) + "\n", rc.out_path);
    return 0;
  }

  if (rc.command == "curve") {
    if (rc.B <= 0) throw ConfigError("curve requires --boot for the resampling band");
    IndexFit fit = solve_index(p.data, p.spec, rc.method, rc.fit, rc.fit.user_init, p.K);
    Eigen::VectorXd grid = index_grid(fit);
    json j;
    j["command"] = "curve";
    j["beta"] = vec_json(fit.beta);
    j["curve"] = curve_json(fit, grid);
    j["band"] = bootstrap_curve_band(rc, p, fit, grid);
    j["B"] = rc.B;
    j["level"] = rc.level;
    j["config"] = config_echo(rc, p.spec, &fit);
    write_output(j.dump(2) + "\n", rc.out_path);
    return 0;
  }

  throw ConfigError("unknown command '" + rc.command + "'");
}

}  // namespace itr
