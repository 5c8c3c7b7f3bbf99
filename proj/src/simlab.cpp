#include "itr/simlab.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "itr/errors.hpp"
#include "itr/inference.hpp"
#include "itr/parallel.hpp"
#include "itr/rules.hpp"

namespace itr {

ScenarioId scenario_from_string(const std::string& s) {
  if (s == "s1") return ScenarioId::S1;
  if (s == "s2") return ScenarioId::S2;
  if (s == "s3") return ScenarioId::S3;
  if (s == "s4") return ScenarioId::S4;
  if (s == "s5") return ScenarioId::S5;
  if (s == "s6") return ScenarioId::S6;
  throw ConfigError("unknown scenario '" + s + "' (expected s1..s6)");
}

std::string scenario_name(ScenarioId id) {
  switch (id) {
    case ScenarioId::S1: return "s1";
    case ScenarioId::S2: return "s2";
    case ScenarioId::S3: return "s3";
    case ScenarioId::S4: return "s4";
    case ScenarioId::S5: return "s5";
    case ScenarioId::S6: return "s6";
  }
  return "?";
}

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(long(v.size()));
  long i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::function<Eigen::VectorXd(RngEngine&)> uniform_x(long p) {
  return [p](RngEngine& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd x(p);
    for (long j = 0; j < p; ++j) x[j] = u(rng);
    return x;
  };
}

std::function<Eigen::VectorXd(RngEngine&)> gaussian_x(long p) {
  return [p](RngEngine& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd x(p);
    for (long j = 0; j < p; ++j) x[j] = n(rng);
    return x;
  };
}

std::vector<ScenarioTruth> build_truths() {
  std::vector<ScenarioTruth> out(6);

  auto small_f = [](const Eigen::VectorXd& x) { return 0.05 * x.sum(); };
  auto half_f = [](const Eigen::VectorXd& x) { return 0.5 * x.sum(); };

  // s1: uniform design, exponential curve
  out[0].beta = vec({1.0, -1.0});
  out[0].p = 2;
  out[0].spec = RandomizationSpec::bernoulli(0.5);
  out[0].kind = TreatmentKind::Binary;
  out[0].f = small_f;
  out[0].g = {[](double t) { return std::exp(1.5 * t) - 1.0; }};
  out[0].sample_x = uniform_x(2);

  // s2: three covariates, sine curve
  out[1].beta = vec({1.0, -1.0, 2.0});
  out[1].p = 3;
  out[1].spec = RandomizationSpec::bernoulli(0.5);
  out[1].kind = TreatmentKind::Binary;
  out[1].f = small_f;
  out[1].g = {[](double t) { return std::sin(M_PI * t); }};
  out[1].sample_x = uniform_x(3);

  // s3: gaussian design, linear curve
  out[2].beta = vec({1.0, -1.0});
  out[2].p = 2;
  out[2].spec = RandomizationSpec::bernoulli(0.5);
  out[2].kind = TreatmentKind::Binary;
  out[2].f = small_f;
  out[2].g = {[](double t) { return 2.0 * t; }};
  out[2].sample_x = gaussian_x(2);

  // s4: covariate-dependent assignment
  out[3].beta = vec({1.0, -1.0});
  out[3].p = 2;
  out[3].spec = RandomizationSpec::logistic(vec({0.3, -0.2}));
  out[3].kind = TreatmentKind::Binary;
  out[3].f = small_f;
  out[3].g = {[](double t) { return 2.0 * t + std::sin(2.0 * t); }};
  out[3].sample_x = gaussian_x(2);

  // s5: three arms (two active)
  out[4].beta = vec({1.0, -1.0, 1.0});
  out[4].p = 3;
  out[4].spec = RandomizationSpec::categorical(vec({0.4, 0.2}));
  out[4].kind = TreatmentKind::Categorical;
  out[4].K = 2;
  out[4].f = half_f;
  out[4].g = {[](double t) { return 0.5 * t * t - 1.0; },
              [](double t) { return t * std::sin(t) - 1.0; }};
  out[4].sample_x = gaussian_x(3);

  // s6: continuous dose, quadratic-in-dose effect
  out[5].beta = vec({1.0, -1.0});
  out[5].p = 2;
  out[5].spec = RandomizationSpec::uniform_dose(0.0, 1.0);
  out[5].kind = TreatmentKind::ContinuousDose;
  out[5].K = 2;
  out[5].f = half_f;
  out[5].g = {[](double t) { return 0.5 * t * t * t; }, [](double t) { return 2.0 - t * t; }};
  out[5].sample_x = gaussian_x(2);

  return out;
}

}  // namespace

const ScenarioTruth& scenario_truth(ScenarioId id) {
  static const std::vector<ScenarioTruth> truths = build_truths();
  return truths[size_t(id)];
}

Dataset generate(const Scenario& scenario) {
  if (scenario.n < 1) throw ConfigError("generate: need n >= 1");
  const ScenarioTruth& tr = scenario_truth(scenario.id);
  RngEngine rng = make_engine(scenario.seed);
  std::normal_distribution<double> noise(0.0, tr.sigma);

  Dataset data;
  data.kind = tr.kind;
  data.x.resize(scenario.n, tr.p);
  data.z.resize(scenario.n);
  data.y.resize(scenario.n);
  for (long i = 0; i < scenario.n; ++i) {
    Eigen::VectorXd x = tr.sample_x(rng);
    double z = draw_treatment(tr.spec, x, rng);
    double t = tr.beta.dot(x);
    double payoff = 0.0;
    switch (tr.kind) {
      case TreatmentKind::Binary:
        payoff = z * tr.g[0](t);
        break;
      case TreatmentKind::Categorical: {
        int arm = int(std::lround(z));
        if (arm >= 1) payoff = tr.g[size_t(arm - 1)](t);
        break;
      }
      case TreatmentKind::ContinuousDose:
        payoff = z * tr.g[0](t) + z * z * tr.g[1](t);
        break;
    }
    data.x.row(i) = x;
    data.z[i] = z;
    data.y[i] = tr.f(x) + payoff + noise(rng);
  }
  return data;
}

ReplicationReport run_replications(const Scenario& scenario, Method method, int reps,
                                   const FitConfig& config, const ReplicationOptions& opts) {
  if (reps < 1) throw ConfigError("run_replications: need reps >= 1");
  const ScenarioTruth& tr = scenario_truth(scenario.id);
  const long pL = tr.p - 1;
  const int K = tr.K;
  auto start = std::chrono::steady_clock::now();

  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd errs = Eigen::MatrixXd::Constant(reps, pL, nan);
  Eigen::MatrixXd pcds = Eigen::MatrixXd::Constant(reps, K, nan);
  Eigen::VectorXd vfs = Eigen::VectorXd::Constant(reps, nan);
  Eigen::MatrixXd ses = Eigen::MatrixXd::Constant(reps, pL, nan);
  Eigen::MatrixXd covered = Eigen::MatrixXd::Constant(reps, pL, nan);

  int threads = opts.parallelism > 0 ? opts.parallelism : max_threads();
  parallel_for(reps, threads, [&](int r) {
    Scenario sc = scenario;
    sc.seed = derive_seed(scenario.seed, std::uint64_t(r));
    Dataset data = generate(sc);
    IndexFit fit;
    try {
      fit = solve_index(data, tr.spec, method, config, std::nullopt, K);
    } catch (const Error&) {
      return;  // slot stays NaN; counted as a failure
    }
    if (!fit.converged) return;
    errs.row(r) = (fit.beta_L() - tr.beta.tail(pL)).transpose();

    if (opts.with_metrics) {
      try {
        if (K == 1 && tr.kind == TreatmentKind::Binary) {
          pcds(r, 0) = pcd(fit, tr.g[0], tr.beta, data.x);
        } else {
          pcds.row(r) = pcd_multi(fit, tr.g, tr.beta, data.x).transpose();
        }
        vfs[r] = value_function(data, tr.spec, fit);
      } catch (const Error&) {
        // metrics stay NaN for this replicate
      }
    }
    if (opts.with_cp) {
      try {
        BootstrapResult boot =
            bootstrap_beta(data, tr.spec, method, config, opts.cp_B, opts.cp_level,
                           derive_seed(scenario.seed, 0xC0FEULL + std::uint64_t(r)), 1, K);
        for (long j = 0; j < pL; ++j) {
          double lo = boot.ci(j, 0), hi = boot.ci(j, 1);
          covered(r, j) = (tr.beta[j + 1] >= lo && tr.beta[j + 1] <= hi) ? 1.0 : 0.0;
          // bootstrap sd doubles as the reported standard error
          double mean = boot.beta_draws.col(j).mean();
          double ss = (boot.beta_draws.col(j).array() - mean).square().sum();
          ses(r, j) = std::sqrt(ss / double(boot.beta_draws.rows() - 1));
        }
      } catch (const Error&) {
        // coverage stays NaN for this replicate
      }
    }
  });

  ReplicationReport rep;
  rep.scenario = scenario_name(scenario.id);
  rep.method = method_name(method);
  rep.n = scenario.n;
  rep.reps = reps;
  rep.beta_errors = errs;

  auto col_stats = [](const Eigen::MatrixXd& m, long j, double& mean, double& sd, int& cnt) {
    double acc = 0;
    cnt = 0;
    for (long i = 0; i < m.rows(); ++i)
      if (std::isfinite(m(i, j))) {
        acc += m(i, j);
        ++cnt;
      }
    mean = cnt > 0 ? acc / cnt : std::numeric_limits<double>::quiet_NaN();
    double ss = 0;
    for (long i = 0; i < m.rows(); ++i)
      if (std::isfinite(m(i, j))) ss += (m(i, j) - mean) * (m(i, j) - mean);
    sd = cnt > 1 ? std::sqrt(ss / double(cnt - 1)) : 0.0;
  };

  rep.bias.resize(pL);
  rep.sd.resize(pL);
  int ok_fits = 0;
  for (long j = 0; j < pL; ++j) {
    int cnt;
    col_stats(errs, j, rep.bias[j], rep.sd[j], cnt);
    ok_fits = cnt;
  }
  rep.failures = reps - ok_fits;
  rep.sd_defined = ok_fits > 1;

  rep.pcd_mean.resize(K);
  rep.pcd_sd.resize(K);
  for (int k = 0; k < K; ++k) {
    int cnt;
    col_stats(pcds, k, rep.pcd_mean[k], rep.pcd_sd[k], cnt);
  }
  {
    int cnt;
    double mean, sd;
    Eigen::MatrixXd vcol = vfs;
    col_stats(vcol, 0, mean, sd, cnt);
    rep.vf_mean = mean;
    rep.vf_sd = sd;
  }
  if (opts.with_cp) {
    rep.se.resize(pL);
    rep.cp.resize(pL);
    for (long j = 0; j < pL; ++j) {
      int cnt;
      double sd_unused;
      col_stats(ses, j, rep.se[j], sd_unused, cnt);
      col_stats(covered, j, rep.cp[j], sd_unused, cnt);
    }
  }
  rep.wall_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

double true_value_function(ScenarioId id, long mc_draws, std::uint64_t seed) {
  if (mc_draws < 1000) throw ConfigError("true_value_function: need mc_draws >= 1000");
  const ScenarioTruth& tr = scenario_truth(id);
  RngEngine rng = make_engine(seed);
  double acc = 0;
  for (long d = 0; d < mc_draws; ++d) {
    Eigen::VectorXd x = tr.sample_x(rng);
    double t = tr.beta.dot(x);
    double best = 0.0;  // control payoff
    switch (tr.kind) {
      case TreatmentKind::Binary:
        best = std::max(0.0, tr.g[0](t));
        break;
      case TreatmentKind::Categorical:
        for (const auto& g : tr.g) best = std::max(best, g(t));
        break;
      case TreatmentKind::ContinuousDose: {
        double g1 = tr.g[0](t), g2 = tr.g[1](t);
        double a = tr.spec.dose_a, b = tr.spec.dose_b;
        auto val = [&](double z) { return z * g1 + z * z * g2; };
        best = std::max(val(a), val(b));
        if (g2 < 0.0) best = std::max(best, val(std::clamp(-g1 / (2.0 * g2), a, b)));
        break;
      }
    }
    acc += tr.f(x) + best;
  }
  return acc / double(mc_draws);
}

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (long i = 0; i < v.size(); ++i)
    a.push_back(std::isfinite(v[i]) ? nlohmann::json(v[i]) : nlohmann::json());
  return a;
}

Eigen::VectorXd json_to_vec(const nlohmann::json& a) {
  Eigen::VectorXd v(long(a.size()));
  long i = 0;
  for (const auto& e : a) v[i++] = e.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                               : e.get<double>();
  return v;
}

}  // namespace

std::string emit_tables(const ReplicationReport& report, const std::string& format) {
  if (format == "json") {
    nlohmann::json j;
    j["scenario"] = report.scenario;
    j["method"] = report.method;
    j["n"] = report.n;
    j["reps"] = report.reps;
    j["failures"] = report.failures;
    j["bias"] = vec_to_json(report.bias);
    j["sd"] = vec_to_json(report.sd);
    j["se"] = vec_to_json(report.se);
    j["cp"] = vec_to_json(report.cp);
    j["pcd_mean"] = vec_to_json(report.pcd_mean);
    j["pcd_sd"] = vec_to_json(report.pcd_sd);
    j["vf_mean"] = report.vf_mean;
    j["vf_sd"] = report.vf_sd;
    j["sd_defined"] = report.sd_defined;
    j["wall_time_sec"] = report.wall_sec;
    nlohmann::json errs = nlohmann::json::array();
    for (long r = 0; r < report.beta_errors.rows(); ++r)
      errs.push_back(vec_to_json(report.beta_errors.row(r).transpose()));
    j["beta_errors"] = errs;
    return j.dump(2) + "\n";
  }
  if (format == "csv") {
    std::ostringstream os;
    os << "scenario,method,n,reps,failures,vf_mean,vf_sd\n";
    os << report.scenario << ',' << report.method << ',' << report.n << ',' << report.reps << ','
       << report.failures << ',' << report.vf_mean << ',' << report.vf_sd << '\n';
    os << "coord,bias,sd,se,cp\n";
    for (long ji = 0; ji < report.bias.size(); ++ji) {
      os << "beta" << (ji + 2) << ',' << report.bias[ji] << ',' << report.sd[ji] << ',';
      if (report.se.size() > ji) os << report.se[ji];
      os << ',';
      if (report.cp.size() > ji) os << report.cp[ji];
      os << '\n';
    }
    os << "arm,pcd_mean,pcd_sd\n";
    for (long k = 0; k < report.pcd_mean.size(); ++k)
      os << (k + 1) << ',' << report.pcd_mean[k] << ',' << report.pcd_sd[k] << '\n';
    return os.str();
  }
  throw ConfigError("emit_tables: unknown format '" + format + "'");
}

ReplicationReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("report_from_json: ") + e.what());
  }
  ReplicationReport r;
  try {
    r.scenario = j.at("scenario").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.n = j.at("n").get<long>();
    r.reps = j.at("reps").get<int>();
    r.failures = j.at("failures").get<int>();
    r.bias = json_to_vec(j.at("bias"));
    r.sd = json_to_vec(j.at("sd"));
    r.se = json_to_vec(j.at("se"));
    r.cp = json_to_vec(j.at("cp"));
    r.pcd_mean = json_to_vec(j.at("pcd_mean"));
    r.pcd_sd = json_to_vec(j.at("pcd_sd"));
    r.vf_mean = j.at("vf_mean").get<double>();
    r.vf_sd = j.at("vf_sd").get<double>();
    r.sd_defined = j.at("sd_defined").get<bool>();
    r.wall_sec = j.at("wall_time_sec").get<double>();
    const auto& errs = j.at("beta_errors");
    r.beta_errors.resize(long(errs.size()), r.bias.size());
    long ri = 0;
    for (const auto& row : errs) r.beta_errors.row(ri++) = json_to_vec(row).transpose();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report_from_json: ") + e.what());
  }
  return r;
}

}  // namespace itr
