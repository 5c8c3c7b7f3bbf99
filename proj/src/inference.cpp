#include "itr/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "itr/errors.hpp"
#include "itr/kernel.hpp"
#include "itr/parallel.hpp"
#include "itr/randomization.hpp"
#include "itr/solver.hpp"

namespace itr {

namespace {

constexpr double kBigResidual = 1e12;

using ScoreFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

ScoreFn guard(const ScoreFn& f, long dim) {
  return [f, dim](const Eigen::VectorXd& b) -> Eigen::VectorXd {
    try {
      Eigen::VectorXd v = f(b);
      if (!v.allFinite()) return Eigen::VectorXd::Constant(dim, kBigResidual);
      return v;
    } catch (const NumericalError&) {
      return Eigen::VectorXd::Constant(dim, kBigResidual);
    }
  };
}

// ceil(q*m)-th order statistic, clamped into range; v is modified (sorted)
double order_stat(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  long m = long(v.size());
  long k = long(std::ceil(q * double(m)));
  k = std::clamp(k, 1L, m);
  return v[size_t(k - 1)];
}

}  // namespace

BootstrapResult bootstrap_beta(const Dataset& data, const RandomizationSpec& spec, Method method,
                               const FitConfig& config, int B, double level, std::uint64_t seed,
                               int parallelism, int K) {
  if (B < 20) throw ConfigError("bootstrap_beta: need B >= 20");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap_beta: level outside (0,1)");
  const long n = data.n(), pL = data.p() - 1;

  IndexFit full = solve_index(data, spec, method, config, config.user_init, K);
  Eigen::VectorXd warm = full.beta_L();

  // freeze bandwidths at the full-data resolution so resamples perturb the
  // data, not the smoothing scale
  FitConfig cfg = full.config;
  if (!cfg.boot_refresh_bandwidths) {
    Eigen::VectorXd t_full = data.x * full.beta;
    double hu = resolve_h_u(cfg.kernel, t_full);
    double hg = resolve_h_g(cfg.kernel, t_full);
    cfg.kernel.h_g = hg;
    cfg.kernel.h_u = hu;
  }

  long out_dim = (method == Method::M4) ? n : pL;
  Eigen::MatrixXd draws(B, pL);
  std::vector<char> good(size_t(B), 0);
  std::atomic<int> retried{0}, failed_final{0};

  int threads = parallelism > 0 ? parallelism : max_threads();
  parallel_for(B, threads, [&](int b) {
    for (int attempt = 0; attempt < 3; ++attempt) {
      RngEngine eng =
          make_engine(derive_seed(seed, std::uint64_t(b) + std::uint64_t(B) * attempt));
      std::uniform_int_distribution<long> pick(0, n - 1);
      Dataset db;
      db.kind = data.kind;
      db.x.resize(n, data.p());
      db.z.resize(n);
      db.y.resize(n);
      for (long i = 0; i < n; ++i) {
        long j = pick(eng);
        db.x.row(i) = data.x.row(j);
        db.z[i] = data.z[j];
        db.y[i] = data.y[j];
      }
      ScoreFn raw = score_residuals_fn(db, spec, method, K, full.f_star, cfg);
      ScoreFn safe = guard(raw, out_dim);
      double f0 = safe(warm).norm();
      if (f0 >= kBigResidual) {
        ++retried;
        continue;
      }
      LMOptions opt;
      opt.tol = cfg.solver_tol * (1.0 + f0);
      opt.max_iter = cfg.max_iter;
      opt.fd_step = cfg.fd_step;
      LMResult res = lm_least_squares(safe, warm, opt);
      if (res.converged && res.x.allFinite()) {
        draws.row(b) = res.x;
        good[size_t(b)] = 1;
        return;
      }
      ++retried;
    }
    ++failed_final;
  });

  int ok = 0;
  for (char g : good) ok += g;
  if (ok * 10 < B * 9) {
    std::ostringstream msg;
    msg << "bootstrap_beta: " << (B - ok) << " of " << B
        << " resamples failed to converge after retries";
    throw NumericalError(msg.str());
  }

  BootstrapResult out;
  out.B = B;
  out.level = level;
  out.retried = retried.load();
  out.beta_draws.resize(ok, pL);
  long r = 0;
  for (int b = 0; b < B; ++b)
    if (good[size_t(b)]) out.beta_draws.row(r++) = draws.row(b);
  out.ci.resize(pL, 2);
  for (long j = 0; j < pL; ++j) {
    std::vector<double> col(static_cast<size_t>(ok));
    for (long i = 0; i < ok; ++i) col[size_t(i)] = out.beta_draws(i, j);
    std::vector<double> tmp = col;
    out.ci(j, 0) = order_stat(tmp, (1.0 - level) / 2.0);
    tmp = col;
    out.ci(j, 1) = order_stat(tmp, (1.0 + level) / 2.0);
  }
  return out;
}

PermutationBand permutation_band_g(const Dataset& data, const RandomizationSpec& spec,
                                   const IndexFit& fit, const Eigen::VectorXd& grid, int n_perm,
                                   double level, std::uint64_t seed, bool hold_beta,
                                   int parallelism) {
  if (n_perm < 1) throw ConfigError("permutation_band_g: need n_perm >= 1");
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("permutation_band_g: level outside (0,1)");
  if (level >= 0.95 && n_perm < 100)
    throw ConfigError("permutation_band_g: n_perm >= 100 required at this level");
  if (grid.size() == 0) throw ConfigError("permutation_band_g: empty grid");
  if (fit.spec.kind != TreatmentKind::Binary)
    throw ConfigError("permutation_band_g: binary treatment only");
  const long n = data.n(), G = grid.size();

  Eigen::MatrixXd vals =
      Eigen::MatrixXd::Constant(n_perm, G, std::numeric_limits<double>::quiet_NaN());

  int threads = parallelism > 0 ? parallelism : max_threads();
  parallel_for(n_perm, threads, [&](int pm) {
    RngEngine eng = make_engine(derive_seed(seed, std::uint64_t(pm)));
    std::vector<long> idx(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) idx[size_t(i)] = i;
    std::shuffle(idx.begin(), idx.end(), eng);
    Dataset dp;
    dp.kind = data.kind;
    dp.x = data.x;
    dp.y = data.y;
    dp.z.resize(n);
    for (long i = 0; i < n; ++i) dp.z[i] = data.z[idx[size_t(i)]];

    Eigen::VectorXd beta_p;
    if (hold_beta) {
      beta_p = fit.beta;
    } else {
      try {
        IndexFit rp =
            solve_index(dp, spec, fit.method, fit.config, fit.beta_L(), fit.K, fit.f_star);
        // a runaway non-converged refit is not an estimate; letting its curve
        // into the order statistics would hand the band's upper tail to junk
        if (!rp.converged) return;
        beta_p = rp.beta;
      } catch (const Error&) {
        return;  // whole permutation flagged via the NaN row
      }
    }

    Eigen::VectorXd t = dp.x * beta_p;
    Eigen::VectorXd zc(n), resid(n);
    for (long i = 0; i < n; ++i) {
      Eigen::VectorXd xi = dp.x.row(i).transpose();
      zc[i] = dp.z[i] - mean_given_x(spec, xi);
      resid[i] = dp.y[i] - fit.f_star(xi);
    }
    detail::BinaryProfile prof{t, dp.z, zc, resid};
    double h = resolve_h_g(fit.config.kernel, t);
    for (long g = 0; g < G; ++g) {
      try {
        vals(pm, g) =
            detail::ll_binary_at(prof, grid[g], fit.config.kernel.family, h, fit.config.sing_floor)
                .alpha_c;
      } catch (const NumericalError&) {
        // left NaN; point gets flagged
      }
    }
  });

  PermutationBand out;
  out.grid = grid;
  out.n_perm = n_perm;
  out.level = level;
  out.upper_quantile_curve.resize(G);
  out.flagged.assign(size_t(G), 0);
  for (long g = 0; g < G; ++g) {
    std::vector<double> col;
    col.reserve(size_t(n_perm));
    for (int pm = 0; pm < n_perm; ++pm)
      if (std::isfinite(vals(pm, g))) col.push_back(vals(pm, g));
    if (col.empty()) {
      out.upper_quantile_curve[g] = std::numeric_limits<double>::quiet_NaN();
      out.flagged[size_t(g)] = 1;
      continue;
    }
    if (long(col.size()) < n_perm) out.flagged[size_t(g)] = 1;
    out.upper_quantile_curve[g] = order_stat(col, level);
  }
  return out;
}

namespace {

// kernel estimates of u(t), u'(t) and E(var|t) on an auxiliary sample of the
// true covariate law; Gaussian kernel so the oracle never sees empty windows
struct AuxSmoother {
  Eigen::VectorXd t, var;
  Eigen::MatrixXd xl;
  double h = 0;

  Eigen::VectorXd u_at(double t0) const {
    const long m = t.size();
    Eigen::VectorXd num = Eigen::VectorXd::Zero(xl.cols());
    double den = 0;
    for (long i = 0; i < m; ++i) {
      double w = kernel_value(KernelFamily::Gaussian, (t[i] - t0) / h) * var[i];
      num += w * xl.row(i).transpose();
      den += w;
    }
    return num / den;
  }

  Eigen::VectorXd uprime_at(double t0) const {
    const long m = t.size();
    double s0 = 0, s1 = 0, s2 = 0;
    Eigen::VectorXd b0 = Eigen::VectorXd::Zero(xl.cols());
    Eigen::VectorXd b1 = Eigen::VectorXd::Zero(xl.cols());
    for (long i = 0; i < m; ++i) {
      double w = kernel_value(KernelFamily::Gaussian, (t[i] - t0) / h) * var[i];
      double d = t[i] - t0;
      s0 += w;
      s1 += w * d;
      s2 += w * d * d;
      b0 += w * xl.row(i).transpose();
      b1 += (w * d) * xl.row(i).transpose();
    }
    double det = s0 * s2 - s1 * s1;
    return (s0 * b1 - s1 * b0) / det;
  }

  double evar_at(double t0) const {
    const long m = t.size();
    double num = 0, den = 0;
    for (long i = 0; i < m; ++i) {
      double w = kernel_value(KernelFamily::Gaussian, (t[i] - t0) / h);
      num += w * var[i];
      den += w;
    }
    return num / den;
  }
};

}  // namespace

SandwichOracle sandwich_oracle_binary(const SandwichTruth& truth, const RandomizationSpec& spec,
                                      long mc_draws, const FStar& f_star, std::uint64_t seed,
                                      SandwichVariant variant) {
  if (mc_draws < 1000) throw ConfigError("sandwich_oracle_binary: need mc_draws >= 1000");
  if (spec.kind != TreatmentKind::Binary)
    throw ConfigError("sandwich_oracle_binary: binary treatment only");
  const long p = truth.beta.size(), pL = p - 1;

  // auxiliary sample for the nuisance regressions
  const long m = std::min<long>(mc_draws, 20000);
  AuxSmoother aux;
  aux.t.resize(m);
  aux.var.resize(m);
  aux.xl.resize(m, pL);
  RngEngine aeng = make_engine(derive_seed(seed, 0xA0B1ULL));
  for (long i = 0; i < m; ++i) {
    Eigen::VectorXd x = truth.sample_x(aeng);
    aux.t[i] = truth.beta.dot(x);
    aux.var[i] = var_given_x(spec, x);
    aux.xl.row(i) = x.tail(pL);
  }
  aux.h = default_bandwidth(aux.t, m, BandwidthRole::u_fit, 1.0);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(pL, pL);
  Eigen::MatrixXd Bsum = Eigen::MatrixXd::Zero(pL, pL);
  Eigen::MatrixXd Bsq = Eigen::MatrixXd::Zero(pL, pL);

  RngEngine eng = make_engine(derive_seed(seed, 0xB2C3ULL));
  const double fd = 1e-5;
  for (long d = 0; d < mc_draws; ++d) {
    Eigen::VectorXd x = truth.sample_x(eng);
    double t = truth.beta.dot(x);
    Eigen::VectorXd xl = x.tail(pL);
    double vr = var_given_x(spec, x);
    double e = mean_given_x(spec, x);
    double fdiff = truth.f(x) - f_star(x);
    Eigen::MatrixXd Ai(pL, pL), Bi(pL, pL);
    switch (variant) {
      case SandwichVariant::Efficient: {
        Eigen::VectorXd w = xl - aux.u_at(t);
        double gp = truth.gprime(t);
        Ai = vr * gp * gp * w * w.transpose();
        Bi = (truth.sigma * truth.sigma + fdiff * fdiff) * Ai;
        break;
      }
      case SandwichVariant::PluginCurves: {
        Eigen::VectorXd u = aux.u_at(t);
        Eigen::VectorXd up = aux.uprime_at(t);
        double ev = aux.evar_at(t);
        Eigen::VectorXd w = xl - u;
        double hs = truth.h_star(t);
        double hsp = truth.h_star_prime(t);
        double gd = truth.g(t) - truth.g_star(t);
        double step = fd * (1.0 + std::abs(t));
        double gsp = (truth.g_star(t + step) - truth.g_star(t - step)) / (2.0 * step);
        Eigen::MatrixXd ww = w * w.transpose();
        Ai = vr * hs * gsp * ww - vr * gd * (hsp * w - hs * up) * xl.transpose();
        double ee2 = e * (1.0 - e) * (1.0 - e);  // E[Z^2(Z-e)^2 | x] = E[Z(Z-e)^2 | x]
        double hs2 = hs * hs;
        double s2 = truth.sigma * truth.sigma;
        Bi = s2 * vr * hs2 * ww;
        Bi += fdiff * fdiff * vr * hs2 * ww;
        Bi += ee2 * gd * gd * hs2 * ww;
        Bi += (vr * vr / (ev * ev)) * ww;
        Bi += 2.0 * ee2 * fdiff * gd * hs2 * ww;
        Bi -= 2.0 * (vr * vr / ev) * gd * hs * ww;
        break;
      }
      case SandwichVariant::PluginU: {
        double gp = truth.gprime(t);
        Eigen::VectorXd ws = xl - truth.u_star(t);
        Ai = vr * gp * gp * ws * xl.transpose();
        Eigen::VectorXd w = xl - aux.u_at(t);
        Bi = (truth.sigma * truth.sigma + fdiff * fdiff) * vr * gp * gp * w * w.transpose();
        break;
      }
    }
    A += Ai;
    Bsum += Bi;
    Bsq += Bi.cwiseProduct(Bi);
  }
  double N = double(mc_draws);
  A /= N;
  Eigen::MatrixXd B = Bsum / N;

  SandwichOracle out;
  out.A = A;
  out.B = B;
  out.b_mc_se.resize(pL, pL);
  for (long i = 0; i < pL; ++i)
    for (long j = 0; j < pL; ++j) {
      double var_ij = Bsq(i, j) / N - B(i, j) * B(i, j);
      out.b_mc_se(i, j) = std::sqrt(std::max(var_ij, 0.0) / N);
    }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw NumericalError("sandwich_oracle_binary: A matrix is singular");
  Eigen::MatrixXd Ainv = lu.inverse();
  out.avar = Ainv * B * Ainv.transpose();
  return out;
}

}  // namespace itr
