#include "itr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "itr/errors.hpp"
#include "itr/kernel.hpp"
#include "itr/randomization.hpp"
#include "itr/solver.hpp"

namespace itr {

Method method_from_string(const std::string& s) {
  if (s == "m1") return Method::M1;
  if (s == "m2") return Method::M2;
  if (s == "m3") return Method::M3;
  if (s == "m4") return Method::M4;
  if (s == "cont") return Method::ContEff;
  if (s == "cat") return Method::CatEff;
  throw ConfigError("unknown method '" + s + "' (expected m1|m2|m3|m4|cont|cat)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::M1: return "m1";
    case Method::M2: return "m2";
    case Method::M3: return "m3";
    case Method::M4: return "m4";
    case Method::ContEff: return "cont";
    case Method::CatEff: return "cat";
  }
  return "?";
}

Eigen::VectorXd transform_y(const Dataset& data, const RandomizationSpec& spec,
                            double var_floor) {
  if (spec.kind == TreatmentKind::Categorical)
    throw ConfigError("transform_y: categorical treatment has no scalar centered transform");
  const long n = data.n();
  Eigen::VectorXd out(n);
  std::vector<long> bad;
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    double v = var_given_x(spec, xi);
    if (v < var_floor) {
      bad.push_back(i);
      continue;
    }
    out[i] = (data.z[i] - mean_given_x(spec, xi)) * data.y[i] / v;
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "transform_y: conditional treatment variance below " << var_floor << " at rows";
    for (size_t k = 0; k < bad.size() && k < 8; ++k) msg << ' ' << bad[k];
    if (bad.size() > 8) msg << " ... (" << bad.size() << " total)";
    throw DataError(msg.str());
  }
  return out;
}

namespace {

constexpr double kBigResidual = 1e12;

// per-trial-beta arrays shared across the n pointwise fits
struct BinaryContext {
  Eigen::VectorXd t, e, v, zc, resid;
  Eigen::MatrixXd XL;
  double h_g = 0, h_u = 0;
};

BinaryContext make_binary_context(const Dataset& data, const RandomizationSpec& spec,
                                  const Eigen::VectorXd& beta, const FStar& f_star,
                                  const FitConfig& config) {
  const long n = data.n(), pL = data.p() - 1;
  BinaryContext c;
  c.t = data.x * beta;
  c.e.resize(n);
  c.v.resize(n);
  c.zc.resize(n);
  c.resid.resize(n);
  c.XL = data.x.rightCols(pL);
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    c.e[i] = mean_given_x(spec, xi);
    c.v[i] = var_given_x(spec, xi);
    c.zc[i] = data.z[i] - c.e[i];
    c.resid[i] = data.y[i] - f_star(xi);
  }
  c.h_g = resolve_h_g(config.kernel, c.t);
  c.h_u = resolve_h_u(config.kernel, c.t);
  return c;
}

Eigen::VectorXd u_hat_at(const BinaryContext& c, double t0, KernelFamily family, double h) {
  const long n = c.t.size();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(c.XL.cols());
  double den = 0;
  for (long i = 0; i < n; ++i) {
    double w = kernel_value(family, (c.t[i] - t0) / h);
    if (w == 0.0) continue;
    num += (w * c.v[i]) * c.XL.row(i).transpose();
    den += w * c.v[i];
  }
  if (!(den > 0.0)) {
    std::ostringstream msg;
    msg << "u_hat: empty neighborhood at index value " << t0;
    throw NumericalError(msg.str());
  }
  return num / den;
}

void finish_diag(ScoreDiag* diag, int skipped, int zeros, long n) {
  if (!diag) return;
  diag->skipped = skipped;
  diag->zero_terms = zeros;
  diag->degenerate = (skipped + zeros >= n);
}

void check_skip_fraction(int skipped, long n, const FitConfig& config) {
  if (skipped > config.max_skip_frac * double(n)) {
    std::ostringstream msg;
    msg << "score assembly: " << skipped << " of " << n
        << " profiled fits failed the conditioning guard";
    throw NumericalError(msg.str());
  }
}

// row-normalized kernel smoothing matrix on the index
Eigen::MatrixXd make_smoother(const Eigen::VectorXd& t, KernelFamily family, double h) {
  const long n = t.size();
  Eigen::MatrixXd S(n, n);
  for (long i = 0; i < n; ++i) {
    double row = 0;
    for (long j = 0; j < n; ++j) {
      double w = kernel_value(family, (t[j] - t[i]) / h);
      S(i, j) = w;
      row += w;
    }
    if (!(row > 0.0)) {
      std::ostringstream msg;
      msg << "kernel smoother: empty neighborhood at index value " << t[i];
      throw NumericalError(msg.str());
    }
    S.row(i) /= row;
  }
  return S;
}

}  // namespace

Eigen::VectorXd score_method1(const Dataset& data, const RandomizationSpec& spec,
                              const Eigen::VectorXd& beta, const FStar& f_star,
                              const FitConfig& config, ScoreDiag* diag) {
  if (spec.kind != TreatmentKind::Binary)
    throw ConfigError("score_method1: binary treatment only");
  const long n = data.n(), pL = data.p() - 1;
  BinaryContext c = make_binary_context(data, spec, beta, f_star, config);
  detail::BinaryProfile prof{c.t, data.z, c.zc, c.resid};
  Eigen::VectorXd score = Eigen::VectorXd::Zero(pL);
  int skipped = 0, zeros = 0;
  for (long j = 0; j < n; ++j) {
    if (c.zc[j] == 0.0) {
      ++zeros;
      continue;
    }
    LocalLinearFit fit;
    try {
      fit = detail::ll_binary_at(prof, c.t[j], config.kernel.family, c.h_g, config.sing_floor);
    } catch (const NumericalError&) {
      if (config.strict_profiling) throw;
      ++skipped;
      continue;
    }
    if (fit.condition < config.score_guard * (1.0 + fit.scale)) {
      if (config.strict_profiling) {
        std::ostringstream msg;
        msg << "score_method1: ill-conditioned profiled fit at observation " << j;
        throw NumericalError(msg.str());
      }
      ++skipped;
      continue;
    }
    Eigen::VectorXd u = u_hat_at(c, c.t[j], config.kernel.family, c.h_u);
    double coef = (c.resid[j] - data.z[j] * fit.alpha_c) * c.zc[j] * fit.alpha_1;
    score += coef * (c.XL.row(j).transpose() - u);
  }
  check_skip_fraction(skipped, n, config);
  finish_diag(diag, skipped, zeros, n);
  return score / double(n);
}

Eigen::VectorXd score_method2(const Dataset& data, const RandomizationSpec& spec,
                              const Eigen::VectorXd& beta, const FStar& f_star,
                              const CurveFn& g_star, const CurveFn& h_star,
                              const FitConfig& config, ScoreDiag* diag) {
  if (spec.kind != TreatmentKind::Binary)
    throw ConfigError("score_method2: binary treatment only");
  const long n = data.n(), pL = data.p() - 1;
  BinaryContext c = make_binary_context(data, spec, beta, f_star, config);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(pL);
  int zeros = 0;
  for (long j = 0; j < n; ++j) {
    double coef = (c.resid[j] - data.z[j] * g_star(c.t[j])) * c.zc[j] * h_star(c.t[j]);
    if (coef == 0.0) {
      ++zeros;
      continue;
    }
    Eigen::VectorXd u = u_hat_at(c, c.t[j], config.kernel.family, c.h_u);
    score += coef * (c.XL.row(j).transpose() - u);
  }
  finish_diag(diag, 0, zeros, n);
  return score / double(n);
}

Eigen::VectorXd score_method3(const Dataset& data, const RandomizationSpec& spec,
                              const Eigen::VectorXd& beta, const FStar& f_star,
                              const UStarFn& u_star, const FitConfig& config, ScoreDiag* diag) {
  if (spec.kind != TreatmentKind::Binary)
    throw ConfigError("score_method3: binary treatment only");
  const long n = data.n(), pL = data.p() - 1;
  BinaryContext c = make_binary_context(data, spec, beta, f_star, config);
  detail::BinaryProfile prof{c.t, data.z, c.zc, c.resid};
  Eigen::VectorXd score = Eigen::VectorXd::Zero(pL);
  int skipped = 0, zeros = 0;
  for (long j = 0; j < n; ++j) {
    if (c.zc[j] == 0.0) {
      ++zeros;
      continue;
    }
    LocalLinearFit fit;
    try {
      fit = detail::ll_binary_at(prof, c.t[j], config.kernel.family, c.h_g, config.sing_floor);
    } catch (const NumericalError&) {
      if (config.strict_profiling) throw;
      ++skipped;
      continue;
    }
    if (fit.condition < config.score_guard * (1.0 + fit.scale)) {
      if (config.strict_profiling) {
        std::ostringstream msg;
        msg << "score_method3: ill-conditioned profiled fit at observation " << j;
        throw NumericalError(msg.str());
      }
      ++skipped;
      continue;
    }
    Eigen::VectorXd us = u_star(c.t[j]);
    if (us.size() != pL) throw ConfigError("score_method3: u_star returns wrong dimension");
    double coef = (c.resid[j] - data.z[j] * fit.alpha_c) * c.zc[j] * fit.alpha_1;
    score += coef * (c.XL.row(j).transpose() - us);
  }
  check_skip_fraction(skipped, n, config);
  finish_diag(diag, skipped, zeros, n);
  return score / double(n);
}

namespace {

// per-observation contributions sqrt(SSE_j) of the profiled WLS criterion
Eigen::VectorXd m4_residuals(const Dataset& data, const RandomizationSpec& spec,
                             const Eigen::VectorXd& beta, const FitConfig& config) {
  if (spec.kind != TreatmentKind::Binary)
    throw ConfigError("objective_method4: binary treatment only");
  const long n = data.n();
  Eigen::VectorXd t = data.x * beta;
  Eigen::VectorXd u(n), v(n);
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    v[i] = var_given_x(spec, xi);
    u[i] = (data.z[i] - mean_given_x(spec, xi)) * data.y[i];
  }
  double h = resolve_h_g(config.kernel, t);
  Eigen::VectorXd out(n);
  for (long j = 0; j < n; ++j) {
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0, uu = 0;
    for (long i = 0; i < n; ++i) {
      double w = kernel_value(config.kernel.family, (t[i] - t[j]) / h);
      if (w == 0.0) continue;
      double d = t[i] - t[j], vv = v[i];
      a11 += w * vv * vv;
      a12 += w * vv * vv * d;
      a22 += w * vv * vv * d * d;
      b1 += w * vv * u[i];
      b2 += w * vv * d * u[i];
      uu += w * u[i] * u[i];
    }
    double det = a11 * a22 - a12 * a12;
    if (std::abs(det) < config.sing_floor * (1.0 + std::abs(a11 * a22))) {
      std::ostringstream msg;
      msg << "objective_method4: singular local least squares at observation " << j;
      throw NumericalError(msg.str());
    }
    double a = (a22 * b1 - a12 * b2) / det;
    double b = (a11 * b2 - a12 * b1) / det;
    double sse = uu - (a * b1 + b * b2);  // value at the stationary point
    out[j] = std::sqrt(std::max(sse, 0.0));
  }
  return out;
}

}  // namespace

double objective_method4(const Dataset& data, const RandomizationSpec& spec,
                         const Eigen::VectorXd& beta, const FitConfig& config) {
  return m4_residuals(data, spec, beta, config).squaredNorm();
}

WBasis build_w_basis(const Dataset& data, const RandomizationSpec& spec,
                     const Eigen::VectorXd& beta, int K, const FitConfig& config,
                     bool force_kernel_moments) {
  if (K < 1) throw ConfigError("build_w_basis: K must be >= 1");
  const long n = data.n();
  Eigen::MatrixXd P, C;
  detail::build_treatment_design(data, spec, K, P, C);
  WBasis out;
  out.W.resize(n, K);
  out.sd.resize(n, K);
  out.C.resize(n, K * (K - 1) / 2);

  if (spec.x_independent() && !force_kernel_moments) {
    // conditional law equals the marginal law: one Cholesky serves every t
    Eigen::MatrixXd M(K, K);
    switch (spec.kind) {
      case TreatmentKind::ContinuousDose: {
        Eigen::VectorXd mom =
            power_moments_given_x(spec, Eigen::VectorXd::Zero(data.p()), 2 * K);
        for (int j = 0; j < K; ++j)
          for (int k = 0; k < K; ++k) M(j, k) = mom[j + k + 1] - mom[j] * mom[k];
        break;
      }
      case TreatmentKind::Categorical: {
        Eigen::VectorXd pr = arm_means_given_x(spec, Eigen::VectorXd::Zero(data.p()));
        M = Eigen::MatrixXd(pr.asDiagonal()) - pr * pr.transpose();
        break;
      }
      case TreatmentKind::Binary: {
        double v = spec.p * (1.0 - spec.p);
        M = Eigen::MatrixXd::Constant(1, 1, v);
        break;
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
      throw NumericalError("build_w_basis: treatment transform covariance not positive definite");
    Eigen::MatrixXd L = llt.matrixL();
    out.W = L.triangularView<Eigen::Lower>().solve(C.transpose()).transpose();
    for (int k = 0; k < K; ++k) out.sd.col(k).setConstant(L(k, k));
    int col = 0;
    for (int k = 1; k < K; ++k)
      for (int j = 0; j < k; ++j) out.C.col(col++).setConstant(L(k, j));
    out.analytic = true;
    return out;
  }

  // law depends on x: moments conditional on the index need kernel estimates
  Eigen::VectorXd t = data.x * beta;
  double h = resolve_h_u(config.kernel, t);
  Eigen::MatrixXd S = make_smoother(t, config.kernel.family, h);
  const double sd_floor = std::sqrt(config.var_floor);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd r = C.col(k);
    for (int j = 0; j < k; ++j) {
      Eigen::VectorXd cjk = S * C.col(k).cwiseProduct(out.W.col(j)).matrix();
      int col = k * (k - 1) / 2 + j;
      out.C.col(col) = cjk;
      r -= cjk.cwiseProduct(out.W.col(j));
    }
    Eigen::VectorXd s2 = S * r.cwiseAbs2().matrix();
    for (long i = 0; i < n; ++i) {
      double sdv = std::sqrt(std::max(s2[i], 0.0));
      if (sdv < sd_floor) {
        std::ostringstream msg;
        msg << "build_w_basis: treatment powers collinear near index value " << t[i]
            << " (level " << k + 1 << ")";
        throw NumericalError(msg.str());
      }
      out.sd(i, k) = sdv;
      out.W(i, k) = r[i] / sdv;
    }
  }
  out.analytic = false;
  return out;
}

Eigen::VectorXd score_efficient_multi(const Dataset& data, const RandomizationSpec& spec,
                                      const Eigen::VectorXd& beta, const FStar& f_star, int K,
                                      const FitConfig& config, ScoreDiag* diag) {
  const long n = data.n(), pL = data.p() - 1;
  Eigen::VectorXd t = data.x * beta;
  Eigen::MatrixXd P, C;
  detail::build_treatment_design(data, spec, K, P, C);
  Eigen::VectorXd resid0(n);
  for (long i = 0; i < n; ++i) resid0[i] = data.y[i] - f_star(data.x.row(i).transpose());
  double h_g = resolve_h_g(config.kernel, t);
  double h_u = resolve_h_u(config.kernel, t);
  Eigen::MatrixXd XL = data.x.rightCols(pL);

  WBasis wb = build_w_basis(data, spec, beta, K, config);
  detail::MultiProfile prof{t, P, C, resid0};

  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, pL);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  std::vector<char> keep(size_t(n), 0);
  int skipped = 0;
  for (long j = 0; j < n; ++j) {
    MultiArmLocalFit mf;
    try {
      mf = detail::ll_multi_at(prof, t[j], config.kernel.family, h_g, config.sing_floor);
    } catch (const NumericalError&) {
      if (config.strict_profiling) throw;
      ++skipped;
      continue;
    }
    if (mf.gram_condition < config.score_guard * (1.0 + mf.gram_scale)) {
      if (config.strict_profiling) {
        std::ostringstream msg;
        msg << "score_efficient_multi: ill-conditioned fit at observation " << j;
        throw NumericalError(msg.str());
      }
      ++skipped;
      continue;
    }
    double slope = 0;
    for (int k = 0; k < K; ++k) slope += mf.alpha_1[k] * C(j, k);
    U.row(j) = slope * XL.row(j);
    r[j] = resid0[j] - P.row(j).dot(mf.alpha_c);
    keep[size_t(j)] = 1;
  }
  check_skip_fraction(skipped, n, config);

  // project U off the span of the W transforms, conditionally on the index
  Eigen::MatrixXd S = make_smoother(t, config.kernel.family, h_u);
  Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(n, pL);
  for (int k = 0; k < K; ++k) {
    Eigen::MatrixXd T = wb.W.col(k).asDiagonal() * U;        // rows W_ik * U_i
    Eigen::MatrixXd sm = S * T;                              // E(W_k U | t) at each t_j
    proj += wb.W.col(k).asDiagonal() * sm;
  }
  Eigen::VectorXd score = Eigen::VectorXd::Zero(pL);
  for (long j = 0; j < n; ++j)
    if (keep[size_t(j)]) score += r[j] * (U.row(j) - proj.row(j)).transpose();
  finish_diag(diag, skipped, 0, n);
  return score / double(n);
}

Eigen::VectorXd ls_init_beta(const Dataset& data, const RandomizationSpec& spec) {
  const long n = data.n(), p = data.p();
  Eigen::VectorXd resp(n);
  if (spec.kind == TreatmentKind::Categorical) {
    Eigen::MatrixXd P, C;
    detail::build_treatment_design(data, spec, spec.n_arms(), P, C);
    resp = C.rowwise().sum().cwiseProduct(data.y);
  } else {
    resp = transform_y(data, spec);
  }
  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = data.x;
  Eigen::VectorXd sol = A.colPivHouseholderQr().solve(resp);
  Eigen::VectorXd coef = sol.tail(p);
  if (std::abs(coef[0]) < 1e-10 * (coef.norm() + 1e-300)) {
    // response carries no signal along the first covariate; start axis-aligned
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    b[0] = 1.0;
    return b;
  }
  return coef / coef[0];
}

namespace {

Eigen::VectorXd full_beta(const Eigen::VectorXd& beta_L) {
  Eigen::VectorXd b(beta_L.size() + 1);
  b[0] = 1.0;
  b.tail(beta_L.size()) = beta_L;
  return b;
}

using ScoreFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

ScoreFn make_score_fn(const Dataset& data, const RandomizationSpec& spec, Method method, int K,
                      const FStar& f_star, const FitConfig& config) {
  const long pL = data.p() - 1;
  switch (method) {
    case Method::M1:
      return [&data, &spec, f_star, config](const Eigen::VectorXd& bl) {
        return score_method1(data, spec, full_beta(bl), f_star, config);
      };
    case Method::M2: {
      CurveFn gs = [](double) { return 0.0; };
      CurveFn hs = [](double) { return 1.0; };
      return [&data, &spec, f_star, gs, hs, config](const Eigen::VectorXd& bl) {
        return score_method2(data, spec, full_beta(bl), f_star, gs, hs, config);
      };
    }
    case Method::M3: {
      UStarFn us = [pL](double) { return Eigen::VectorXd::Zero(pL); };
      return [&data, &spec, f_star, us, config](const Eigen::VectorXd& bl) {
        return score_method3(data, spec, full_beta(bl), f_star, us, config);
      };
    }
    case Method::M4:
      return [&data, &spec, config](const Eigen::VectorXd& bl) {
        return m4_residuals(data, spec, full_beta(bl), config);
      };
    case Method::ContEff:
    case Method::CatEff:
      return [&data, &spec, f_star, K, config](const Eigen::VectorXd& bl) {
        return score_efficient_multi(data, spec, full_beta(bl), f_star, K, config);
      };
  }
  throw ConfigError("solve_index: unknown method");
}

ScoreFn guard_score_fn(const ScoreFn& f, long out_dim) {
  return [f, out_dim](const Eigen::VectorXd& bl) -> Eigen::VectorXd {
    try {
      Eigen::VectorXd v = f(bl);
      if (!v.allFinite()) return Eigen::VectorXd::Constant(out_dim, kBigResidual);
      return v;
    } catch (const NumericalError&) {
      return Eigen::VectorXd::Constant(out_dim, kBigResidual);
    }
  };
}

void push_candidate(std::vector<Eigen::VectorXd>& cands, const Eigen::VectorXd& c) {
  for (const auto& e : cands)
    if (e.size() == c.size() && (e - c).norm() < 1e-9) return;
  cands.push_back(c);
}

}  // namespace

std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score_residuals_fn(
    const Dataset& data, const RandomizationSpec& spec, Method method, int K,
    const FStar& f_star, const FitConfig& config) {
  return make_score_fn(data, spec, method, K, f_star, config);
}

IndexFit solve_index(const Dataset& data, const RandomizationSpec& spec, Method method,
                     const FitConfig& config, const std::optional<Eigen::VectorXd>& init, int K,
                     const FStar& f_star) {
  validate_dataset(data, spec);
  const long p = data.p(), pL = p - 1;
  if (pL < 1) throw ConfigError("solve_index: need at least two covariates");
  switch (method) {
    case Method::M1:
    case Method::M2:
    case Method::M3:
    case Method::M4:
      if (spec.kind != TreatmentKind::Binary)
        throw ConfigError("solve_index: methods m1-m4 require binary treatment");
      K = 1;
      break;
    case Method::ContEff:
      // binary data passes through with K=1, where the power basis is just Z
      if (spec.kind == TreatmentKind::Binary)
        K = 1;
      else if (spec.kind != TreatmentKind::ContinuousDose)
        throw ConfigError("solve_index: method cont requires continuous-dose treatment");
      break;
    case Method::CatEff:
      if (spec.kind == TreatmentKind::Binary)
        K = 1;
      else if (spec.kind != TreatmentKind::Categorical)
        throw ConfigError("solve_index: method cat requires categorical treatment");
      else
        K = spec.n_arms();
      break;
  }
  if (init && init->size() != pL) throw ConfigError("solve_index: init has wrong dimension");

  FitConfig cfg = config;
  Eigen::VectorXd ls = ls_init_beta(data, spec);
  Eigen::VectorXd ls_L = ls.tail(pL);

  if (cfg.cv_bandwidth && !cfg.kernel.h_g) {
    Eigen::VectorXd b0 = init ? full_beta(*init) : ls;
    std::vector<double> grid = cfg.cv_grid;
    if (grid.empty()) {
      Eigen::VectorXd t0 = data.x * b0;
      double rot = default_bandwidth(t0, data.n(), BandwidthRole::g_fit, cfg.kernel.rot_c);
      grid = {0.25 * rot, 0.5 * rot, rot, 2.0 * rot, 4.0 * rot};
    }
    cfg.kernel.h_g = loo_cv_bandwidth(data, spec, b0, grid, cfg.kernel.family);
  }

  std::vector<Eigen::VectorXd> cands;
  if (method == Method::M1 || method == Method::M2 || method == Method::M3) {
    // the least-squares criterion is better behaved far from the truth; its
    // minimizer makes a solid warm start for the estimating equations
    try {
      IndexFit warm = solve_index(data, spec, Method::M4, cfg, init, 1, f_star);
      push_candidate(cands, warm.beta_L());
    } catch (const Error&) {
      // fall through to the raw starts
    }
  }
  if (init) push_candidate(cands, *init);
  push_candidate(cands, ls_L);
  if (method == Method::ContEff || method == Method::CatEff) {
    push_candidate(cands, -ls_L);
    // probe ladder: rank cheap starts by score norm, keep the best three
    ScoreFn probe = guard_score_fn(make_score_fn(data, spec, method, K, f_star, cfg), pL);
    std::vector<Eigen::VectorXd> dirs;
    for (long k = 0; k < pL; ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(pL);
      e[k] = 1.0;
      dirs.push_back(e);
      dirs.push_back(-e);
    }
    dirs.push_back(Eigen::VectorXd::Constant(pL, 1.0 / std::sqrt(double(pL))));
    dirs.push_back(Eigen::VectorXd::Constant(pL, -1.0 / std::sqrt(double(pL))));
    std::vector<std::pair<double, Eigen::VectorXd>> probes;
    for (const auto& d : dirs)
      for (double radius : {0.5, 1.0, 2.0}) {
        Eigen::VectorXd c = radius * d;
        probes.emplace_back(probe(c).norm(), c);
      }
    std::stable_sort(probes.begin(), probes.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t k = 0; k < probes.size() && k < 3; ++k)
      push_candidate(cands, probes[k].second);
  }

  ScoreFn raw = make_score_fn(data, spec, method, K, f_star, cfg);
  long out_dim = (method == Method::M4) ? data.n() : pL;
  ScoreFn safe = guard_score_fn(raw, out_dim);

  LMResult best;
  bool have_best = false;
  int total_iterations = 0;
  for (const auto& c : cands) {
    double f0;
    try {
      f0 = raw(c).norm();
    } catch (const NumericalError&) {
      continue;  // start not evaluable
    }
    if (!std::isfinite(f0)) continue;
    LMOptions opt;
    opt.tol = cfg.solver_tol * (1.0 + f0);
    opt.max_iter = cfg.max_iter;
    opt.fd_step = cfg.fd_step;
    LMResult res = lm_least_squares(safe, c, opt);
    total_iterations += res.iterations;
    if (!have_best || res.fnorm < best.fnorm) {
      best = res;
      have_best = true;
    }
  }
  if (!have_best)
    throw NumericalError("solve_index: no starting point admits a score evaluation");

  IndexFit fit;
  fit.beta = full_beta(best.x);
  fit.method = method;
  fit.score_norm = best.fnorm;
  fit.iterations = total_iterations;
  fit.converged = best.converged;
  fit.K = K;
  fit.data = std::make_shared<Dataset>(data);
  fit.spec = spec;
  fit.config = cfg;
  fit.f_star = f_star;
  return fit;
}

double predict_g_at(const IndexFit& fit, double t0) {
  const Dataset& data = *fit.data;
  const long n = data.n();
  Eigen::VectorXd t = data.x * fit.beta;
  Eigen::VectorXd zc(n), resid(n);
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    zc[i] = data.z[i] - mean_given_x(fit.spec, xi);
    resid[i] = data.y[i] - fit.f_star(xi);
  }
  detail::BinaryProfile prof{t, data.z, zc, resid};
  double h = resolve_h_g(fit.config.kernel, t);
  return detail::ll_binary_at(prof, t0, fit.config.kernel.family, h, fit.config.sing_floor)
      .alpha_c;
}

Eigen::VectorXd predict_g_multi_at(const IndexFit& fit, double t0) {
  const Dataset& data = *fit.data;
  const long n = data.n();
  Eigen::VectorXd t = data.x * fit.beta;
  Eigen::MatrixXd P, C;
  detail::build_treatment_design(data, fit.spec, fit.K, P, C);
  Eigen::VectorXd resid(n);
  for (long i = 0; i < n; ++i) resid[i] = data.y[i] - fit.f_star(data.x.row(i).transpose());
  detail::MultiProfile prof{t, P, C, resid};
  double h = resolve_h_g(fit.config.kernel, t);
  return detail::ll_multi_at(prof, t0, fit.config.kernel.family, h, fit.config.sing_floor)
      .alpha_c;
}

double predict_g(const IndexFit& fit, const Eigen::VectorXd& x) {
  return predict_g_at(fit, fit.beta.dot(x));
}

Eigen::VectorXd predict_g_multi(const IndexFit& fit, const Eigen::VectorXd& x) {
  return predict_g_multi_at(fit, fit.beta.dot(x));
}

}  // namespace itr
