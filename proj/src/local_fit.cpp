#include "itr/local_fit.hpp"

#include <cmath>
#include <sstream>

#include "itr/errors.hpp"
#include "itr/kernel.hpp"
#include "itr/randomization.hpp"

namespace itr {

namespace detail {

LocalLinearFit ll_binary_at(const BinaryProfile& in, double t0, KernelFamily family, double h,
                            double sing_floor) {
  const long n = in.t.size();
  double v0 = 0, v1 = 0, v2 = 0, s_c = 0, s_1 = 0;
  for (long i = 0; i < n; ++i) {
    double w = kernel_value(family, (in.t[i] - t0) / h);
    if (w == 0.0) continue;
    double d = in.t[i] - t0;
    double zzc = in.z[i] * in.zc[i];
    v0 += w * zzc;
    v1 += w * zzc * d;
    v2 += w * zzc * d * d;
    s_c += w * in.resid[i] * in.zc[i];          // will be combined below
    s_1 += w * in.resid[i] * in.zc[i] * d;
  }
  // alpha_c = det^{-1} sum w r zc (v2 - v1 d) = (v2 s_c - v1 s_1)/det
  // alpha_1 = det^{-1} sum w r zc (v0 d - v1) = (v0 s_1 - v1 s_c)/det
  double det = v0 * v2 - v1 * v1;
  double scale = std::abs(v0 * v2);
  if (std::abs(det) < sing_floor * (1.0 + scale)) {
    std::ostringstream msg;
    msg << "local linear fit singular at t0=" << t0 << " (v0=" << v0 << ", v1=" << v1
        << ", v2=" << v2 << ", h=" << h << ")";
    throw NumericalError(msg.str());
  }
  LocalLinearFit out;
  out.alpha_c = (v2 * s_c - v1 * s_1) / det;
  out.alpha_1 = (v0 * s_1 - v1 * s_c) / det;
  out.at = t0;
  out.condition = std::abs(det);
  out.scale = scale;
  return out;
}

double lc_binary_at(const BinaryProfile& in, double t0, KernelFamily family, double h,
                    double floor_val) {
  const long n = in.t.size();
  double den = 0, num = 0, den_abs = 0;
  for (long i = 0; i < n; ++i) {
    double w = kernel_value(family, (in.t[i] - t0) / h);
    if (w == 0.0) continue;
    double zzc = in.z[i] * in.zc[i];
    den += w * zzc;
    den_abs += w * std::abs(zzc);
    num += w * in.resid[i] * in.zc[i];
  }
  if (std::abs(den) < floor_val * (1.0 + den_abs)) {
    std::ostringstream msg;
    msg << "local constant fit: denominator ~0 at t0=" << t0 << " (h=" << h << ")";
    throw NumericalError(msg.str());
  }
  return num / den;
}

MultiArmLocalFit ll_multi_at(const MultiProfile& in, double t0, KernelFamily family, double h,
                             double sing_floor) {
  const long n = in.t.size();
  const long K = in.P.cols();
  const long m = 2 * K;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd mrow(m), vrow(m);
  for (long i = 0; i < n; ++i) {
    double w = kernel_value(family, (in.t[i] - t0) / h);
    if (w == 0.0) continue;
    double d = in.t[i] - t0;
    for (long k = 0; k < K; ++k) {
      mrow[2 * k] = in.P(i, k);
      mrow[2 * k + 1] = in.P(i, k) * d;
      vrow[2 * k] = in.C(i, k);
      vrow[2 * k + 1] = in.C(i, k) * d;
    }
    G.noalias() += w * vrow * mrow.transpose();
    rhs.noalias() += w * vrow * in.resid[i];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smin = svd.singularValues()[m - 1];
  double smax = svd.singularValues()[0];
  if (smin < sing_floor * (1.0 + smax)) {
    std::ostringstream msg;
    msg << "multi-arm local fit singular at t0=" << t0 << " (sigma_min=" << smin
        << ", sigma_max=" << smax << ", h=" << h << ")";
    throw NumericalError(msg.str());
  }
  Eigen::VectorXd theta = svd.solve(rhs);
  MultiArmLocalFit out;
  out.alpha_c.resize(K);
  out.alpha_1.resize(K);
  for (long k = 0; k < K; ++k) {
    out.alpha_c[k] = theta[2 * k];
    out.alpha_1[k] = theta[2 * k + 1];
  }
  out.at = t0;
  out.gram_condition = smin;
  out.gram_scale = smax;
  return out;
}

}  // namespace detail

namespace {

// shared setup for the public pointwise interfaces
struct BinaryArrays {
  Eigen::VectorXd t, zc, resid;
};

BinaryArrays binary_arrays(const Dataset& data, const RandomizationSpec& spec,
                           const Eigen::VectorXd& beta, const FStar& f_star) {
  const long n = data.n();
  BinaryArrays a;
  a.t = data.x * beta;
  a.zc.resize(n);
  a.resid.resize(n);
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    a.zc[i] = data.z[i] - mean_given_x(spec, xi);
    a.resid[i] = data.y[i] - f_star(xi);
  }
  return a;
}

}  // namespace

Eigen::VectorXd u_hat(const Dataset& data, const RandomizationSpec& spec,
                      const Eigen::VectorXd& beta, const Eigen::VectorXd& x,
                      const FitConfig& config) {
  const long n = data.n();
  const long pL = data.p() - 1;
  Eigen::VectorXd t = data.x * beta;
  double t0 = beta.dot(x);
  double h = resolve_h_u(config.kernel, t);
  Eigen::VectorXd num = Eigen::VectorXd::Zero(pL);
  double den = 0.0;
  for (long i = 0; i < n; ++i) {
    double w = kernel_value(config.kernel.family, (t[i] - t0) / h);
    if (w == 0.0) continue;
    double v = var_given_x(spec, data.x.row(i).transpose());
    num += w * v * data.x.row(i).tail(pL).transpose();
    den += w * v;
  }
  if (!(den > 0.0)) {
    std::ostringstream msg;
    msg << "u_hat: degenerate denominator at index value " << t0 << " (h=" << h << ")";
    throw NumericalError(msg.str());
  }
  return num / den;
}

LocalLinearFit local_linear_binary(const Dataset& data, const RandomizationSpec& spec,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& x0,
                                   const FStar& f_star, const FitConfig& config) {
  BinaryArrays a = binary_arrays(data, spec, beta, f_star);
  detail::BinaryProfile prof{a.t, data.z, a.zc, a.resid};
  double h = resolve_h_g(config.kernel, a.t);
  return detail::ll_binary_at(prof, beta.dot(x0), config.kernel.family, h, config.sing_floor);
}

double local_constant_g(const Dataset& data, const RandomizationSpec& spec,
                        const Eigen::VectorXd& beta, const Eigen::VectorXd& x0,
                        const FStar& f_star, const FitConfig& config) {
  BinaryArrays a = binary_arrays(data, spec, beta, f_star);
  detail::BinaryProfile prof{a.t, data.z, a.zc, a.resid};
  double h = resolve_h_g(config.kernel, a.t);
  return detail::lc_binary_at(prof, beta.dot(x0), config.kernel.family, h, config.sing_floor);
}

namespace detail {

void build_treatment_design(const Dataset& data, const RandomizationSpec& spec, int K,
                            Eigen::MatrixXd& P, Eigen::MatrixXd& C) {
  if (K < 1) throw ConfigError("build_treatment_design: K must be >= 1");
  const long n = data.n();
  P.resize(n, K);
  C.resize(n, K);
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    switch (spec.kind) {
      case TreatmentKind::Categorical: {
        if (K != spec.n_arms())
          throw ConfigError("build_treatment_design: K must equal the number of active arms");
        Eigen::VectorXd e = arm_means_given_x(spec, xi);
        for (int k = 0; k < K; ++k) {
          double ind = (long(std::lround(data.z[i])) == k + 1) ? 1.0 : 0.0;
          P(i, k) = ind;
          C(i, k) = ind - e[k];
        }
        break;
      }
      case TreatmentKind::Binary: {
        if (K != 1) throw ConfigError("build_treatment_design: binary treatment requires K = 1");
        P(i, 0) = data.z[i];
        C(i, 0) = data.z[i] - mean_given_x(spec, xi);
        break;
      }
      case TreatmentKind::ContinuousDose: {
        Eigen::VectorXd mom = power_moments_given_x(spec, xi, K);
        double zp = 1.0;
        for (int k = 0; k < K; ++k) {
          zp *= data.z[i];
          P(i, k) = zp;
          C(i, k) = zp - mom[k];
        }
        break;
      }
    }
  }
}

}  // namespace detail

MultiArmLocalFit local_linear_multi(const Dataset& data, const RandomizationSpec& spec,
                                    const Eigen::VectorXd& beta, const Eigen::VectorXd& x0,
                                    const FStar& f_star, const FitConfig& config, int K) {
  const long n = data.n();
  Eigen::VectorXd t = data.x * beta;
  Eigen::MatrixXd P, C;
  detail::build_treatment_design(data, spec, K, P, C);
  Eigen::VectorXd resid(n);
  for (long i = 0; i < n; ++i) resid[i] = data.y[i] - f_star(data.x.row(i).transpose());
  detail::MultiProfile prof{t, P, C, resid};
  double h = resolve_h_g(config.kernel, t);
  return detail::ll_multi_at(prof, beta.dot(x0), config.kernel.family, h, config.sing_floor);
}

}  // namespace itr
