#include "itr/rules.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "itr/errors.hpp"
#include "itr/kernel.hpp"
#include "itr/randomization.hpp"

namespace itr {

DecisionRule DecisionRule::for_kind(TreatmentKind kind, const RandomizationSpec& spec) {
  DecisionRule r;
  switch (kind) {
    case TreatmentKind::Binary:
      r.kind = RuleKind::SignRule;
      break;
    case TreatmentKind::Categorical:
      r.kind = RuleKind::ArgmaxArm;
      break;
    case TreatmentKind::ContinuousDose:
      r.kind = RuleKind::DoseVertex;
      r.dose_a = spec.dose_a;
      r.dose_b = spec.dose_b;
      break;
  }
  return r;
}

namespace {

// g-hat at an index value with the local-linear -> local-constant -> zero
// fallback; ok=false means even the constant fit degenerated (treat as no
// evidence of benefit)
double eval_g_binary(const IndexFit& fit, double t0, bool* ok = nullptr) {
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
  if (ok) *ok = true;
  try {
    return detail::ll_binary_at(prof, t0, fit.config.kernel.family, h, fit.config.sing_floor)
        .alpha_c;
  } catch (const NumericalError&) {
  }
  try {
    return detail::lc_binary_at(prof, t0, fit.config.kernel.family, h, fit.config.sing_floor);
  } catch (const NumericalError&) {
  }
  if (ok) *ok = false;
  return 0.0;
}

// multi-arm analogue: slopes dropped on fallback, curve levels kept
Eigen::VectorXd eval_g_multi(const IndexFit& fit, double t0, bool* ok = nullptr) {
  const Dataset& data = *fit.data;
  const long n = data.n();
  const int K = fit.K;
  Eigen::VectorXd t = data.x * fit.beta;
  Eigen::MatrixXd P, C;
  detail::build_treatment_design(data, fit.spec, K, P, C);
  Eigen::VectorXd resid(n);
  for (long i = 0; i < n; ++i) resid[i] = data.y[i] - fit.f_star(data.x.row(i).transpose());
  detail::MultiProfile prof{t, P, C, resid};
  double h = resolve_h_g(fit.config.kernel, t);
  if (ok) *ok = true;
  try {
    return detail::ll_multi_at(prof, t0, fit.config.kernel.family, h, fit.config.sing_floor)
        .alpha_c;
  } catch (const NumericalError&) {
  }
  // constant-only K x K system
  try {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
    for (long i = 0; i < n; ++i) {
      double w = kernel_value(fit.config.kernel.family, (t[i] - t0) / h);
      if (w == 0.0) continue;
      G.noalias() += w * C.row(i).transpose() * P.row(i);
      rhs.noalias() += w * C.row(i).transpose() * resid[i];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double smin = svd.singularValues()[K - 1], smax = svd.singularValues()[0];
    if (smin < fit.config.sing_floor * (1.0 + smax))
      throw NumericalError("constant fallback singular");
    return svd.solve(rhs);
  } catch (const NumericalError&) {
  }
  if (ok) *ok = false;
  return Eigen::VectorXd::Zero(K);
}

double dose_from_coefs(const Eigen::VectorXd& gk, double a, double b) {
  const int K = int(gk.size());
  auto s = [&](double z) {
    double acc = 0, zp = 1;
    for (int k = 0; k < K; ++k) {
      zp *= z;
      acc += gk[k] * zp;
    }
    return acc;
  };
  double best = a, bestv = s(a);
  auto consider = [&](double z) {
    double v = s(z);
    if (v > bestv) {  // ties keep the smaller dose
      best = z;
      bestv = v;
    }
  };
  consider(b);
  if (K == 2 && gk[1] < 0.0) {
    consider(std::clamp(-gk[0] / (2.0 * gk[1]), a, b));
  } else if (K >= 3) {
    for (int i = 1; i < 100; ++i) consider(a + (b - a) * double(i) / 100.0);
  }
  return best;
}

}  // namespace

double decide(const DecisionRule& rule, const IndexFit& fit, const Eigen::VectorXd& x) {
  double t0 = fit.beta.dot(x);
  switch (rule.kind) {
    case RuleKind::SignRule: {
      double g = eval_g_binary(fit, t0);
      return g > 0.0 ? 1.0 : 0.0;
    }
    case RuleKind::ArgmaxArm: {
      Eigen::VectorXd g = eval_g_multi(fit, t0);
      int best = 0;
      double bestv = 0.0;  // control effect
      for (int k = 0; k < g.size(); ++k)
        if (g[k] > bestv) {
          best = k + 1;
          bestv = g[k];
        }
      return double(best);
    }
    case RuleKind::DoseVertex: {
      bool ok = true;
      Eigen::VectorXd g = eval_g_multi(fit, t0, &ok);
      if (!ok) return rule.dose_a;
      return dose_from_coefs(g, rule.dose_a, rule.dose_b);
    }
  }
  throw ConfigError("decide: unknown rule kind");
}

double pcd(const IndexFit& fit, const std::function<double(double)>& truth_g,
           const Eigen::VectorXd& beta_true, const Eigen::MatrixXd& sample_x) {
  const long m = sample_x.rows();
  if (m == 0) throw ConfigError("pcd: empty evaluation sample");
  double miss = 0;
  for (long i = 0; i < m; ++i) {
    Eigen::VectorXd xi = sample_x.row(i).transpose();
    double est = eval_g_binary(fit, fit.beta.dot(xi));
    double tru = truth_g(beta_true.dot(xi));
    miss += std::abs(double(est > 0.0) - double(tru > 0.0));
  }
  return 1.0 - miss / double(m);
}

Eigen::VectorXd pcd_multi(const IndexFit& fit,
                          const std::vector<std::function<double(double)>>& truth_g,
                          const Eigen::VectorXd& beta_true, const Eigen::MatrixXd& sample_x) {
  const long m = sample_x.rows();
  const int K = fit.K;
  if (int(truth_g.size()) != K) throw ConfigError("pcd_multi: need one truth curve per arm");
  if (m == 0) throw ConfigError("pcd_multi: empty evaluation sample");
  Eigen::VectorXd miss = Eigen::VectorXd::Zero(K);
  for (long i = 0; i < m; ++i) {
    Eigen::VectorXd xi = sample_x.row(i).transpose();
    Eigen::VectorXd est = eval_g_multi(fit, fit.beta.dot(xi));
    double tt = beta_true.dot(xi);
    for (int k = 0; k < K; ++k)
      miss[k] += std::abs(double(est[k] > 0.0) - double(truth_g[size_t(k)](tt) > 0.0));
  }
  return Eigen::VectorXd::Ones(K) - miss / double(m);
}

double value_function(const Dataset& data, const RandomizationSpec& spec, const IndexFit& fit) {
  const long n = data.n();
  if (n == 0) throw DataError("value_function: empty dataset");
  DecisionRule rule = DecisionRule::for_kind(data.kind, spec);
  double acc = 0;
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd xi = data.x.row(i).transpose();
    double d = decide(rule, fit, xi);
    double pr = 0;
    bool match = false;
    switch (data.kind) {
      case TreatmentKind::Binary: {
        double e = mean_given_x(spec, xi);
        pr = (d == 1.0) ? e : 1.0 - e;
        match = data.z[i] == d;
        break;
      }
      case TreatmentKind::Categorical: {
        int arm = int(std::lround(d));
        Eigen::VectorXd p = arm_means_given_x(spec, xi);
        pr = (arm == 0) ? 1.0 - p.sum() : p[arm - 1];
        match = std::lround(data.z[i]) == arm;
        break;
      }
      case TreatmentKind::ContinuousDose: {
        double delta = fit.config.dose_window_frac * (spec.dose_b - spec.dose_a);
        double lo = std::max(spec.dose_a, d - delta);
        double hi = std::min(spec.dose_b, d + delta);
        pr = (hi - lo) / (spec.dose_b - spec.dose_a);
        match = std::abs(data.z[i] - d) <= delta;
        break;
      }
    }
    if (pr < fit.config.weight_floor) {
      std::ostringstream msg;
      msg << "value_function: recommendation probability " << pr << " below floor at row " << i;
      throw NumericalError(msg.str());
    }
    if (match) acc += data.y[i] / pr;
  }
  return acc / double(n);
}

Eigen::MatrixXi assignment_crosstab(const Eigen::VectorXi& real_z,
                                    const Eigen::VectorXi& recommended_z) {
  if (real_z.size() != recommended_z.size())
    throw DataError("assignment_crosstab: length mismatch");
  if (real_z.size() == 0) throw DataError("assignment_crosstab: empty input");
  int mx = std::max(real_z.maxCoeff(), recommended_z.maxCoeff());
  if (real_z.minCoeff() < 0 || recommended_z.minCoeff() < 0)
    throw DataError("assignment_crosstab: negative treatment code");
  Eigen::MatrixXi tab = Eigen::MatrixXi::Zero(mx + 1, mx + 1);
  for (long i = 0; i < real_z.size(); ++i) ++tab(real_z[i], recommended_z[i]);
  return tab;
}

}  // namespace itr
