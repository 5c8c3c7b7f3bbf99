#include "itr/randomization.hpp"

#include <cmath>
#include <sstream>

#include "itr/errors.hpp"

namespace itr {

RandomizationSpec RandomizationSpec::bernoulli(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("bernoulli spec: p must lie in (0,1)");
  RandomizationSpec s;
  s.kind = TreatmentKind::Binary;
  s.law = LawKind::ConstantBernoulli;
  s.p = p;
  return s;
}

RandomizationSpec RandomizationSpec::logistic(const Eigen::VectorXd& gamma) {
  if (gamma.size() == 0) throw ConfigError("logistic spec: empty coefficient vector");
  RandomizationSpec s;
  s.kind = TreatmentKind::Binary;
  s.law = LawKind::LogisticBernoulli;
  s.gamma = gamma;
  return s;
}

RandomizationSpec RandomizationSpec::categorical(const Eigen::VectorXd& arm_probs) {
  if (arm_probs.size() == 0) throw ConfigError("categorical spec: need at least one active arm");
  double total = 0.0;
  for (long k = 0; k < arm_probs.size(); ++k) {
    double p = arm_probs[k];
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("categorical spec: arm probabilities must lie in (0,1)");
    total += p;
  }
  if (!(total < 1.0)) throw ConfigError("categorical spec: arm probabilities must leave mass for control");
  RandomizationSpec s;
  s.kind = TreatmentKind::Categorical;
  s.law = LawKind::CategoricalFixed;
  s.arm_probs = arm_probs;
  return s;
}

RandomizationSpec RandomizationSpec::uniform_dose(double a, double b) {
  if (!(a < b)) throw ConfigError("uniform_dose spec: need a < b");
  RandomizationSpec s;
  s.kind = TreatmentKind::ContinuousDose;
  s.law = LawKind::UniformDose;
  s.dose_a = a;
  s.dose_b = b;
  return s;
}

double mean_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& x) {
  switch (spec.law) {
    case LawKind::ConstantBernoulli:
      return spec.p;
    case LawKind::LogisticBernoulli: {
      if (spec.gamma.size() != x.size()) {
        std::ostringstream msg;
        msg << "mean_given_x: gamma has " << spec.gamma.size() << " entries but x has "
            << x.size();
        throw ConfigError(msg.str());
      }
      double eta = spec.gamma.dot(x);
      return 1.0 / (1.0 + std::exp(-eta));
    }
    case LawKind::UniformDose:
      return 0.5 * (spec.dose_a + spec.dose_b);
    case LawKind::CategoricalFixed:
      throw ConfigError("mean_given_x: categorical treatment has no scalar mean; use arm_means_given_x");
  }
  throw ConfigError("mean_given_x: unknown law");
}

Eigen::VectorXd arm_means_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& /*x*/) {
  if (spec.law != LawKind::CategoricalFixed)
    throw ConfigError("arm_means_given_x: only defined for categorical treatment");
  return spec.arm_probs;
}

double var_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& x) {
  switch (spec.law) {
    case LawKind::ConstantBernoulli:
    case LawKind::LogisticBernoulli: {
      double e = mean_given_x(spec, x);
      return e * (1.0 - e);
    }
    case LawKind::UniformDose: {
      double w = spec.dose_b - spec.dose_a;
      return w * w / 12.0;
    }
    case LawKind::CategoricalFixed:
      throw ConfigError("var_given_x: categorical treatment has no scalar variance");
  }
  throw ConfigError("var_given_x: unknown law");
}

Eigen::VectorXd power_moments_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& /*x*/,
                                      int max_power) {
  if (max_power < 1) throw ConfigError("power_moments_given_x: max_power must be >= 1");
  if (spec.law != LawKind::UniformDose)
    throw ConfigError("power_moments_given_x: only defined for the continuous dose law");
  Eigen::VectorXd m(max_power);
  double a = spec.dose_a, b = spec.dose_b;
  double pa = a, pb = b;  // running powers a^k, b^k
  for (int k = 1; k <= max_power; ++k) {
    pa *= a;
    pb *= b;
    // E Z^k = (b^{k+1} - a^{k+1}) / ((k+1)(b-a))
    m[k - 1] = (pb - pa) / (double(k + 1) * (b - a));
  }
  return m;
}

double draw_treatment(const RandomizationSpec& spec, const Eigen::VectorXd& x, RngEngine& rng) {
  switch (spec.law) {
    case LawKind::ConstantBernoulli:
    case LawKind::LogisticBernoulli: {
      double e = mean_given_x(spec, x);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      return unif(rng) < e ? 1.0 : 0.0;
    }
    case LawKind::UniformDose: {
      std::uniform_real_distribution<double> unif(spec.dose_a, spec.dose_b);
      return unif(rng);
    }
    case LawKind::CategoricalFixed: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double u = unif(rng), acc = 0.0;
      for (long k = 0; k < spec.arm_probs.size(); ++k) {
        acc += spec.arm_probs[k];
        if (u < acc) return double(k + 1);
      }
      return 0.0;  // control
    }
  }
  throw ConfigError("draw_treatment: unknown law");
}

}  // namespace itr
