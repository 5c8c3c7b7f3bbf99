#pragma once
#include <Eigen/Dense>
#include "itr/rng.hpp"

namespace itr {

enum class TreatmentKind { Binary, Categorical, ContinuousDose };

enum class LawKind { ConstantBernoulli, LogisticBernoulli, CategoricalFixed, UniformDose };

// The assignment law is declared by design, never estimated from data.
struct RandomizationSpec {
  TreatmentKind kind = TreatmentKind::Binary;
  LawKind law = LawKind::ConstantBernoulli;
  double p = 0.5;               // ConstantBernoulli
  Eigen::VectorXd gamma;        // LogisticBernoulli coefficients, length p
  Eigen::VectorXd arm_probs;    // CategoricalFixed p_1..p_K (control keeps the rest)
  double dose_a = 0.0, dose_b = 1.0;

  static RandomizationSpec bernoulli(double p);
  static RandomizationSpec logistic(const Eigen::VectorXd& gamma);
  static RandomizationSpec categorical(const Eigen::VectorXd& arm_probs);
  static RandomizationSpec uniform_dose(double a, double b);

  int n_arms() const { return kind == TreatmentKind::Categorical ? int(arm_probs.size()) : 1; }
  // law does not depend on x (true for everything except LogisticBernoulli)
  bool x_independent() const { return law != LawKind::LogisticBernoulli; }
};

// E(Z|x) for Binary / ContinuousDose
double mean_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& x);
// (E(Z_1|x)..E(Z_K|x)) for Categorical
Eigen::VectorXd arm_means_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& x);
// var(Z|x) for Binary / ContinuousDose
double var_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& x);
// (E(Z|x), ..., E(Z^K|x)) for ContinuousDose
Eigen::VectorXd power_moments_given_x(const RandomizationSpec& spec, const Eigen::VectorXd& x,
                                      int K);

double draw_treatment(const RandomizationSpec& spec, const Eigen::VectorXd& x, RngEngine& rng);

}  // namespace itr
