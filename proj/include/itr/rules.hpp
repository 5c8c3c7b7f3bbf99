#pragma once
#include <Eigen/Dense>
#include <functional>
#include "itr/estimators.hpp"

namespace itr {

enum class RuleKind { SignRule, ArgmaxArm, DoseVertex };

struct DecisionRule {
  RuleKind kind = RuleKind::SignRule;
  double dose_a = 0.0, dose_b = 1.0;  // DoseVertex range, a < b

  static DecisionRule for_kind(TreatmentKind kind, const RandomizationSpec& spec);
};

// Recommended treatment at x: 0/1 for SignRule (tie g=0 -> control), arm index
// 0..K for ArgmaxArm, a clamped dose for DoseVertex. Falls back local-linear ->
// local-constant -> control when the pointwise fit degenerates, so decisions
// never throw on isolated evaluation points.
double decide(const DecisionRule& rule, const IndexFit& fit, const Eigen::VectorXd& x);

// fraction of sign-correct decisions of g-hat against the true curve over the
// supplied sample
double pcd(const IndexFit& fit, const std::function<double(double)>& truth_g,
           const Eigen::VectorXd& beta_true, const Eigen::MatrixXd& sample_x);

// per-arm variant (PCD1..PCDK)
Eigen::VectorXd pcd_multi(const IndexFit& fit,
                          const std::vector<std::function<double(double)>>& truth_g,
                          const Eigen::VectorXd& beta_true, const Eigen::MatrixXd& sample_x);

// inverse-probability-weighted value of the fitted rule; Bernoulli(0.5)
// reduces to (2/n) sum y_i I[z_i = d(x_i)]. Continuous doses use a window of
// half-width dose_window_frac*(b-a) around the recommendation.
double value_function(const Dataset& data, const RandomizationSpec& spec, const IndexFit& fit);

// contingency counts, rows = real assignment, cols = recommended
Eigen::MatrixXi assignment_crosstab(const Eigen::VectorXi& real_z,
                                    const Eigen::VectorXi& recommended_z);

}  // namespace itr
