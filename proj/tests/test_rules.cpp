#include <cmath>
#include <memory>

#include "doctest.h"
#include "itr/errors.hpp"
#include "itr/rules.hpp"

using namespace itr;

namespace {

// Assemble an IndexFit by hand around a training set; the rules only ever use
// the stored data, spec, config and beta, so no solver run is needed.
IndexFit fabricate(Dataset data, const RandomizationSpec& spec, const Eigen::VectorXd& beta,
                   const FitConfig& cfg, int K = 1) {
  IndexFit fit;
  fit.beta = beta;
  fit.K = K;
  fit.data = std::make_shared<Dataset>(std::move(data));
  fit.spec = spec;
  fit.config = cfg;
  fit.f_star = zero_fstar();
  fit.converged = true;
  return fit;
}

FitConfig epan_fixed(double h) {
  FitConfig c;
  c.kernel.family = KernelFamily::Epanechnikov;
  c.kernel.h_g = h;
  c.kernel.h_u = h;
  return c;
}

// four well-separated index clusters with prescribed constant treatment
// effects; a narrow bandwidth keeps each pointwise fit inside its own cluster
Dataset step_training(const std::vector<double>& centers, const std::vector<double>& effects) {
  int m = int(centers.size());
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(4 * m, 2);
  d.z.resize(4 * m);
  d.y.resize(4 * m);
  for (int c = 0; c < m; ++c)
    for (int j = 0; j < 4; ++j) {
      int i = 4 * c + j;
      double t = centers[size_t(c)] - 0.09 + 0.06 * j;
      d.x(i, 0) = t;
      d.x(i, 1) = 0.0;  // index = x1 under beta = (1, -1)
      d.z[i] = (j % 2 == 0) ? 1.0 : 0.0;
      d.y[i] = d.z[i] * effects[size_t(c)];
    }
  return d;
}

}  // namespace

TEST_CASE("rule kinds follow the treatment kind") {
  RandomizationSpec dose = RandomizationSpec::uniform_dose(1.0, 4.0);
  DecisionRule r = DecisionRule::for_kind(TreatmentKind::ContinuousDose, dose);
  CHECK(r.kind == RuleKind::DoseVertex);
  CHECK(r.dose_a == 1.0);
  CHECK(r.dose_b == 4.0);
  RandomizationSpec bern = RandomizationSpec::bernoulli(0.5);
  CHECK(DecisionRule::for_kind(TreatmentKind::Binary, bern).kind == RuleKind::SignRule);
}

TEST_CASE("sign rule and value function on a planted step design") {
  // evaluation rows and their index values under beta = (1, -1):
  // 0.3, -0.9, 1.2, 0.0; the training clusters put positive effects at the
  // first two and nonpositive effects at the last two
  Dataset train = step_training({0.3, -0.9, 1.2, 0.0}, {1.0, 1.0, -1.0, -1.0});
  Eigen::VectorXd gamma(2);
  gamma << 0.3, -0.2;
  RandomizationSpec spec = RandomizationSpec::logistic(gamma);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  // bandwidth 0.15 keeps the 0.0 and 0.3 clusters out of each other's windows
  IndexFit fit = fabricate(train, spec, beta, epan_fixed(0.15));

  Dataset eval;
  eval.kind = TreatmentKind::Binary;
  eval.x.resize(4, 2);
  eval.x << 0.5, 0.2, -0.3, 0.6, 0.8, -0.4, 0.1, 0.1;
  eval.z.resize(4);
  eval.z << 1, 0, 1, 0;
  eval.y.resize(4);
  eval.y << 1.0, 0.5, -0.2, 0.3;

  DecisionRule rule = DecisionRule::for_kind(TreatmentKind::Binary, spec);
  int expected[4] = {1, 1, 0, 0};
  for (int i = 0; i < 4; ++i)
    CHECK(decide(rule, fit, eval.x.row(i).transpose()) == double(expected[i]));

  // inverse-probability-weighted value of those decisions under the logistic law
  CHECK(value_function(eval, spec, fit) == doctest::Approx(0.624712296355445).epsilon(1e-9));

  // against an always-treat truth, half the decisions are correct
  auto always = [](double) { return 1.0; };
  CHECK(pcd(fit, always, beta, eval.x) == doctest::Approx(0.5));
}

TEST_CASE("noiseless linear effect gives perfect sign classification") {
  const int n = 40;
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(n, 2);
  d.z.resize(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = -1.0 + 2.0 * double(i) / double(n - 1);
    d.x(i, 0) = t;
    d.x(i, 1) = 0.3 * t;
    d.z[i] = (i % 2 == 0) ? 1.0 : 0.0;
    double idx = t - 0.3 * t;
    d.y[i] = d.z[i] * 2.0 * idx;
  }
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  IndexFit fit = fabricate(d, spec, beta, epan_fixed(0.5));
  auto g_true = [](double t) { return 2.0 * t; };
  CHECK(pcd(fit, g_true, beta, fit.data->x) == doctest::Approx(1.0));
}

TEST_CASE("dose vertex rule: interior maximum, endpoints, and fallback") {
  // noiseless quadratic-in-dose response with constant coefficients; the local
  // fit recovers (g1, g2) exactly, so the recommended dose is deterministic
  auto make_dose = [](double g1, double g2) {
    Dataset d;
    d.kind = TreatmentKind::ContinuousDose;
    const int n = 16;
    d.x.resize(n, 2);
    d.z.resize(n);
    d.y.resize(n);
    double zs[4] = {0.2, 0.4, 0.6, 0.8};
    for (int i = 0; i < n; ++i) {
      double t = -0.15 + 0.1 * (i % 4);
      d.x(i, 0) = t;
      d.x(i, 1) = 0.0;
      d.z[i] = zs[i / 4];
      d.y[i] = d.z[i] * g1 + d.z[i] * d.z[i] * g2;
    }
    return d;
  };
  RandomizationSpec spec = RandomizationSpec::uniform_dose(0.0, 1.0);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  DecisionRule rule = DecisionRule::for_kind(TreatmentKind::ContinuousDose, spec);
  Eigen::VectorXd x0(2);
  x0 << 0.05, 0.0;

  // concave: vertex at -g1 / (2 g2)
  IndexFit concave = fabricate(make_dose(1.0, -1.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, concave, x0) == doctest::Approx(0.5).epsilon(1e-8));

  // monotone increasing: top of the range
  IndexFit up = fabricate(make_dose(1.0, 0.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, up, x0) == doctest::Approx(1.0));

  // monotone decreasing: bottom of the range
  IndexFit down = fabricate(make_dose(-1.0, 0.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, down, x0) == doctest::Approx(0.0));

  // vertex outside the range clamps to the near endpoint
  IndexFit clamped = fabricate(make_dose(3.0, -1.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, clamped, x0) == doctest::Approx(1.0));

  // degenerate training data (single dose, single index value): both local
  // systems are singular, and the rule falls back to the lowest dose
  Dataset degen;
  degen.kind = TreatmentKind::ContinuousDose;
  degen.x = Eigen::MatrixXd::Zero(6, 2);
  degen.z = Eigen::VectorXd::Constant(6, 0.5);
  degen.y = Eigen::VectorXd::Constant(6, 1.0);
  IndexFit broken = fabricate(degen, spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, broken, x0) == 0.0);
}

TEST_CASE("argmax arm rule with strict-improvement ties") {
  auto make_cat = [](double g1, double g2) {
    Dataset d;
    d.kind = TreatmentKind::Categorical;
    const int n = 18;
    d.x.resize(n, 2);
    d.z.resize(n);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
      double t = -0.2 + 0.05 * (i % 6);
      d.x(i, 0) = t;
      d.x(i, 1) = 0.0;
      int arm = i % 3;
      d.z[i] = arm;
      d.y[i] = (arm == 1) ? g1 : (arm == 2 ? g2 : 0.0);
    }
    return d;
  };
  Eigen::VectorXd pr(2);
  pr << 0.4, 0.2;
  RandomizationSpec spec = RandomizationSpec::categorical(pr);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  DecisionRule rule = DecisionRule::for_kind(TreatmentKind::Categorical, spec);
  Eigen::VectorXd x0(2);
  x0 << 0.0, 0.0;

  IndexFit best2 = fabricate(make_cat(1.0, 2.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, best2, x0) == 2.0);

  IndexFit none = fabricate(make_cat(-1.0, -2.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, none, x0) == 0.0);

  // an exactly-zero effect is not an improvement over control
  IndexFit zero = fabricate(make_cat(0.0, -1.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, zero, x0) == 0.0);

  // equal positive effects keep the lowest arm
  IndexFit tie = fabricate(make_cat(2.0, 2.0), spec, beta, epan_fixed(1.0), 2);
  CHECK(decide(rule, tie, x0) == 1.0);
}

TEST_CASE("per-arm sign classification on a planted categorical design") {
  // arm 1 helps, arm 2 harms, uniformly in the index
  Dataset d;
  d.kind = TreatmentKind::Categorical;
  const int n = 18;
  d.x.resize(n, 2);
  d.z.resize(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = -0.2 + 0.05 * (i % 6);
    d.x(i, 0) = t;
    d.x(i, 1) = 0.0;
    int arm = i % 3;
    d.z[i] = arm;
    d.y[i] = (arm == 1) ? 0.8 : (arm == 2 ? -0.6 : 0.0);
  }
  Eigen::VectorXd pr(2);
  pr << 0.4, 0.2;
  RandomizationSpec spec = RandomizationSpec::categorical(pr);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  IndexFit fit = fabricate(d, spec, beta, epan_fixed(1.0), 2);
  std::vector<std::function<double(double)>> truth = {
      [](double) { return 1.0; },   // arm 1 truly positive
      [](double) { return 1.0; }};  // arm 2 truly positive, but estimated negative
  Eigen::VectorXd p = pcd_multi(fit, truth, beta, fit.data->x);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(0.0));
}

TEST_CASE("recommendation probabilities below the floor are an error") {
  Dataset train = step_training({0.0}, {-1.0});  // always recommends control
  Eigen::VectorXd gamma(2);
  gamma << 10.0, 0.0;  // e(x) near 1 when x1 = 1
  RandomizationSpec spec = RandomizationSpec::logistic(gamma);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  IndexFit fit = fabricate(train, spec, beta, epan_fixed(0.3));

  Dataset eval;
  eval.kind = TreatmentKind::Binary;
  eval.x.resize(1, 2);
  eval.x << 1.0, 1.0;  // index 0 -> control, but P(Z=0 | x) = 4.5e-5
  eval.z.resize(1);
  eval.z << 0;
  eval.y.resize(1);
  eval.y << 1.0;
  CHECK_THROWS_AS(value_function(eval, spec, fit), NumericalError);
}

TEST_CASE("assignment crosstab counts and input checks") {
  // synthetic two-arm table with the 153 / 166 row split
  Eigen::VectorXi real(319), rec(319);
  int k = 0;
  for (int i = 0; i < 80; ++i, ++k) { real[k] = 0; rec[k] = 0; }
  for (int i = 0; i < 73; ++i, ++k) { real[k] = 0; rec[k] = 1; }
  for (int i = 0; i < 106; ++i, ++k) { real[k] = 1; rec[k] = 0; }
  for (int i = 0; i < 60; ++i, ++k) { real[k] = 1; rec[k] = 1; }
  Eigen::MatrixXi tab = assignment_crosstab(real, rec);
  REQUIRE(tab.rows() == 2);
  CHECK(tab(0, 0) == 80);
  CHECK(tab(0, 1) == 73);
  CHECK(tab(1, 0) == 106);
  CHECK(tab(1, 1) == 60);
  CHECK(tab.row(0).sum() == 153);
  CHECK(tab.row(1).sum() == 166);
  CHECK(tab.sum() == 319);

  Eigen::VectorXi shorter(3);
  shorter << 0, 1, 0;
  CHECK_THROWS_AS(assignment_crosstab(real, shorter), DataError);
  Eigen::VectorXi neg(3), ok3(3);
  neg << 0, -1, 1;
  ok3 << 0, 1, 1;
  CHECK_THROWS_AS(assignment_crosstab(neg, ok3), DataError);
  Eigen::VectorXi empty;
  CHECK_THROWS_AS(assignment_crosstab(empty, empty), DataError);
}
