#include <cmath>

#include "doctest.h"
#include "itr/errors.hpp"
#include "itr/local_fit.hpp"

using namespace itr;

namespace {

Dataset four_point() {
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(4, 2);
  d.x << 0.3, 0.1, 0.5, 0.6, 0.1, 0.4, 0.9, 0.2;
  d.z.resize(4);
  d.z << 1, 0, 1, 0;
  d.y.resize(4);
  d.y << 0.8, -0.2, 0.3, 0.5;
  return d;
}

FitConfig epan_fixed(double h) {
  FitConfig c;
  c.kernel.family = KernelFamily::Epanechnikov;
  c.kernel.h_g = h;
  c.kernel.h_u = h;
  return c;
}

}  // namespace

TEST_CASE("u_hat matches hand-computed variance-weighted average") {
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(3, 2);
  d.x << 0.1, 0.2, 0.5, -0.1, -0.3, 0.7;
  d.z.resize(3);
  d.z << 1, 0, 1;
  d.y.resize(3);
  d.y << 0.0, 0.0, 0.0;  // y plays no role here
  Eigen::VectorXd gamma(2);
  gamma << 1.0, -0.5;
  RandomizationSpec spec = RandomizationSpec::logistic(gamma);
  Eigen::VectorXd beta(2);
  beta << 1.0, 0.5;
  Eigen::VectorXd x0(2);
  x0 << 0.2, 0.4;
  FitConfig cfg = epan_fixed(0.8);
  Eigen::VectorXd u = u_hat(d, spec, beta, x0, cfg);
  REQUIRE(u.size() == 1);
  CHECK(u[0] == doctest::Approx(0.233622458645).epsilon(1e-9));
}

TEST_CASE("u_hat rejects an empty neighborhood") {
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(2, 2);
  d.x << 0.0, 0.0, 0.1, 0.0;
  d.z.resize(2);
  d.z << 1, 0;
  d.y.resize(2);
  d.y << 0.0, 0.0;
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, 0.0;
  Eigen::VectorXd x0(2);
  x0 << 25.0, 0.0;  // far outside any compact kernel window
  FitConfig cfg = epan_fixed(0.5);
  CHECK_THROWS_AS(u_hat(d, spec, beta, x0, cfg), NumericalError);
}

TEST_CASE("binary local linear fit reproduces frozen moments") {
  Dataset d = four_point();
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  Eigen::VectorXd x0 = d.x.row(0).transpose();
  FitConfig cfg = epan_fixed(1.0);
  LocalLinearFit fit = local_linear_binary(d, spec, beta, x0, zero_fstar(), cfg);

  // raw Epanechnikov weights w = 0.75 (1 - d^2) at d in {0, -0.3, -0.5, 0.5};
  // only the two treated rows hit the v-moments, so everything is a finite
  // binary decimal
  const double v0 = 0.65625;
  const double v1 = -0.140625;
  const double v2 = 0.0703125;
  const double det = 0.0263671875;
  CHECK(fit.at == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(fit.condition == doctest::Approx(det).epsilon(1e-9));
  CHECK(fit.scale == doctest::Approx(std::abs(v0 * v2)).epsilon(1e-9));
  CHECK(fit.alpha_c == doctest::Approx(0.1228).epsilon(5e-4));
  CHECK(fit.alpha_1 == doctest::Approx(-1.6456).epsilon(5e-4));
  // det consistency of the frozen moments themselves
  CHECK(v0 * v2 - v1 * v1 == doctest::Approx(det).epsilon(1e-12));
}

TEST_CASE("local constant estimate matches frozen ratio") {
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(3, 2);
  d.x << 0.2, 0.5, 0.4, 0.1, 0.7, 0.3;
  d.z.resize(3);
  d.z << 1, 0, 1;
  d.y.resize(3);
  d.y << 1.2, 0.4, -0.5;
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  Eigen::VectorXd x0 = d.x.row(1).transpose();
  FitConfig cfg = epan_fixed(1.0);
  double g = local_constant_g(d, spec, beta, x0, zero_fstar(), cfg);
  CHECK(g == doctest::Approx(-0.077914110429448).epsilon(1e-9));
}

TEST_CASE("duplicating every observation leaves the fit unchanged") {
  Dataset d = four_point();
  Dataset dd;
  dd.kind = d.kind;
  dd.x.resize(8, 2);
  dd.z.resize(8);
  dd.y.resize(8);
  for (int i = 0; i < 4; ++i) {
    dd.x.row(2 * i) = d.x.row(i);
    dd.x.row(2 * i + 1) = d.x.row(i);
    dd.z[2 * i] = dd.z[2 * i + 1] = d.z[i];
    dd.y[2 * i] = dd.y[2 * i + 1] = d.y[i];
  }
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  Eigen::VectorXd x0 = d.x.row(0).transpose();
  FitConfig cfg = epan_fixed(1.0);
  LocalLinearFit a = local_linear_binary(d, spec, beta, x0, zero_fstar(), cfg);
  LocalLinearFit b = local_linear_binary(dd, spec, beta, x0, zero_fstar(), cfg);
  CHECK(a.alpha_c == doctest::Approx(b.alpha_c).epsilon(1e-12));
  CHECK(a.alpha_1 == doctest::Approx(b.alpha_1).epsilon(1e-12));
}

TEST_CASE("noiseless linear signal is recovered exactly") {
  // y = z * (1.5 - 0.8 t) with f identically zero: the profiled local linear
  // system is solved exactly at every target, so level and slope come back to
  // machine precision regardless of bandwidth.
  const int n = 15;
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(n, 2);
  d.z.resize(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = -0.7 + 0.1 * i;
    d.x(i, 0) = t;
    d.x(i, 1) = 0.5 * t;  // keeps the index linear in row number
    d.z[i] = (i % 2 == 0) ? 1.0 : 0.0;
    double idx = t - 0.5 * t;  // beta = (1, -1)
    d.y[i] = d.z[i] * (1.5 - 0.8 * idx);
  }
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  FitConfig cfg = epan_fixed(0.6);
  for (int i = 0; i < n; i += 3) {
    Eigen::VectorXd x0 = d.x.row(i).transpose();
    double t0 = beta.dot(x0);
    LocalLinearFit fit = local_linear_binary(d, spec, beta, x0, zero_fstar(), cfg);
    CHECK(fit.alpha_c == doctest::Approx(1.5 - 0.8 * t0).epsilon(1e-10));
    CHECK(fit.alpha_1 == doctest::Approx(-0.8).epsilon(1e-9));
  }
}

TEST_CASE("coincident index values trip the determinant floor") {
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(4, 2);
  d.x << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  d.z.resize(4);
  d.z << 1, 0, 1, 0;
  d.y.resize(4);
  d.y << 1.0, 0.2, 0.4, 0.6;
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  Eigen::VectorXd x0 = d.x.row(0).transpose();
  FitConfig cfg = epan_fixed(1.0);
  CHECK_THROWS_AS(local_linear_binary(d, spec, beta, x0, zero_fstar(), cfg), NumericalError);
}

TEST_CASE("multi-arm fit with one binary arm collapses to the scalar fit") {
  Dataset d = four_point();
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  Eigen::VectorXd x0 = d.x.row(2).transpose();
  FitConfig cfg = epan_fixed(1.2);
  LocalLinearFit scalar = local_linear_binary(d, spec, beta, x0, zero_fstar(), cfg);
  MultiArmLocalFit multi = local_linear_multi(d, spec, beta, x0, zero_fstar(), cfg, 1);
  REQUIRE(multi.alpha_c.size() == 1);
  CHECK(multi.alpha_c[0] == doctest::Approx(scalar.alpha_c).epsilon(1e-10));
  CHECK(multi.alpha_1[0] == doctest::Approx(scalar.alpha_1).epsilon(1e-10));
}

TEST_CASE("treatment design matrices follow the law") {
  // dose powers
  Dataset d;
  d.kind = TreatmentKind::ContinuousDose;
  d.x.resize(2, 2);
  d.x << 0.1, 0.2, 0.3, 0.4;
  d.z.resize(2);
  d.z << 0.25, 0.75;
  d.y.resize(2);
  d.y << 0.0, 0.0;
  RandomizationSpec dose = RandomizationSpec::uniform_dose(0.0, 1.0);
  Eigen::MatrixXd P, C;
  detail::build_treatment_design(d, dose, 2, P, C);
  CHECK(P(0, 0) == doctest::Approx(0.25));
  CHECK(P(0, 1) == doctest::Approx(0.0625));
  CHECK(P(1, 1) == doctest::Approx(0.5625));
  CHECK(C(0, 0) == doctest::Approx(0.25 - 0.5));
  CHECK(C(0, 1) == doctest::Approx(0.0625 - 1.0 / 3.0));

  // categorical one-hot
  Dataset c;
  c.kind = TreatmentKind::Categorical;
  c.x = d.x;
  c.z.resize(2);
  c.z << 0, 2;
  c.y = d.y;
  Eigen::VectorXd pr(2);
  pr << 0.4, 0.2;
  RandomizationSpec cat = RandomizationSpec::categorical(pr);
  detail::build_treatment_design(c, cat, 2, P, C);
  CHECK(P(0, 0) == 0.0);
  CHECK(P(0, 1) == 0.0);
  CHECK(P(1, 1) == 1.0);
  CHECK(C(1, 0) == doctest::Approx(-0.4));
  CHECK(C(1, 1) == doctest::Approx(0.8));
  CHECK_THROWS_AS(detail::build_treatment_design(c, cat, 3, P, C), ConfigError);
}
