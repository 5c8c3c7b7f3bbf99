#include <cmath>

#include "doctest.h"
#include "itr/dataset.hpp"
#include "itr/errors.hpp"
#include "itr/kernel.hpp"
#include "itr/randomization.hpp"

using namespace itr;

TEST_CASE("kernel families evaluate their textbook forms") {
  CHECK(kernel_value(KernelFamily::Epanechnikov, 0.0) == doctest::Approx(0.75));
  CHECK(kernel_value(KernelFamily::Epanechnikov, 0.5) == doctest::Approx(0.75 * 0.75));
  CHECK(kernel_value(KernelFamily::Epanechnikov, 1.0001) == 0.0);
  CHECK(kernel_value(KernelFamily::Epanechnikov, -2.0) == 0.0);
  CHECK(kernel_value(KernelFamily::Gaussian, 0.0) ==
        doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
  CHECK(kernel_value(KernelFamily::Gaussian, 1.0) ==
        doctest::Approx(std::exp(-0.5) / std::sqrt(2.0 * M_PI)));
  CHECK(kernel_value(KernelFamily::Quartic, 0.0) == doctest::Approx(0.9375));
  CHECK(kernel_value(KernelFamily::Quartic, 1.5) == 0.0);
  // symmetry and nonnegativity on a small sweep
  for (double u = -2.0; u <= 2.0; u += 0.25) {
    for (auto fam :
         {KernelFamily::Epanechnikov, KernelFamily::Gaussian, KernelFamily::Quartic}) {
      CHECK(kernel_value(fam, u) == doctest::Approx(kernel_value(fam, -u)));
      CHECK(kernel_value(fam, u) >= 0.0);
    }
  }
}

TEST_CASE("scaled kernel divides by the bandwidth") {
  CHECK(scaled_kernel(KernelFamily::Epanechnikov, 0.5, 2.0) ==
        doctest::Approx(kernel_value(KernelFamily::Epanechnikov, 0.25) / 2.0));
  CHECK_THROWS_AS(scaled_kernel(KernelFamily::Gaussian, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(scaled_kernel(KernelFamily::Gaussian, 0.0, -1.0), ConfigError);
}

TEST_CASE("neighbor weights: frozen three-point example") {
  Eigen::VectorXd idx(3);
  idx << 0.0, 0.5, 2.0;
  Eigen::VectorXd w = neighbor_weights(idx, 0.0, KernelFamily::Epanechnikov, 1.0);
  // third point sits outside the window entirely
  CHECK(w[0] == doctest::Approx(0.571428571429).epsilon(1e-9));
  CHECK(w[1] == doctest::Approx(0.428571428571).epsilon(1e-9));
  CHECK(w[2] == 0.0);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("neighbor weights normalize to one across families and targets") {
  Eigen::VectorXd idx(7);
  idx << -1.2, -0.4, 0.0, 0.3, 0.9, 1.4, 2.2;
  for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian, KernelFamily::Quartic}) {
    for (double target : {-0.5, 0.0, 1.0}) {
      Eigen::VectorXd w = neighbor_weights(idx, target, fam, 0.8);
      CHECK(std::abs(w.sum() - 1.0) < 1e-12);
      CHECK(w.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("neighbor weights: empty window is an error") {
  Eigen::VectorXd idx(3);
  idx << 10.0, 11.0, 12.0;
  CHECK_THROWS_AS(neighbor_weights(idx, 0.0, KernelFamily::Epanechnikov, 1.0), NumericalError);
}

TEST_CASE("rule-of-thumb bandwidth follows c * sd * n^(-1/5)") {
  Eigen::VectorXd idx(5);
  idx << 0.1, 0.3, 0.5, 0.7, 0.9;
  double sd = std::sqrt(0.1);  // sample sd of the sequence
  double h = default_bandwidth(idx, 5, BandwidthRole::g_fit, 1.0);
  CHECK(h == doctest::Approx(sd * std::pow(5.0, -0.2)).epsilon(1e-12));
  CHECK(default_bandwidth(idx, 5, BandwidthRole::u_fit, 2.0) == doctest::Approx(2.0 * h));

  Eigen::VectorXd flat = Eigen::VectorXd::Constant(5, 1.0);
  CHECK_THROWS_AS(default_bandwidth(flat, 5, BandwidthRole::g_fit, 1.0), NumericalError);
}

TEST_CASE("bandwidth resolution prefers fixed values, then falls back") {
  Eigen::VectorXd idx(5);
  idx << 0.1, 0.3, 0.5, 0.7, 0.9;
  KernelConfig cfg;
  double rot = default_bandwidth(idx, 5, BandwidthRole::g_fit, 1.0);
  CHECK(resolve_h_g(cfg, idx) == doctest::Approx(rot));
  CHECK(resolve_h_u(cfg, idx) == doctest::Approx(rot));
  cfg.h_g = 0.4;
  CHECK(resolve_h_g(cfg, idx) == 0.4);
  CHECK(resolve_h_u(cfg, idx) == 0.4);  // follows h_g
  cfg.h_u = 0.7;
  CHECK(resolve_h_u(cfg, idx) == 0.7);
}

TEST_CASE("bandwidth rate flag") {
  CHECK(bandwidth_rates_ok(600, 0.2, 0.2));
  // giant bandwidths push n*hg^4*hu^4 out of range
  CHECK_FALSE(bandwidth_rates_ok(600, 2.0, 2.0));
  // vanishing bandwidth fails the n*min(h) leg
  CHECK_FALSE(bandwidth_rates_ok(600, 1e-3, 0.2));
  CHECK_FALSE(bandwidth_rates_ok(600, 0.2, -1.0));
}

namespace {

// transformed response is exactly linear in the index, so any bandwidth with
// full windows reconstructs it with zero leave-one-out error
Dataset linear_signal_data() {
  const long n = 12;
  Dataset d;
  d.kind = TreatmentKind::Binary;
  d.x.resize(n, 2);
  d.z.resize(n);
  d.y.resize(n);
  for (long i = 0; i < n; ++i) {
    double t = 0.1 * double(i);
    d.x(i, 0) = t;
    d.x(i, 1) = 0.0;
    d.z[i] = (i % 2 == 0) ? 1.0 : 0.0;
    // (z - 0.5) y = 0.25 * (2 + 3 t)  by construction
    double zc = d.z[i] - 0.5;
    d.y[i] = 0.25 * (2.0 + 3.0 * t) / zc;
  }
  return d;
}

}  // namespace

TEST_CASE("loo cv: exact linear signal ties every bandwidth, larger one wins") {
  Dataset d = linear_signal_data();
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, 0.0;
  double h = loo_cv_bandwidth(d, spec, beta, {0.5, 1.5}, KernelFamily::Epanechnikov);
  CHECK(h == 1.5);
}

TEST_CASE("loo cv: reports when every candidate strands a point") {
  Dataset d = linear_signal_data();
  RandomizationSpec spec = RandomizationSpec::bernoulli(0.5);
  Eigen::VectorXd beta(2);
  beta << 1.0, 0.0;
  // far smaller than the 0.1 spacing: every point is isolated
  CHECK_THROWS_AS(loo_cv_bandwidth(d, spec, beta, {1e-4, 2e-4}, KernelFamily::Epanechnikov),
                  NumericalError);
  CHECK_THROWS_AS(loo_cv_bandwidth(d, spec, beta, {}, KernelFamily::Epanechnikov), ConfigError);
}
