#include "itr/kernel.hpp"

#include <cmath>
#include <sstream>

#include "itr/dataset.hpp"
#include "itr/errors.hpp"
#include "itr/randomization.hpp"

namespace itr {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}

double kernel_value(KernelFamily family, double u) {
  switch (family) {
    case KernelFamily::Epanechnikov:
      return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelFamily::Gaussian:
      return kInvSqrt2Pi * std::exp(-0.5 * u * u);
    case KernelFamily::Quartic: {
      if (std::abs(u) > 1.0) return 0.0;
      double s = 1.0 - u * u;
      return 0.9375 * s * s;
    }
  }
  return 0.0;
}

double scaled_kernel(KernelFamily family, double u, double h) {
  if (!(h > 0.0)) throw ConfigError("scaled_kernel: bandwidth must be positive");
  return kernel_value(family, u / h) / h;
}

Eigen::VectorXd neighbor_weights(const Eigen::VectorXd& index_values, double target,
                                 KernelFamily family, double h) {
  if (!(h > 0.0)) throw ConfigError("neighbor_weights: bandwidth must be positive");
  const long n = index_values.size();
  Eigen::VectorXd w(n);
  for (long i = 0; i < n; ++i) w[i] = kernel_value(family, (index_values[i] - target) / h);
  double s = w.sum();
  if (!(s > 0.0)) {
    std::ostringstream msg;
    msg << "neighbor_weights: empty neighborhood at target " << target << " (h=" << h << ")";
    throw NumericalError(msg.str());
  }
  return w / s;
}

Eigen::VectorXd neighbor_weights(const Eigen::VectorXd& index_values, double target,
                                 const KernelConfig& config) {
  return neighbor_weights(index_values, target, config.family,
                          resolve_h_g(config, index_values));
}

double default_bandwidth(const Eigen::VectorXd& index_values, long n, BandwidthRole /*role*/,
                         double c) {
  if (n < 2) throw ConfigError("default_bandwidth: need n >= 2");
  const long m = index_values.size();
  double mean = index_values.mean();
  double ss = (index_values.array() - mean).square().sum();
  double sd = m > 1 ? std::sqrt(ss / double(m - 1)) : 0.0;
  if (!(sd > 0.0)) throw NumericalError("default_bandwidth: index values have zero dispersion");
  // same n^(-1/5) rate for both roles; the joint C5 constraint is checked elsewhere
  return c * sd * std::pow(double(n), -0.2);
}

double resolve_h_g(const KernelConfig& config, const Eigen::VectorXd& index_values) {
  if (config.h_g) return *config.h_g;
  return default_bandwidth(index_values, index_values.size(), BandwidthRole::g_fit,
                           config.rot_c);
}

double resolve_h_u(const KernelConfig& config, const Eigen::VectorXd& index_values) {
  if (config.h_u) return *config.h_u;
  if (config.h_g) return *config.h_g;
  return default_bandwidth(index_values, index_values.size(), BandwidthRole::u_fit,
                           config.rot_c);
}

bool bandwidth_rates_ok(long n, double h_g, double h_u) {
  if (!(h_g > 0.0) || !(h_u > 0.0)) return false;
  double prod = double(n) * std::pow(h_g, 4) * std::pow(h_u, 4);  // n hg^4 hu^4 -> 0
  double nh = double(n) * std::min(h_g, h_u);                     // n h -> inf
  return prod <= 1.0 && nh >= 10.0;
}

double loo_cv_bandwidth(const Dataset& data, const RandomizationSpec& spec,
                        const Eigen::VectorXd& beta, const std::vector<double>& candidate_grid,
                        KernelFamily family) {
  if (candidate_grid.empty()) throw ConfigError("loo_cv_bandwidth: empty candidate grid");
  const long n = data.n();
  if (n < 3) throw ConfigError("loo_cv_bandwidth: need n >= 3");

  Eigen::VectorXd t = data.x * beta;
  Eigen::VectorXd u(n), v(n);  // (z - E)y and var(Z|x)
  for (long i = 0; i < n; ++i) {
    double e = mean_given_x(spec, data.x.row(i).transpose());
    v[i] = var_given_x(spec, data.x.row(i).transpose());
    u[i] = (data.z[i] - e) * data.y[i];
  }

  double best_h = -1.0, best_err = 0.0;
  std::vector<double> failed;
  for (double h : candidate_grid) {
    if (!(h > 0.0)) throw ConfigError("loo_cv_bandwidth: nonpositive candidate bandwidth");
    double total = 0.0;
    bool ok = true;
    for (long j = 0; j < n && ok; ++j) {
      // weighted fit of u on var*(a + b*d) without observation j, predict at d=0
      double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0, wsum = 0;
      for (long i = 0; i < n; ++i) {
        if (i == j) continue;
        double w = kernel_value(family, (t[i] - t[j]) / h);
        if (w == 0.0) continue;
        double d = t[i] - t[j], vv = v[i];
        a11 += w * vv * vv;
        a12 += w * vv * vv * d;
        a22 += w * vv * vv * d * d;
        b1 += w * vv * u[i];
        b2 += w * vv * d * u[i];
        wsum += w;
      }
      if (wsum == 0.0) {
        ok = false;  // isolated point under this bandwidth
        break;
      }
      double det = a11 * a22 - a12 * a12;
      double pred;
      if (std::abs(det) > 1e-12 * (1.0 + std::abs(a11 * a22))) {
        pred = v[j] * (a22 * b1 - a12 * b2) / det;
      } else if (a11 > 0.0) {
        pred = v[j] * b1 / a11;  // constant-only backup for thin windows
      } else {
        ok = false;
        break;
      }
      double r = u[j] - pred;
      total += r * r;
    }
    if (!ok) {
      failed.push_back(h);
      continue;
    }
    // ties (within rounding) go to the larger bandwidth
    if (best_h < 0.0 || total <= best_err + 1e-12 * (1.0 + best_err)) {
      if (best_h < 0.0 || total < best_err - 1e-12 * (1.0 + best_err) || h > best_h) {
        best_h = h;
        best_err = total;
      }
    }
  }
  if (best_h < 0.0) {
    std::ostringstream msg;
    msg << "loo_cv_bandwidth: every candidate leaves some point without neighbors:";
    for (double h : failed) msg << ' ' << h;
    throw NumericalError(msg.str());
  }
  return best_h;
}

}  // namespace itr
