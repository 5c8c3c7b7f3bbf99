#pragma once
#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>
#include "itr/kernel.hpp"

namespace itr {

using FStar = std::function<double(const Eigen::VectorXd&)>;         // working f*(x)
using CurveFn = std::function<double(double)>;                       // g*(t), h*(t)
using UStarFn = std::function<Eigen::VectorXd(double)>;              // u*(t)

inline FStar zero_fstar() {
  return [](const Eigen::VectorXd&) { return 0.0; };
}

struct FitConfig {
  KernelConfig kernel;

  // pointwise fits error below this relative determinant floor
  double sing_floor = 1e-10;
  // score assembly drops observation terms whose profiled fit is this badly
  // conditioned; they pass the floor above but their slope is numeric junk
  double score_guard = 1e-4;
  bool strict_profiling = false;  // propagate every pointwise failure instead
  double max_skip_frac = 0.10;    // more skipped terms than this is an error

  double var_floor = 1e-8;      // minimum var(Z|x) accepted
  double weight_floor = 0.01;   // minimum recommendation probability in VF
  double dose_window_frac = 0.10;  // VF dose window as a fraction of (b-a)

  // outer solver
  double solver_tol = 1e-6;  // scaled by 1 + norm of the initial score
  int max_iter = 100;
  double fd_step = 1e-5;     // times (1 + |coordinate|)
  std::optional<Eigen::VectorXd> user_init;  // beta_L start, optional

  bool cv_bandwidth = false;          // pick h_g by leave-one-out CV at the init
  std::vector<double> cv_grid;        // empty: 5 log-spaced multiples of the rule of thumb

  // resampling refits reuse the full-data bandwidths unless this is set
  bool boot_refresh_bandwidths = false;
};

}  // namespace itr
