#pragma once
#include <Eigen/Dense>
#include <functional>

namespace itr {

// Derivative-free Levenberg-Marquardt on a residual vector, forward-difference
// Jacobian. Small and self-contained; the residuals here are estimating
// equations evaluated through profiled kernel fits, so autodiff frameworks buy
// nothing.
struct LMOptions {
  double tol = 1e-6;       // absolute target for ||F||
  int max_iter = 100;
  double fd_step = 1e-5;   // times (1 + |x_k|)
  double lambda0 = 1e-3;
  double step_floor = 1e-12;
};

struct LMResult {
  Eigen::VectorXd x;
  double fnorm = 0;
  int iterations = 0;
  bool converged = false;
};

LMResult lm_least_squares(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                          const Eigen::VectorXd& x0, const LMOptions& opt);

}  // namespace itr
