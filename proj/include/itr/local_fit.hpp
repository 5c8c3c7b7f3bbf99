#pragma once
#include <Eigen/Dense>
#include "itr/config.hpp"
#include "itr/dataset.hpp"

namespace itr {

struct LocalLinearFit {
  double alpha_c = 0;   // level g(t0)
  double alpha_1 = 0;   // slope g'(t0)
  double at = 0;        // t0 = beta'x0
  double condition = 0; // |v0*v2 - v1^2|
  double scale = 0;     // |v0*v2|, reference magnitude for conditioning checks
};

struct MultiArmLocalFit {
  Eigen::VectorXd alpha_c;  // per arm / power, length K
  Eigen::VectorXd alpha_1;
  double at = 0;
  double gram_condition = 0;  // smallest singular value of the 2K x 2K system
  double gram_scale = 0;      // largest singular value
};

// variance-weighted kernel estimate of E(X_L | beta'x), a plain ratio smoother
Eigen::VectorXd u_hat(const Dataset& data, const RandomizationSpec& spec,
                      const Eigen::VectorXd& beta, const Eigen::VectorXd& x,
                      const FitConfig& config);

LocalLinearFit local_linear_binary(const Dataset& data, const RandomizationSpec& spec,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& x0,
                                   const FStar& f_star, const FitConfig& config);

double local_constant_g(const Dataset& data, const RandomizationSpec& spec,
                        const Eigen::VectorXd& beta, const Eigen::VectorXd& x0,
                        const FStar& f_star, const FitConfig& config);

// K treatment powers (continuous dose) or K one-hot arms (categorical)
MultiArmLocalFit local_linear_multi(const Dataset& data, const RandomizationSpec& spec,
                                    const Eigen::VectorXd& beta, const Eigen::VectorXd& x0,
                                    const FStar& f_star, const FitConfig& config, int K);

// Internal fast paths working directly on precomputed per-observation arrays.
// The score assembly loops call these with the index vector computed once per
// trial beta; the public x0 interfaces above wrap them.
namespace detail {

struct BinaryProfile {
  // inputs, all length n
  const Eigen::VectorXd& t;      // beta'x_i
  const Eigen::VectorXd& z;
  const Eigen::VectorXd& zc;     // z_i - E(Z|x_i)
  const Eigen::VectorXd& resid;  // y_i - f*(x_i)
};

LocalLinearFit ll_binary_at(const BinaryProfile& in, double t0, KernelFamily family, double h,
                            double sing_floor);

double lc_binary_at(const BinaryProfile& in, double t0, KernelFamily family, double h,
                    double floor_val);

struct MultiProfile {
  const Eigen::VectorXd& t;
  const Eigen::MatrixXd& P;   // n x K treatment powers / one-hot arms
  const Eigen::MatrixXd& C;   // centered P
  const Eigen::VectorXd& resid;
};

MultiArmLocalFit ll_multi_at(const MultiProfile& in, double t0, KernelFamily family, double h,
                             double sing_floor);

// Fill P (treatment powers / one-hot arms / raw z for binary) and centered C.
void build_treatment_design(const Dataset& data, const RandomizationSpec& spec, int K,
                            Eigen::MatrixXd& P, Eigen::MatrixXd& C);

}  // namespace detail

}  // namespace itr
