#pragma once
#include <Eigen/Dense>
#include <memory>
#include <string>
#include "itr/config.hpp"
#include "itr/dataset.hpp"
#include "itr/local_fit.hpp"

namespace itr {

enum class Method { M1, M2, M3, M4, ContEff, CatEff };

Method method_from_string(const std::string& s);
std::string method_name(Method m);

// (z - E(Z|x)) y / var(Z|x); binary and continuous-dose kinds
Eigen::VectorXd transform_y(const Dataset& data, const RandomizationSpec& spec,
                            double var_floor = 1e-8);

// bookkeeping from one score assembly
struct ScoreDiag {
  int skipped = 0;      // observation terms dropped by the conditioning guard
  int zero_terms = 0;   // terms annihilated by z_i == E(Z|x_i)
  bool degenerate = false;  // every term vanished
};

Eigen::VectorXd score_method1(const Dataset& data, const RandomizationSpec& spec,
                              const Eigen::VectorXd& beta, const FStar& f_star,
                              const FitConfig& config, ScoreDiag* diag = nullptr);

// g*, h* user-chosen; defaults g*=0, h*=1, with u-hat still estimated
Eigen::VectorXd score_method2(const Dataset& data, const RandomizationSpec& spec,
                              const Eigen::VectorXd& beta, const FStar& f_star,
                              const CurveFn& g_star, const CurveFn& h_star,
                              const FitConfig& config, ScoreDiag* diag = nullptr);

// g-hat, g-hat' estimated; u* user-chosen, default 0
Eigen::VectorXd score_method3(const Dataset& data, const RandomizationSpec& spec,
                              const Eigen::VectorXd& beta, const FStar& f_star,
                              const UStarFn& u_star, const FitConfig& config,
                              ScoreDiag* diag = nullptr);

// profiled weighted least-squares criterion; nonnegative
double objective_method4(const Dataset& data, const RandomizationSpec& spec,
                         const Eigen::VectorXd& beta, const FitConfig& config);

// conditionally orthonormalized treatment transforms W_1..W_K
struct WBasis {
  Eigen::MatrixXd W;    // n x K
  Eigen::MatrixXd sd;   // n x K conditional sds of the residualized powers
  Eigen::MatrixXd C;    // n x K*(K-1)/2 coefficients C_jk, column-packed j<k
  bool analytic = false;  // law independent of x: moments computed in closed form
};

WBasis build_w_basis(const Dataset& data, const RandomizationSpec& spec,
                     const Eigen::VectorXd& beta, int K, const FitConfig& config,
                     bool force_kernel_moments = false);

// efficient estimating equation for continuous-dose (power basis) and
// categorical (one-hot) treatments
Eigen::VectorXd score_efficient_multi(const Dataset& data, const RandomizationSpec& spec,
                                      const Eigen::VectorXd& beta, const FStar& f_star, int K,
                                      const FitConfig& config, ScoreDiag* diag = nullptr);

struct IndexFit {
  Eigen::VectorXd beta;  // full p vector, beta[0] == 1
  Method method = Method::M1;
  double score_norm = 0;
  int iterations = 0;
  bool converged = false;
  int K = 1;
  // kept so g-curve evaluation and downstream metrics can refit at beta-hat
  std::shared_ptr<const Dataset> data;
  RandomizationSpec spec;
  FitConfig config;
  FStar f_star;

  Eigen::VectorXd beta_L() const { return beta.tail(beta.size() - 1); }
};

IndexFit solve_index(const Dataset& data, const RandomizationSpec& spec, Method method,
                     const FitConfig& config,
                     const std::optional<Eigen::VectorXd>& init = std::nullopt, int K = 1,
                     const FStar& f_star = zero_fstar());

// fresh local fit at beta-hat' x; throws on empty neighborhood / singular fit
double predict_g(const IndexFit& fit, const Eigen::VectorXd& x);
Eigen::VectorXd predict_g_multi(const IndexFit& fit, const Eigen::VectorXd& x);

// same, by index value directly (x enters only through beta'x)
double predict_g_at(const IndexFit& fit, double t0);
Eigen::VectorXd predict_g_multi_at(const IndexFit& fit, double t0);

// least-squares initial direction: transformed response regressed on x,
// rescaled so the first coefficient is 1
Eigen::VectorXd ls_init_beta(const Dataset& data, const RandomizationSpec& spec);

// residual system in beta_L whose least-squares minimum defines the method;
// resampling refits use this with a warm start. The returned closure keeps
// references to data and spec, which must outlive it.
std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score_residuals_fn(
    const Dataset& data, const RandomizationSpec& spec, Method method, int K,
    const FStar& f_star, const FitConfig& config);

}  // namespace itr
