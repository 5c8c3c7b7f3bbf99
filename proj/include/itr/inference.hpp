#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include "itr/estimators.hpp"

namespace itr {

struct BootstrapResult {
  int B = 0;
  Eigen::MatrixXd beta_draws;  // B x (p-1)
  Eigen::MatrixXd ci;          // (p-1) x 2, order-statistic percentile endpoints
  double level = 0.95;
  int retried = 0;  // resamples redrawn after a failed refit
};

// nonparametric bootstrap over (x, z, y) triples, refits warm-started at the
// full-data estimate; bandwidth config is frozen at the full-data resolution
BootstrapResult bootstrap_beta(const Dataset& data, const RandomizationSpec& spec, Method method,
                               const FitConfig& config, int B, double level, std::uint64_t seed,
                               int parallelism = 0, int K = 1);

struct PermutationBand {
  Eigen::VectorXd grid;
  Eigen::VectorXd upper_quantile_curve;
  std::vector<char> flagged;  // per grid point: some permutation failed there
  int n_perm = 0;
  double level = 0.95;
};

// permutation null for g: shuffle treatment labels, redo the whole fit
// (beta re-estimated unless hold_beta), record pointwise level-quantiles
PermutationBand permutation_band_g(const Dataset& data, const RandomizationSpec& spec,
                                   const IndexFit& fit, const Eigen::VectorXd& grid, int n_perm,
                                   double level, std::uint64_t seed, bool hold_beta = false,
                                   int parallelism = 0);

// truth-known sandwich variance oracle (binary treatment)
enum class SandwichVariant { Efficient, PluginCurves, PluginU };

struct SandwichTruth {
  std::function<Eigen::VectorXd(RngEngine&)> sample_x;
  std::function<double(const Eigen::VectorXd&)> f;
  std::function<double(double)> g;
  std::function<double(double)> gprime;
  Eigen::VectorXd beta;
  double sigma = 0;
  // plug-ins consumed by the non-efficient variants
  CurveFn g_star, h_star, h_star_prime;  // PluginCurves
  UStarFn u_star;                        // PluginU
};

struct SandwichOracle {
  Eigen::MatrixXd A, B, avar;  // avar = A^-1 B A^-T
  Eigen::MatrixXd b_mc_se;     // elementwise Monte Carlo standard error of B
};

SandwichOracle sandwich_oracle_binary(const SandwichTruth& truth, const RandomizationSpec& spec,
                                      long mc_draws, const FStar& f_star, std::uint64_t seed,
                                      SandwichVariant variant = SandwichVariant::Efficient);

}  // namespace itr
