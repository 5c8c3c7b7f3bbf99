#pragma once
#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace itr {

struct Dataset;
struct RandomizationSpec;

enum class KernelFamily { Epanechnikov, Gaussian, Quartic };

enum class BandwidthRole { g_fit, u_fit };

// Bandwidths are optional: unset means the rule-of-thumb c*sd(index)*n^(-1/5)
// is recomputed from whatever index values are current (so trial beta values
// during root finding get a bandwidth matched to their own index scale).
struct KernelConfig {
  KernelFamily family = KernelFamily::Epanechnikov;
  std::optional<double> h_g;
  std::optional<double> h_u;  // defaults to h_g when that is set
  double rot_c = 1.0;
};

double kernel_value(KernelFamily family, double u);
double scaled_kernel(KernelFamily family, double u, double h);

// weights proportional to K_h(index_i - target), normalized to sum 1
Eigen::VectorXd neighbor_weights(const Eigen::VectorXd& index_values, double target,
                                 const KernelConfig& config);
Eigen::VectorXd neighbor_weights(const Eigen::VectorXd& index_values, double target,
                                 KernelFamily family, double h);

double default_bandwidth(const Eigen::VectorXd& index_values, long n, BandwidthRole role,
                         double c = 1.0);

// resolved bandwidths for a given index vector (fixed value if configured,
// rule-of-thumb otherwise)
double resolve_h_g(const KernelConfig& config, const Eigen::VectorXd& index_values);
double resolve_h_u(const KernelConfig& config, const Eigen::VectorXd& index_values);

// crude rate check: flags bandwidth pairs clearly outside the asymptotic
// regime (n*hg^4*hu^4 must stay small while n*min(h) grows)
bool bandwidth_rates_ok(long n, double h_g, double h_u);

// leave-one-out CV over the candidate grid, scored by the profiled local
// least-squares prediction error of the transformed response with observation
// j held out; ties toward the larger bandwidth
double loo_cv_bandwidth(const Dataset& data, const RandomizationSpec& spec,
                        const Eigen::VectorXd& beta, const std::vector<double>& candidate_grid,
                        KernelFamily family);

}  // namespace itr
