#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>
#include "itr/dataset.hpp"
#include "itr/estimators.hpp"

namespace itr {

enum class ScenarioId { S1, S2, S3, S4, S5, S6 };

ScenarioId scenario_from_string(const std::string& s);
std::string scenario_name(ScenarioId id);

struct Scenario {
  ScenarioId id = ScenarioId::S1;
  long n = 600;
  std::uint64_t seed = 1;
};

// the data-generating truth behind a scenario id
struct ScenarioTruth {
  Eigen::VectorXd beta;  // beta[0] = 1
  double sigma = 0.3;
  RandomizationSpec spec;
  TreatmentKind kind = TreatmentKind::Binary;
  int K = 1;
  std::function<double(const Eigen::VectorXd&)> f;
  std::vector<std::function<double(double)>> g;  // one curve, or g_1..g_K
  std::function<Eigen::VectorXd(RngEngine&)> sample_x;
  long p = 2;
};

const ScenarioTruth& scenario_truth(ScenarioId id);

Dataset generate(const Scenario& scenario);

struct ReplicationOptions {
  bool with_cp = false;  // per-replicate bootstrap (expensive)
  int cp_B = 200;
  double cp_level = 0.95;
  bool with_metrics = true;  // PCD / VF per replicate
  int parallelism = 0;       // 0: library default
};

struct ReplicationReport {
  std::string scenario, method;
  long n = 0;
  int reps = 0, failures = 0;
  Eigen::VectorXd bias, sd, se, cp;      // per free coordinate; se/cp empty unless with_cp
  Eigen::VectorXd pcd_mean, pcd_sd;      // per arm (length 1 for binary)
  double vf_mean = 0, vf_sd = 0;
  bool sd_defined = true;  // false when reps == 1
  double wall_sec = 0;
  Eigen::MatrixXd beta_errors;  // reps x (p-1), per-replicate estimation errors
};

ReplicationReport run_replications(const Scenario& scenario, Method method, int reps,
                                   const FitConfig& config, const ReplicationOptions& opts = {});

// Monte Carlo value of the oracle rule under the scenario truth
double true_value_function(ScenarioId id, long mc_draws, std::uint64_t seed);

// CSV or JSON rendering of a report with the usual table headers
std::string emit_tables(const ReplicationReport& report, const std::string& format);
ReplicationReport report_from_json(const std::string& text);

}  // namespace itr
