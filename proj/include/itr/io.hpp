#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>
#include "itr/dataset.hpp"
#include "itr/estimators.hpp"
#include "itr/simlab.hpp"

namespace itr {

struct CsvSchema {
  std::vector<std::string> x_cols;  // header names
  std::string z_col, y_col;
  TreatmentKind kind = TreatmentKind::Binary;
  int n_arms = 1;       // categorical: codes 0..n_arms allowed
  double dose_a = 0.0, dose_b = 1.0;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);

struct RunConfig {
  std::string command;  // fit | simulate | bootstrap | permtest | curve
  std::optional<std::string> data_path;
  std::optional<ScenarioId> scenario;
  Method method = Method::M1;
  FitConfig fit;
  RandomizationSpec rand_spec;
  CsvSchema schema;
  int K = 1;
  int B = 0;       // bootstrap draws
  int n_perm = 0;
  int reps = 100;
  long n = 600;    // scenario sample size
  std::uint64_t seed = 1;
  bool seed_set = false;
  double level = 0.95;
  std::string out_path;  // empty: stdout
  std::string format = "json";
  bool with_cp = false;
};

// executes one CLI command; returns the process exit code (0 success; errors
// are thrown and mapped by the caller)
int run(const RunConfig& config);

}  // namespace itr
