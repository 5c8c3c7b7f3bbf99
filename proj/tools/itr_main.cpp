#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "itr/errors.hpp"
#include "itr/io.hpp"

namespace {

std::vector<double> parse_doubles(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(cell, &pos));
      if (pos != cell.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw itr::ConfigError(flag + ": cannot parse '" + cell + "' as a number");
    }
  }
  if (out.empty()) throw itr::ConfigError(flag + ": empty list");
  return out;
}

std::vector<std::string> parse_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.erase(0, 1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.pop_back();
    if (!cell.empty()) out.push_back(cell);
  }
  return out;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  Eigen::VectorXd out(long(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[long(i)] = v[i];
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"itr: single-index treatment rules for randomized experiments"};
  app.require_subcommand(1);

  itr::RunConfig rc;
  std::string data_path, scenario_str, method_str, kernel_str = "epan", fstar_str = "zero";
  std::string rand_str = "bern", xcols_str, gamma_str, probs_str, dose_str, init_str;
  double hg = 0, hu = 0, rand_p = 0.5;
  bool cv = false, cp = false;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--data", data_path, "csv file with covariates, treatment and outcome");
    c->add_option("--scenario", scenario_str, "built-in design s1..s6")
        ->check(CLI::IsMember({"s1", "s2", "s3", "s4", "s5", "s6"}));
    c->add_option("--method", method_str, "m1|m2|m3|m4|cont|cat (default m1, or by scenario)");
    c->add_option("--kernel", kernel_str)->check(CLI::IsMember({"epan", "gauss", "quartic"}));
    c->add_option("--hg", hg, "fixed curve-fit bandwidth (default: rule of thumb)");
    c->add_option("--hu", hu, "fixed projection bandwidth (default: follows --hg)");
    c->add_flag("--cv-bandwidth", cv, "pick the curve bandwidth by leave-one-out CV");
    c->add_option("--fstar", fstar_str, "working mean model (only 'zero' is built in)")
        ->check(CLI::IsMember({"zero"}));
    c->add_option("--seed", rc.seed)->each([&](const std::string&) { rc.seed_set = true; });
    c->add_option("--out", rc.out_path, "output path (default stdout)");
    c->add_option("--format", rc.format)->check(CLI::IsMember({"json", "csv"}));
    c->add_option("--level", rc.level, "confidence / band level");
    c->add_option("--n", rc.n, "scenario sample size");
    c->add_option("--init", init_str, "starting beta_2..beta_p, comma separated");
    // csv schema
    c->add_option("--x-cols", xcols_str, "covariate column names, comma separated");
    c->add_option("--z-col", rc.schema.z_col);
    c->add_option("--y-col", rc.schema.y_col);
    // randomization law for --data runs
    c->add_option("--rand", rand_str)->check(CLI::IsMember({"bern", "logistic", "cat", "dose"}));
    c->add_option("--rand-p", rand_p, "bernoulli success probability");
    c->add_option("--gamma", gamma_str, "logistic coefficients, comma separated");
    c->add_option("--arm-probs", probs_str, "active-arm probabilities, comma separated");
    c->add_option("--dose-range", dose_str, "dose interval as a,b");
    c->add_option("--degree", rc.K, "treatment powers for continuous dose");
  };

  CLI::App* c_fit = app.add_subcommand("fit", "estimate the index and the effect curve");
  CLI::App* c_sim = app.add_subcommand("simulate", "replicate a built-in scenario");
  CLI::App* c_boot = app.add_subcommand("bootstrap", "percentile intervals for beta");
  CLI::App* c_perm = app.add_subcommand("permtest", "permutation null band for the curve");
  CLI::App* c_curve = app.add_subcommand("curve", "effect curve with a resampling band");
  for (CLI::App* c : {c_fit, c_sim, c_boot, c_perm, c_curve}) add_common(c);
  c_fit->add_option("--boot", rc.B, "add a percentile CI from this many resamples");
  c_boot->add_option("--boot", rc.B, "number of bootstrap resamples");
  c_curve->add_option("--boot", rc.B, "number of resamples for the band");
  c_perm->add_option("--perm", rc.n_perm, "number of permutations");
  c_sim->add_option("--reps", rc.reps, "number of simulated datasets");
  c_sim->add_flag("--cp", cp, "bootstrap each replicate for coverage (slow)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // config errors share exit code 2
  }

  try {
    rc.command = app.get_subcommands().at(0)->get_name();
    rc.with_cp = cp;
    if (!data_path.empty()) rc.data_path = data_path;
    if (!scenario_str.empty()) rc.scenario = itr::scenario_from_string(scenario_str);

    if (method_str.empty()) {
      // scenario defaults; data runs default to the basic binary method
      if (rc.scenario && *rc.scenario == itr::ScenarioId::S5) method_str = "cat";
      else if (rc.scenario && *rc.scenario == itr::ScenarioId::S6) method_str = "cont";
      else method_str = "m1";
    }
    rc.method = itr::method_from_string(method_str);

    if (kernel_str == "epan") rc.fit.kernel.family = itr::KernelFamily::Epanechnikov;
    else if (kernel_str == "gauss") rc.fit.kernel.family = itr::KernelFamily::Gaussian;
    else rc.fit.kernel.family = itr::KernelFamily::Quartic;
    if (hg > 0) rc.fit.kernel.h_g = hg;
    if (hu > 0) rc.fit.kernel.h_u = hu;
    rc.fit.cv_bandwidth = cv;
    if (!init_str.empty()) rc.fit.user_init = to_vec(parse_doubles(init_str, "--init"));

    if (rc.data_path) {
      rc.schema.x_cols = parse_names(xcols_str);
      if (rand_str == "bern") {
        rc.rand_spec = itr::RandomizationSpec::bernoulli(rand_p);
        rc.schema.kind = itr::TreatmentKind::Binary;
      } else if (rand_str == "logistic") {
        if (gamma_str.empty()) throw itr::ConfigError("--rand logistic needs --gamma");
        rc.rand_spec = itr::RandomizationSpec::logistic(to_vec(parse_doubles(gamma_str, "--gamma")));
        rc.schema.kind = itr::TreatmentKind::Binary;
      } else if (rand_str == "cat") {
        if (probs_str.empty()) throw itr::ConfigError("--rand cat needs --arm-probs");
        Eigen::VectorXd probs = to_vec(parse_doubles(probs_str, "--arm-probs"));
        rc.rand_spec = itr::RandomizationSpec::categorical(probs);
        rc.schema.kind = itr::TreatmentKind::Categorical;
        rc.schema.n_arms = int(probs.size());
      } else {
        if (dose_str.empty()) throw itr::ConfigError("--rand dose needs --dose-range");
        std::vector<double> ab = parse_doubles(dose_str, "--dose-range");
        if (ab.size() != 2) throw itr::ConfigError("--dose-range wants exactly a,b");
        rc.rand_spec = itr::RandomizationSpec::uniform_dose(ab[0], ab[1]);
        rc.schema.kind = itr::TreatmentKind::ContinuousDose;
        rc.schema.dose_a = ab[0];
        rc.schema.dose_b = ab[1];
      }
    }
    return itr::run(rc);
  } catch (const itr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
