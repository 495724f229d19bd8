#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "estimate.hpp"

namespace tripdiff {

// Complete generative specification of one simulation scenario. Propensity
// coefficients carry no intercept; every coefficient vector is aligned with
// `covariates`.
struct DgpSpec {
  std::string name = "default";
  std::size_t n = 1000;
  // Empty: draw from the built-in covariate generator. Otherwise rows are
  // resampled with replacement from this CSV.
  std::string covariates_csv;
  std::vector<std::string> covariates{"educ", "age_c", "age_c2", "white", "union", "whitecollar"};
  std::vector<double> alpha_ws;   // treated, subgroup s
  std::vector<double> alpha_wsp;  // treated, subgroup s'
  std::vector<double> alpha_cs;   // comparison, subgroup s (comparison s' is the base)
  double beta0 = 1.2;
  std::vector<double> beta;
  double sigma_u = 0.35;
  bool effect = true;  // heterogeneous treatment effect R ~ N(beta X, gamma sd(beta X))
  double gamma = 0.0;
  bool ps_wrong = false;
  bool or_wrong = false;
  std::array<double, 2> nu_range{2.0, 5.0};
  std::string misspecified_column = "educ";
  bool staggered = false;               // cohorts 2, 3 and never over periods 1..3
  bool repeated_cross_section = false;  // keep each unit in one random period
  std::uint64_t truth_seed = 20240917;
  std::size_t truth_draws = 1000000;

  void validate() const;
  int periods() const { return staggered ? 3 : 2; }
  // (g, t) pairs a trial is evaluated at.
  std::vector<std::pair<int, int>> pairs() const;
};

// The built-in calibrated scenario with gamma = 0.
DgpSpec default_dgp();
DgpSpec dgp_from_json(const std::string& text);
std::string dgp_to_json(const DgpSpec& spec);

// Labels of the two subgroups in generated data.
inline constexpr const char* kSimFocal = "s";
inline constexpr const char* kSimOther = "s_prime";
inline constexpr const char* kMisspecifiedName = "x_tilde";

struct TruthRecord {
  double cdatt = 0.0;  // zero by construction
  double datt = 0.0;   // E[beta X | G_g S_s] - E[beta X | G_g S_s'] when effects are on
};

struct Trial {
  PanelDataset panel;
  std::optional<RepeatedCrossSection> repeated;
  TruthRecord truth;
  double nu = 0.0;
};

// Population truth by oversampling (cached per spec).
TruthRecord dgp_truth(const DgpSpec& spec);

// One dataset from the stream `seed`. The dataset carries the spec's
// covariates plus the misspecified single-column design `x_tilde`.
Trial generate_trial(const DgpSpec& spec, std::uint64_t seed);

// ln(x + 1) + sign(x) |x|^nu.
Eigen::VectorXd misspecify_covariates(const Eigen::VectorXd& x, double nu);
// Same, with nu drawn uniformly from `range` on the stream `seed`.
Eigen::VectorXd misspecify_covariates(const Eigen::VectorXd& x, std::uint64_t seed, std::array<double, 2> range);

// The full covariate table of the built-in generator: educ, age, age_c,
// age_c2, age_30_34, age_35_40, white, union, whitecollar.
std::vector<std::string> synthetic_covariate_names();
Eigen::MatrixXd synthetic_covariates(std::size_t n, std::uint64_t seed);

struct SuiteEntry {
  Estimand estimand = Estimand::CDATT;
  Estimator estimator = Estimator::DR;
  std::string label() const;  // e.g. "cdatt_dr"
};
SuiteEntry parse_suite_entry(const std::string& label);
std::vector<SuiteEntry> default_suite();

struct McSettings {
  std::vector<SuiteEntry> suite = default_suite();
  std::size_t trials = 1000;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
  double level = 0.95;
  double trim_threshold = 0.005;
  bool trim_drop = false;  // drop units below the threshold instead of failing the trial
  std::optional<Comparison> comparison;
  // Optional user weights over the (g, t) pairs; adds one aggregate row per
  // aggregable estimator.
  std::vector<std::pair<std::pair<int, int>, double>> aggregate;
  bool keep_trials = false;
};

struct TrialResult {
  bool ok = false;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::string error;
};

struct McRow {
  std::string estimator;
  int g = 0;
  int t = 0;
  bool aggregate = false;
  double truth = 0.0;
  std::size_t trials = 0;    // successful trials entering the metrics
  std::size_t failures = 0;
  double avg_bias = 0.0;
  double median_bias = 0.0;
  double rmse = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  double ci_length = 0.0;
  double empirical_sd = 0.0;
};

// Table metrics of one estimator against the truth. Failed trials are
// excluded and counted.
McRow summarize_metrics(const std::vector<TrialResult>& results, const std::vector<double>& truths);

struct McReport {
  DgpSpec spec;
  McSettings settings;
  TruthRecord truth;
  std::vector<McRow> rows;
  // Per row, per trial; only with settings.keep_trials.
  std::vector<std::vector<TrialResult>> trials;
  bool failure_rate_exceeded = false;  // some row lost more than 1% of trials

  std::string to_csv() const;
  std::string to_json() const;
  std::string trials_csv() const;
  const McRow& row(const std::string& estimator, int g = 0, int t = 0) const;
};

McReport run_monte_carlo(const DgpSpec& spec, const McSettings& settings);

}  // namespace tripdiff
