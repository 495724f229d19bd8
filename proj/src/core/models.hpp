#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tripdiff {

struct LogitSettings {
  double tol = 1e-8;  // max-norm of the per-observation mean score
  int max_iter = 100;
  double ridge = 1e-8;  // penalty weight on the standardized coefficients
};

struct LogitDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  bool ridge_active = false;
  bool quasi_separation = false;  // some fitted probability < 1e-12
  std::vector<double> loglik_trace;  // penalized log-likelihood per accepted iterate
  std::vector<std::string> warnings;
};

// Four-category multinomial logit. Category 3 is the base with its linear
// index fixed at zero; `coefficients` holds one row per non-base category,
// columns (intercept, x_1..x_k) on the original covariate scale.
struct PropensityModel {
  Eigen::Matrix<double, 3, Eigen::Dynamic> coefficients;
  LogitDiagnostics diagnostics;

  std::size_t arity() const { return static_cast<std::size_t>(coefficients.cols()) - 1; }
};

PropensityModel fit_multinomial_logit(const Eigen::MatrixXd& covariates, const std::vector<int>& labels,
                                      const LogitSettings& settings = {});

// Softmax over the linear indices, base category index 0.
std::array<double, 4> predict_cell_probabilities(const PropensityModel& model,
                                                 const Eigen::RowVectorXd& x);
// One row of probabilities per covariate row.
Eigen::MatrixXd predict_cell_probabilities(const PropensityModel& model, const Eigen::MatrixXd& covariates);

// Multinomial log-likelihood of `labels` under `model`.
double multinomial_loglik(const PropensityModel& model, const Eigen::MatrixXd& covariates,
                          const std::vector<int>& labels);

struct OutcomeModel {
  Eigen::VectorXd coefficients;  // intercept first
  double residual_variance = 0.0;
  std::size_t rank = 0;
  std::size_t observations = 0;
  bool ridge_active = false;
  std::string target;  // free-form label of what was regressed, e.g. "dY | G_g x S_s'"

  std::size_t arity() const { return static_cast<std::size_t>(coefficients.size()) - 1; }
};

// Weighted least squares with intercept via the normal equations. An empty
// weight vector means unit weights.
OutcomeModel fit_least_squares(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights = {});

double predict_outcome(const OutcomeModel& model, const Eigen::RowVectorXd& x);
Eigen::VectorXd predict_outcome(const OutcomeModel& model, const Eigen::MatrixXd& covariates);

// [1, X] design matrix.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& covariates);

}  // namespace tripdiff
