#pragma once

// Shared plumbing for one (g, t) estimation problem. Not part of the public
// surface.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "estimate.hpp"
#include "models.hpp"

namespace tripdiff::detail {

// Rows of one (g, t) problem with everything the estimators need. For panels
// `y` is the long difference Y_t - Y_{g-1}; for repeated cross-sections it is
// the outcome level and `cells.post` marks the period.
struct Problem {
  CellIndicators cells;
  Eigen::VectorXd y;
  Eigen::MatrixXd ps_x;
  Eigen::MatrixXd or_x;
  std::function<std::string(std::size_t)> name_of;  // source row -> label for messages

  std::size_t size() const { return cells.size(); }
  std::vector<int> labels() const;
  Eigen::VectorXd indicator(Cell cell) const;
  Eigen::VectorXd indicator(Cell cell, bool post) const;
};

Problem make_problem(const PanelDataset& data, int g, int t, const DesignSpec& spec);
Problem make_problem(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec);

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows);
Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows);

// Positions k (into the problem rows) belonging to `cell`, optionally within
// one period.
std::vector<std::size_t> positions(const Problem& p, Cell cell);
std::vector<std::size_t> positions(const Problem& p, Cell cell, bool post);

struct FittedPropensity {
  PropensityModel model;
  Eigen::MatrixXd probs;  // n x 4, aligned with the problem rows
};

// Fits the four-cell logit and enforces overlap on the probability columns in
// `denominators`. With spec.trim_drop the violating rows are dropped from
// `problem` and the model is refit once; otherwise a TrimError is thrown.
FittedPropensity fit_propensity(Problem& problem, const DesignSpec& spec, const std::vector<int>& denominators,
                                EstimateDiagnostics& diag);

// Outcome regression of problem.y on problem.or_x over the given positions,
// predicted at every problem row.
struct FittedOutcome {
  OutcomeModel model;
  Eigen::VectorXd fitted;
};
FittedOutcome fit_outcome(const Problem& p, const std::vector<std::size_t>& on, const std::string& target);

EffectEstimate start_estimate(const Problem& p, const DesignSpec& spec, Estimand estimand, Estimator estimator);
void set_influence(EffectEstimate& e, const Problem& p, Eigen::VectorXd values);

// Contribution of OLS estimation error to a plug-in mean E_n[a_i m(X_i)]:
// -a' M^{-1} d_i e_i with M the per-row Gram matrix of the fit.
Eigen::VectorXd regression_adjustment(const Problem& p, const std::vector<std::size_t>& on,
                                      const FittedOutcome& fit, const Eigen::VectorXd& weights);

}  // namespace tripdiff::detail
