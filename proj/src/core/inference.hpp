#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "estimate.hpp"

namespace tripdiff {

struct StandardError {
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool degenerate = false;  // SE of exactly zero
};

// Two-sided standard normal critical value z_{1-(1-level)/2}.
double normal_critical_value(double level);
// One-sided critical value z_{level}.
double normal_one_sided_critical_value(double level);

// SE = sqrt(mean(eta^2) / n); CI = estimate -/+ z * SE.
StandardError standard_error_ci(const InfluenceVector& influence, double estimate, double level);

// Fills se / ci / degenerate flag of `estimate` from its influence vector.
void attach_inference(EffectEstimate& estimate);

// Inputs for the efficient influence function of the DR CDATT, all aligned
// with the included rows of one (g, t) problem. Weights are the
// self-normalized w1..w4; the outcome predictions are the four cell fits.
struct DrInfluenceInputs {
  std::vector<Cell> cells;
  Eigen::VectorXd delta_y;
  Eigen::VectorXd w1, w2, w3, w4;
  Eigen::VectorXd m_treated_focal;       // mu^s_{g,t}(X)
  Eigen::VectorXd m_treated_other;       // mu^{s'}_{g,t}(X)
  Eigen::VectorXd m_comparison_focal;    // mu^s_{c,g,t}(X)
  Eigen::VectorXd m_comparison_other;    // mu^{s'}_{c,g,t}(X)
};

// Component terms of the efficient influence function, kept separately so
// that each can be inspected and tested.
struct DrInfluenceTerms {
  Eigen::VectorXd treated_focal;       // eta^{g,s}
  Eigen::VectorXd treated_other;       // eta^{g,s'}
  Eigen::VectorXd comparison_focal;    // eta^{c,s}
  Eigen::VectorXd comparison_other;    // eta^{c,s'}
  Eigen::VectorXd phi;
  Eigen::VectorXd psi;
  Eigen::VectorXd total;
};

DrInfluenceTerms dr_influence_terms(const DrInfluenceInputs& in);

struct AggregateComponent {
  const EffectEstimate* effect = nullptr;
  double weight = 0.0;
};

struct AggregatedEffect {
  Estimand estimand = Estimand::CDATT;
  Estimator estimator = Estimator::DR;
  Comparison comparison = Comparison::Never;
  std::vector<std::pair<int, int>> components;  // (g, t)
  std::vector<double> weights;
  double estimate = 0.0;
  double se = 0.0;
  double level = 0.95;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  InfluenceVector influence;  // on the full source population
};

// Weighted sum of group-time effects; influence values of units appearing in
// several problems are summed before squaring.
AggregatedEffect aggregate_group_time(const std::vector<AggregateComponent>& components);

// Asymptotic covariance of two estimates sharing a source dataset, from the
// overlap of their influence vectors.
double influence_covariance(const EffectEstimate& a, const EffectEstimate& b);

}  // namespace tripdiff
