#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"

namespace tripdiff {

// Per-row influence values of one estimate. Rows index the source data
// (units for panels, observations for repeated cross-sections).
struct InfluenceVector {
  std::vector<std::size_t> rows;
  Eigen::VectorXd values;
  std::size_t population = 0;
  // Entries are unit-period observations rather than units (3WFE); such
  // vectors cannot be aggregated across (g, t).
  bool observation_level = false;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
};

struct EstimateDiagnostics {
  bool models_converged = true;
  int logit_iterations = 0;
  double logit_gradient_norm = 0.0;
  std::size_t trimmed = 0;
  double max_weight = 0.0;
  bool degenerate_ci = false;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
};

struct EffectEstimate {
  Estimand estimand = Estimand::DATT;
  Estimator estimator = Estimator::Unadjusted;
  Comparison comparison = Comparison::Never;
  int g = 0;
  int t = 0;
  std::string focal;
  std::string other;
  bool repeated_cross_section = false;
  double estimate = 0.0;
  double se = 0.0;
  double level = 0.95;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  // Lower bounds carry a one-sided interval [ci_lower, +inf).
  bool one_sided = false;
  // Distinguishes the two ATT-recovery outputs: "subgroup" or "population".
  std::string scope;
  std::size_t n = 0;  // rows entering the estimate
  std::array<std::size_t, kCellCount> cell_counts{};
  InfluenceVector influence;
  EstimateDiagnostics diagnostics;
};

}  // namespace tripdiff
