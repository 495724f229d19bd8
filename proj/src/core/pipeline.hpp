#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "estimate.hpp"
#include "inference.hpp"

namespace tripdiff {

// Rejects estimand/estimator pairs that identify nothing (e.g. 3WFE for the
// CDATT) with a usage error that lists the valid matrix.
void check_combination(Estimand estimand, Estimator estimator, bool repeated_cross_section = false);
std::string valid_combinations();

// Every estimate the spec asks for at one (g, t). ATT recovery yields two
// entries (subgroup and population).
std::vector<EffectEstimate> estimate_effects(const PanelDataset& data, int g, int t, const DesignSpec& spec);
std::vector<EffectEstimate> estimate_effects(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec);

struct AggregationWeight {
  int g = 0;
  int t = 0;
  double weight = 0.0;
};

struct EstimationRequest {
  DesignSpec spec;
  // Empty: every (g, t) with g a treated cohort, g-1 observed and t >= g.
  std::vector<std::pair<int, int>> pairs;
  // Report the DATT and the CDATT side by side with the same estimator.
  bool both = false;
  std::vector<AggregationWeight> aggregate;
  unsigned threads = 1;
};

struct EstimationResult {
  std::vector<EffectEstimate> estimates;
  std::vector<AggregatedEffect> aggregates;
  // Pairs dropped from an automatic enumeration, with the reason.
  std::vector<std::string> skipped;
};

EstimationResult run_estimation(const PanelDataset& data, const EstimationRequest& request);
EstimationResult run_estimation(const RepeatedCrossSection& data, const EstimationRequest& request);

// Share of units in subgroup s among units in {s, s'}.
std::pair<double, double> subgroup_shares(const std::vector<std::string>& subgroups, const std::string& focal,
                                          const std::string& other);

}  // namespace tripdiff
