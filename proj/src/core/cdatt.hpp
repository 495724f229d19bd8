#pragma once

#include <array>
#include <utility>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "estimate.hpp"
#include "models.hpp"

namespace tripdiff {

// Self-normalized weights of one (g, t) problem, aligned with the included
// rows. Each has sample mean one and is supported on its own cell.
struct CdattWeights {
  Eigen::VectorXd w1, w2, w3, w4;
  // Sample means of the unnormalized weights: E_n[G_g S_s] and the three
  // propensity-ratio analogues.
  std::array<double, 4> normalizers{};
  Comparison comparison = Comparison::Never;
  double max_weight = 0.0;
};

// `covariates` are the propensity covariates of the included rows. Throws
// TrimError when a denominator probability falls below `trim_threshold`.
CdattWeights compute_cdatt_weights(const CellIndicators& cells, const PropensityModel& model,
                                   const Eigen::MatrixXd& covariates, double trim_threshold);

// Panel CDATT; `method` is one of IPW, RA, DR.
EffectEstimate estimate_cdatt(const PanelDataset& data, int g, int t, const DesignSpec& spec, Estimator method);

// Doubly robust CDATT for repeated cross-sections with outcome regressions
// per (cell, period).
EffectEstimate estimate_cdatt_rc(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec);

// Under an unaffected comparison subgroup the DATT is the ATT of subgroup s,
// and the population ATT is share_s times it. Returns (att_s, att_pop).
std::pair<EffectEstimate, EffectEstimate> recover_att_unaffected(const EffectEstimate& datt, double share_focal,
                                                                 double share_other);

// Relabels a DATT as a one-sided lower bound for the CDATT:
// [estimate - z_{level} * se, +inf).
EffectEstimate mts_lower_bound(const EffectEstimate& datt);

}  // namespace tripdiff
