#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"
#include "estimate.hpp"

namespace tripdiff {

// Triple difference of the four cell means of Y_t - Y_{g-1}.
EffectEstimate estimate_datt_unadjusted(const PanelDataset& data, int g, int t, const DesignSpec& spec);

// Triple-interaction coefficient of the two-period three-way fixed-effects
// regression, with HC1 standard errors. Influence values are per
// unit-period observation.
EffectEstimate estimate_datt_3wfe(const PanelDataset& data, int g, int t, const DesignSpec& spec);

// ATT_s(g,t) - ATT_s'(g,t), each a group-time ATT within one subgroup.
// `method` is one of RA, IPW, DR.
EffectEstimate estimate_datt_adjusted(const PanelDataset& data, int g, int t, const DesignSpec& spec,
                                      Estimator method);

// Dispatches on spec.estimator.
EffectEstimate estimate_datt(const PanelDataset& data, int g, int t, const DesignSpec& spec);

// Cross-check for the state-level collapse remark: the DiD of per-cluster
// subgroup gaps, each cluster weighted by its size. `clusters` labels every
// unit; the result equals the unadjusted DATT when every cluster lies
// entirely within the treated cohort or the comparison group and
// subgroup shares are equal across clusters of a group.
double cluster_weighted_gap_did(const PanelDataset& data, const std::vector<std::string>& clusters, int g, int t,
                                const DesignSpec& spec);

}  // namespace tripdiff
