#pragma once

#include <string>

#include "pipeline.hpp"
#include "simlab.hpp"

namespace tripdiff {

// Estimation request as JSON. Keys: estimand (datt|cdatt|att_unaffected|
// bound|both), estimator, comparison, s, sprime, covariates, ps_covariates,
// or_covariates, trim_threshold, trim_drop, level, pairs [[g, t], ...],
// aggregate [{g, t, weight}], threads. Unknown keys are rejected.
EstimationRequest request_from_json(const std::string& text);
std::string request_to_json(const EstimationRequest& request);

// Full-precision JSON of every estimate, aggregate and skipped pair,
// including influence vectors and diagnostics.
std::string result_to_json(const EstimationResult& result);

// Flat table: estimand, estimator, comparison, g, t, estimate, se, ci_lo,
// ci_hi. Aggregates carry "agg" in g and t.
std::string result_to_csv(const EstimationResult& result);

// Label used in the estimand column; ATT recovery rows append their scope.
std::string estimand_label(const EffectEstimate& e);

// Monte Carlo settings as JSON, same keys as McReport::to_json "settings"
// plus threads and keep_trials.
McSettings mc_settings_from_json(const std::string& text);

}  // namespace tripdiff
