#include "inference.hpp"

#include <cmath>
#include <map>

#include <boost/math/distributions/normal.hpp>

#include "error.hpp"

namespace tripdiff {

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw UsageError("confidence level must lie in (0, 1)");
  const boost::math::normal standard;
  return boost::math::quantile(standard, 1.0 - (1.0 - level) / 2.0);
}

double normal_one_sided_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw UsageError("confidence level must lie in (0, 1)");
  const boost::math::normal standard;
  return boost::math::quantile(standard, level);
}

StandardError standard_error_ci(const InfluenceVector& influence, double estimate, double level) {
  const auto n = influence.size();
  if (n < 2) throw UsageError("standard error needs at least two influence values");
  if (!influence.values.allFinite()) throw NumericalError("influence values are not finite");
  const double nd = static_cast<double>(n);
  StandardError out;
  out.se = std::sqrt(influence.values.squaredNorm() / nd / nd);
  const double z = normal_critical_value(level);
  out.lower = estimate - z * out.se;
  out.upper = estimate + z * out.se;
  out.degenerate = out.se == 0.0;
  return out;
}

void attach_inference(EffectEstimate& estimate) {
  const auto se = standard_error_ci(estimate.influence, estimate.estimate, estimate.level);
  estimate.se = se.se;
  estimate.ci_lower = se.lower;
  estimate.ci_upper = se.upper;
  estimate.diagnostics.degenerate_ci = se.degenerate;
  if (se.degenerate) estimate.diagnostics.warnings.push_back("standard error is zero; confidence interval is degenerate");
}

namespace {

double weighted_mean(const Eigen::VectorXd& w, const Eigen::VectorXd& r) {
  return (w.array() * r.array()).sum() / static_cast<double>(w.size());
}

}  // namespace

DrInfluenceTerms dr_influence_terms(const DrInfluenceInputs& in) {
  const auto n = in.delta_y.size();
  const auto& dy = in.delta_y;
  DrInfluenceTerms terms;

  // Treated units of the focal subgroup: residual against their own fit plus
  // the gap between their fits, centred at the plug-in mean.
  terms.treated_focal = in.w1.array() * (dy - in.m_treated_focal).array();
  const Eigen::VectorXd comparison_gap = in.m_comparison_focal - in.m_comparison_other;
  terms.psi = -(in.w1.array() * comparison_gap.array()).matrix();
  const Eigen::VectorXd centred = dy - in.m_treated_other - comparison_gap;
  const double kappa = weighted_mean(in.w1, centred);
  terms.phi = in.w1.array() * (in.m_treated_focal - in.m_treated_other).array() - in.w1.array() * kappa;

  const Eigen::VectorXd r2 = dy - in.m_treated_other;
  const Eigen::VectorXd r3 = dy - in.m_comparison_focal;
  const Eigen::VectorXd r4 = dy - in.m_comparison_other;
  const double a2 = weighted_mean(in.w2, r2);
  const double a3 = weighted_mean(in.w3, r3);
  const double a4 = weighted_mean(in.w4, r4);
  terms.treated_other = -(in.w2.array() * (r2.array() - a2)).matrix();
  terms.comparison_focal = -(in.w3.array() * (r3.array() - a3)).matrix();
  terms.comparison_other = in.w4.array() * (r4.array() - a4);

  terms.total = terms.treated_focal + terms.treated_other + terms.comparison_focal + terms.comparison_other +
                terms.phi + terms.psi;
  (void)n;
  return terms;
}

namespace {

// Influence values rescaled to the full source population so that vectors
// from problems with different included samples can be combined.
Eigen::VectorXd population_scaled(const InfluenceVector& iv) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(iv.population));
  const double scale = static_cast<double>(iv.population) / static_cast<double>(iv.size());
  for (std::size_t k = 0; k < iv.rows.size(); ++k) {
    const auto r = iv.rows[k];
    if (r >= iv.population) throw UsageError("influence row index outside its population");
    full(static_cast<Eigen::Index>(r)) += scale * iv.values(static_cast<Eigen::Index>(k));
  }
  return full;
}

}  // namespace

AggregatedEffect aggregate_group_time(const std::vector<AggregateComponent>& components) {
  if (components.empty()) throw UsageError("aggregation needs at least one component");
  double weight_sum = 0.0;
  for (const auto& c : components) {
    if (c.effect == nullptr) throw UsageError("aggregation component without an estimate");
    if (!(c.weight >= 0.0)) throw UsageError("aggregation weights must be nonnegative");
    weight_sum += c.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-10) throw UsageError("aggregation weights must sum to 1");

  const auto& first = *components.front().effect;
  AggregatedEffect agg;
  agg.estimand = first.estimand;
  agg.estimator = first.estimator;
  agg.comparison = first.comparison;
  agg.level = first.level;
  const auto population = first.influence.population;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(population));
  for (const auto& c : components) {
    const auto& e = *c.effect;
    if (e.estimand != agg.estimand || e.estimator != agg.estimator) {
      throw UsageError("cannot aggregate estimates of different estimands or estimators");
    }
    if (e.comparison != agg.comparison) throw UsageError("cannot aggregate estimates with different comparison groups");
    if (e.influence.observation_level) {
      throw UsageError("cannot aggregate estimates with observation-level influence values (3WFE)");
    }
    if (e.influence.population != population) throw UsageError("aggregated estimates must share a source dataset");
    agg.components.emplace_back(e.g, e.t);
    agg.weights.push_back(c.weight);
    agg.estimate += c.weight * e.estimate;
    total += c.weight * population_scaled(e.influence);
  }
  agg.influence.population = population;
  agg.influence.rows.resize(population);
  for (std::size_t r = 0; r < population; ++r) agg.influence.rows[r] = r;
  agg.influence.values = std::move(total);
  const auto se = standard_error_ci(agg.influence, agg.estimate, agg.level);
  agg.se = se.se;
  agg.ci_lower = se.lower;
  agg.ci_upper = se.upper;
  return agg;
}

double influence_covariance(const EffectEstimate& a, const EffectEstimate& b) {
  if (a.influence.population != b.influence.population) {
    throw UsageError("covariance needs estimates from the same source dataset");
  }
  if (a.influence.observation_level || b.influence.observation_level) {
    throw UsageError("covariance is undefined for observation-level influence values");
  }
  const double n = static_cast<double>(a.influence.population);
  return population_scaled(a.influence).dot(population_scaled(b.influence)) / (n * n);
}

}  // namespace tripdiff
