#include "cdatt.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"
#include "inference.hpp"
#include "problem.hpp"

namespace tripdiff {

namespace {

constexpr int kTF = static_cast<int>(Cell::TreatedFocal);
constexpr int kTO = static_cast<int>(Cell::TreatedOther);
constexpr int kCF = static_cast<int>(Cell::ComparisonFocal);
constexpr int kCO = static_cast<int>(Cell::ComparisonOther);
const std::vector<int> kDenominators = {kTO, kCF, kCO};

// Unnormalized weight of row k for its own cell: 1 on G_g S_s and
// pi_{g,s} / pi_{cell} elsewhere.
double raw_weight(const Eigen::MatrixXd& probs, Eigen::Index k, int cell) {
  return cell == kTF ? 1.0 : probs(k, kTF) / probs(k, cell);
}

CdattWeights weights_from(const std::vector<Cell>& cells, const Eigen::MatrixXd& probs, Comparison comparison,
                          const std::vector<std::uint8_t>* period = nullptr, bool post = true) {
  const auto n = static_cast<Eigen::Index>(cells.size());
  CdattWeights w;
  w.comparison = comparison;
  Eigen::VectorXd* out[4] = {&w.w1, &w.w2, &w.w3, &w.w4};
  for (auto* v : out) v->setZero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (period != nullptr && ((*period)[static_cast<std::size_t>(k)] != 0) != post) continue;
    const int c = static_cast<int>(cells[static_cast<std::size_t>(k)]);
    (*out[c])(k) = raw_weight(probs, k, c);
  }
  for (int c = 0; c < 4; ++c) {
    const double mean = out[c]->mean();
    if (!(mean > 0.0)) {
      throw DegenerateDesignError(std::string("empty weight normalizer for cell ") + describe(static_cast<Cell>(c)));
    }
    w.normalizers[static_cast<std::size_t>(c)] = mean;
    *out[c] /= mean;
    w.max_weight = std::max(w.max_weight, out[c]->maxCoeff());
  }
  return w;
}

}  // namespace

CdattWeights compute_cdatt_weights(const CellIndicators& cells, const PropensityModel& model,
                                   const Eigen::MatrixXd& covariates, double trim_threshold) {
  if (static_cast<std::size_t>(covariates.rows()) != cells.size()) {
    throw UsageError("covariate rows do not match the included rows of the problem");
  }
  const Eigen::MatrixXd probs = predict_cell_probabilities(model, covariates);
  std::size_t bad = 0;
  std::ostringstream which;
  for (Eigen::Index k = 0; k < probs.rows(); ++k) {
    for (int c : kDenominators) {
      if (probs(k, c) < trim_threshold) {
        if (bad < 5) which << (bad ? ", " : "") << "row " << cells.rows[static_cast<std::size_t>(k)] + 1;
        ++bad;
        break;
      }
    }
  }
  if (bad > 0) {
    throw TrimError(bad, std::to_string(bad) + " row(s) have a denominator probability below " +
                             csv::format_double(trim_threshold) + " (" + which.str() + (bad > 5 ? ", ...)" : ")"));
  }
  return weights_from(cells.cells, probs, cells.comparison);
}

EffectEstimate estimate_cdatt(const PanelDataset& data, int g, int t, const DesignSpec& spec, Estimator method) {
  if (method != Estimator::RA && method != Estimator::IPW && method != Estimator::DR) {
    throw UsageError(std::string("CDATT is identified by ipw, ra or dr only, not ") + to_string(method));
  }
  auto p = detail::make_problem(data, g, t, spec);
  EstimateDiagnostics diag;
  CdattWeights w;
  if (method != Estimator::RA) {
    const auto fp = detail::fit_propensity(p, spec, kDenominators, diag);
    w = weights_from(p.cells.cells, fp.probs, p.cells.comparison);
    diag.max_weight = w.max_weight;
  }
  auto e = detail::start_estimate(p, spec, Estimand::CDATT, method);
  e.diagnostics = diag;
  const auto& y = p.y;

  if (method == Estimator::IPW) {
    const double a1 = (w.w1.array() * y.array()).mean();
    const double a2 = (w.w2.array() * y.array()).mean();
    const double a3 = (w.w3.array() * y.array()).mean();
    const double a4 = (w.w4.array() * y.array()).mean();
    e.estimate = (a1 - a2) - (a3 - a4);
    Eigen::VectorXd eta = w.w1.array() * (y.array() - a1) - w.w2.array() * (y.array() - a2) -
                          w.w3.array() * (y.array() - a3) + w.w4.array() * (y.array() - a4);
    e.diagnostics.notes.push_back("IPW influence values ignore propensity estimation (conservative)");
    detail::set_influence(e, p, std::move(eta));
    attach_inference(e);
    return e;
  }

  const auto on_to = detail::positions(p, Cell::TreatedOther);
  const auto on_co = detail::positions(p, Cell::ComparisonOther);
  const auto m_to = detail::fit_outcome(p, on_to, "dY | G_g x S_s'");
  const auto m_co = detail::fit_outcome(p, on_co, "dY | C_c x S_s'");

  if (method == Estimator::RA) {
    const Eigen::VectorXd v1 = p.indicator(Cell::TreatedFocal) / p.indicator(Cell::TreatedFocal).mean();
    const Eigen::VectorXd v3 = p.indicator(Cell::ComparisonFocal) / p.indicator(Cell::ComparisonFocal).mean();
    const Eigen::VectorXd r1 = y - m_to.fitted;
    const Eigen::VectorXd r3 = y - m_co.fitted;
    const double tau1 = (v1.array() * r1.array()).mean();
    const double tau3 = (v3.array() * r3.array()).mean();
    e.estimate = tau1 - tau3;
    Eigen::VectorXd eta = v1.array() * (r1.array() - tau1) - v3.array() * (r3.array() - tau3);
    eta += detail::regression_adjustment(p, on_to, m_to, v1);
    eta -= detail::regression_adjustment(p, on_co, m_co, v3);
    e.diagnostics.max_weight = std::max(v1.maxCoeff(), v3.maxCoeff());
    detail::set_influence(e, p, std::move(eta));
    attach_inference(e);
    return e;
  }

  const Eigen::VectorXd rg = y - m_to.fitted;
  const Eigen::VectorXd rc = y - m_co.fitted;
  e.estimate = ((w.w1 - w.w2).array() * rg.array()).mean() - ((w.w3 - w.w4).array() * rc.array()).mean();

  // The efficient influence function also needs the subgroup-s fits, which
  // the point estimate never uses.
  const auto m_tf = detail::fit_outcome(p, detail::positions(p, Cell::TreatedFocal), "dY | G_g x S_s");
  const auto m_cf = detail::fit_outcome(p, detail::positions(p, Cell::ComparisonFocal), "dY | C_c x S_s");
  e.diagnostics.notes.push_back("outcome fits for subgroup s enter the influence function only");
  for (const auto* fit : {&m_tf, &m_to, &m_cf, &m_co}) {
    if (fit->model.ridge_active) e.diagnostics.warnings.push_back("outcome model '" + fit->model.target + "' needed ridge");
  }
  DrInfluenceInputs in;
  in.cells = p.cells.cells;
  in.delta_y = y;
  in.w1 = w.w1;
  in.w2 = w.w2;
  in.w3 = w.w3;
  in.w4 = w.w4;
  in.m_treated_focal = m_tf.fitted;
  in.m_treated_other = m_to.fitted;
  in.m_comparison_focal = m_cf.fitted;
  in.m_comparison_other = m_co.fitted;
  auto terms = dr_influence_terms(in);
  detail::set_influence(e, p, std::move(terms.total));
  attach_inference(e);
  return e;
}

EffectEstimate estimate_cdatt_rc(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec) {
  if (spec.estimator != Estimator::DR) {
    throw UsageError("repeated cross-sections support the doubly robust CDATT only");
  }
  auto p = detail::make_problem(data, g, t, spec);
  EstimateDiagnostics diag;
  const auto fp = detail::fit_propensity(p, spec, kDenominators, diag);
  auto e = detail::start_estimate(p, spec, Estimand::CDATT, Estimator::DR);
  e.diagnostics = diag;
  const auto& y = p.y;
  const auto n = static_cast<Eigen::Index>(p.size());

  // Outcome levels per (cell, period).
  Eigen::VectorXd m[4][2];
  for (int c = 0; c < 4; ++c) {
    for (int post = 0; post < 2; ++post) {
      const auto on = detail::positions(p, static_cast<Cell>(c), post != 0);
      const auto fit = detail::fit_outcome(p, on, std::string("Y | ") + describe(static_cast<Cell>(c)) +
                                                      (post ? ", period t" : ", period g-1"));
      if (fit.model.ridge_active) e.diagnostics.warnings.push_back("outcome model '" + fit.model.target + "' needed ridge");
      m[c][post] = fit.fitted;
    }
  }
  const CdattWeights wt[2] = {weights_from(p.cells.cells, fp.probs, p.cells.comparison, &p.cells.post, false),
                              weights_from(p.cells.cells, fp.probs, p.cells.comparison, &p.cells.post, true)};
  e.diagnostics.max_weight = std::max(wt[0].max_weight, wt[1].max_weight);

  const Eigen::VectorXd v1 = p.indicator(Cell::TreatedFocal) / p.indicator(Cell::TreatedFocal).mean();
  const Eigen::VectorXd v3 = p.indicator(Cell::ComparisonFocal) / p.indicator(Cell::ComparisonFocal).mean();
  const Eigen::VectorXd gap_g = m[kTF][1] - m[kTF][0] - (m[kTO][1] - m[kTO][0]);
  const Eigen::VectorXd gap_c = m[kCF][1] - m[kCF][0] - (m[kCO][1] - m[kCO][0]);
  const double ra_g = (v1.array() * gap_g.array()).mean();
  const double ra_c = (v3.array() * gap_c.array()).mean();
  e.estimate = ra_g - ra_c;
  Eigen::VectorXd eta = v1.array() * (gap_g.array() - ra_g) - v3.array() * (gap_c.array() - ra_c);

  constexpr double kSign[4] = {1.0, -1.0, -1.0, 1.0};
  for (int c = 0; c < 4; ++c) {
    for (int post = 0; post < 2; ++post) {
      const Eigen::VectorXd* wv[4] = {&wt[post].w1, &wt[post].w2, &wt[post].w3, &wt[post].w4};
      const Eigen::VectorXd r = y - m[c][post];
      const double mean = (wv[c]->array() * r.array()).mean();
      const double s = kSign[c] * (post ? 1.0 : -1.0);
      e.estimate += s * mean;
      eta += s * (wv[c]->array() * (r.array() - mean)).matrix();
    }
  }
  (void)n;
  detail::set_influence(e, p, std::move(eta));
  attach_inference(e);
  return e;
}

std::pair<EffectEstimate, EffectEstimate> recover_att_unaffected(const EffectEstimate& datt, double share_focal,
                                                                 double share_other) {
  if (datt.estimand != Estimand::DATT) throw UsageError("ATT recovery needs a DATT estimate");
  if (!(share_focal > 0.0) || !(share_other > 0.0) || std::abs(share_focal + share_other - 1.0) > 1e-10) {
    throw UsageError("subgroup shares must be positive and sum to 1 (the comparison subgroup must exist)");
  }
  EffectEstimate att_s = datt;
  att_s.estimand = Estimand::ATTUnaffected;
  att_s.scope = "subgroup";
  att_s.diagnostics.notes.push_back("assumes the comparison subgroup is unaffected by treatment");

  EffectEstimate att_pop = att_s;
  att_pop.scope = "population";
  att_pop.estimate = share_focal * datt.estimate;
  att_pop.influence.values = share_focal * datt.influence.values;
  att_pop.se = share_focal * datt.se;
  if (att_pop.one_sided) {
    att_pop.ci_lower = share_focal * datt.ci_lower;
  } else {
    const double z = normal_critical_value(datt.level);
    att_pop.ci_lower = att_pop.estimate - z * att_pop.se;
    att_pop.ci_upper = att_pop.estimate + z * att_pop.se;
  }
  att_pop.diagnostics.notes.push_back("population ATT = share_s * ATT_s with share_s = " +
                                      csv::format_double(share_focal));
  return {std::move(att_s), std::move(att_pop)};
}

EffectEstimate mts_lower_bound(const EffectEstimate& datt) {
  if (datt.estimand != Estimand::DATT) throw UsageError("the monotone-selection bound needs a DATT estimate");
  EffectEstimate bound = datt;
  bound.estimand = Estimand::Bound;
  bound.one_sided = true;
  bound.ci_lower = datt.estimate - normal_one_sided_critical_value(datt.level) * datt.se;
  bound.ci_upper = std::numeric_limits<double>::infinity();
  bound.diagnostics.notes.push_back("lower bound for the CDATT under monotone treatment effect selection");
  return bound;
}

}  // namespace tripdiff
