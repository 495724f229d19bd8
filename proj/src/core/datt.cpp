#include "datt.hpp"

#include <cmath>
#include <map>

#include "error.hpp"
#include "inference.hpp"
#include "models.hpp"
#include "problem.hpp"

namespace tripdiff {

namespace {

constexpr double kSign[kCellCount] = {1.0, -1.0, -1.0, 1.0};

EffectEstimate cell_means(const detail::Problem& p, const DesignSpec& spec) {
  auto e = detail::start_estimate(p, spec, Estimand::DATT, Estimator::Unadjusted);
  std::array<double, kCellCount> sum{};
  for (std::size_t k = 0; k < p.size(); ++k) sum[static_cast<std::size_t>(p.cells.cells[k])] += p.y(static_cast<Eigen::Index>(k));
  std::array<double, kCellCount> mean{};
  for (std::size_t c = 0; c < kCellCount; ++c) {
    mean[c] = sum[c] / static_cast<double>(p.cells.counts[c]);
    e.estimate += kSign[c] * mean[c];
  }
  const double n = static_cast<double>(p.size());
  Eigen::VectorXd eta(static_cast<Eigen::Index>(p.size()));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto c = static_cast<std::size_t>(p.cells.cells[k]);
    eta(static_cast<Eigen::Index>(k)) =
        kSign[c] * n / static_cast<double>(p.cells.counts[c]) * (p.y(static_cast<Eigen::Index>(k)) - mean[c]);
  }
  detail::set_influence(e, p, std::move(eta));
  attach_inference(e);
  return e;
}

}  // namespace

EffectEstimate estimate_datt_unadjusted(const PanelDataset& data, int g, int t, const DesignSpec& spec) {
  const auto p = detail::make_problem(data, g, t, spec);
  return cell_means(p, spec);
}

EffectEstimate estimate_datt_3wfe(const PanelDataset& data, int g, int t, const DesignSpec& spec) {
  const auto p = detail::make_problem(data, g, t, spec);
  auto e = detail::start_estimate(p, spec, Estimand::DATT, Estimator::ThreeWFE);
  const auto units = static_cast<Eigen::Index>(p.size());
  const auto pre = data.time_index(g - 1);
  const auto post = data.time_index(t);
  const Eigen::Index k = p.or_x.cols();
  const Eigen::Index cols = 8 + k;
  const Eigen::Index obs = 2 * units;

  // Columns: 1, X, post, treated, focal, post*treated, post*focal,
  // treated*focal, post*treated*focal.
  Eigen::MatrixXd x(obs, cols);
  Eigen::VectorXd y(obs);
  for (Eigen::Index u = 0; u < units; ++u) {
    const auto row = static_cast<Eigen::Index>(p.cells.rows[static_cast<std::size_t>(u)]);
    const double d = p.cells.treated(static_cast<std::size_t>(u)) ? 1.0 : 0.0;
    const double s = p.cells.focal_subgroup(static_cast<std::size_t>(u)) ? 1.0 : 0.0;
    for (int period = 0; period < 2; ++period) {
      const Eigen::Index r = 2 * u + period;
      const double a = period;
      x(r, 0) = 1.0;
      x.block(r, 1, 1, k) = p.or_x.row(u);
      x(r, k + 1) = a;
      x(r, k + 2) = d;
      x(r, k + 3) = s;
      x(r, k + 4) = a * d;
      x(r, k + 5) = a * s;
      x(r, k + 6) = d * s;
      x(r, k + 7) = a * d * s;
      y(r) = data.outcomes()(row, static_cast<Eigen::Index>(period ? post : pre));
    }
  }
  const auto fit = fit_least_squares(x.rightCols(cols - 1), y);
  const Eigen::VectorXd resid = y - x * fit.coefficients;
  const Eigen::Index target = cols - 1;
  e.estimate = fit.coefficients(target);

  // Row of (X'X)^{-1} for the triple interaction; beta_hat - beta = sum h_i e_i.
  const Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(cols);
  unit(target) = 1.0;
  const Eigen::VectorXd h_row = gram.ldlt().solve(unit);
  const double nd = static_cast<double>(obs);
  const double hc1 = std::sqrt(nd / static_cast<double>(obs - cols));
  Eigen::VectorXd eta = nd * hc1 * ((x * h_row).array() * resid.array()).matrix();

  e.influence.population = p.cells.population;
  e.influence.observation_level = true;
  e.influence.rows.resize(static_cast<std::size_t>(obs));
  for (Eigen::Index u = 0; u < units; ++u) {
    e.influence.rows[static_cast<std::size_t>(2 * u)] = p.cells.rows[static_cast<std::size_t>(u)];
    e.influence.rows[static_cast<std::size_t>(2 * u + 1)] = p.cells.rows[static_cast<std::size_t>(u)];
  }
  e.influence.values = std::move(eta);
  e.n = static_cast<std::size_t>(obs);
  if (fit.ridge_active) e.diagnostics.warnings.push_back("3WFE design is ill-conditioned; ridge 1e-10 applied");
  e.diagnostics.notes.push_back("HC1 standard errors; influence values are per unit-period observation");
  attach_inference(e);
  return e;
}

EffectEstimate estimate_datt_adjusted(const PanelDataset& data, int g, int t, const DesignSpec& spec,
                                      Estimator method) {
  if (method != Estimator::RA && method != Estimator::IPW && method != Estimator::DR) {
    throw UsageError("adjusted DATT needs method ra, ipw or dr");
  }
  auto p = detail::make_problem(data, g, t, spec);
  EstimateDiagnostics diag;
  const bool use_ps = method != Estimator::RA;
  Eigen::MatrixXd probs;
  if (use_ps) {
    probs = detail::fit_propensity(p, spec, {static_cast<int>(Cell::ComparisonFocal), static_cast<int>(Cell::ComparisonOther)},
                                   diag)
                .probs;
  }
  auto e = detail::start_estimate(p, spec, Estimand::DATT, method);
  e.diagnostics = diag;
  const auto n = static_cast<Eigen::Index>(p.size());
  const double nd = static_cast<double>(n);

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double max_weight = 0.0;
  for (int side = 0; side < 2; ++side) {
    const Cell treated = side == 0 ? Cell::TreatedFocal : Cell::TreatedOther;
    const Cell control = side == 0 ? Cell::ComparisonFocal : Cell::ComparisonOther;
    const double sign = side == 0 ? 1.0 : -1.0;
    const Eigen::VectorXd d = p.indicator(treated);
    const Eigen::VectorXd c = p.indicator(control);
    const Eigen::VectorXd wt = d / d.mean();

    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    detail::FittedOutcome fit;
    const auto control_rows = detail::positions(p, control);
    if (method != Estimator::IPW) {
      fit = detail::fit_outcome(p, control_rows, std::string("dY | ") + describe(control));
      m = fit.fitted;
    }
    const Eigen::VectorXd r = p.y - m;
    const double tau_t = (wt.array() * r.array()).mean();
    Eigen::VectorXd part = wt.array() * (r.array() - tau_t);
    double att = tau_t;
    if (method == Estimator::RA) {
      part += detail::regression_adjustment(p, control_rows, fit, wt);
    } else {
      // Comparison units reweighted by the pairwise odds pi_{g,sigma} / pi_{c,sigma}.
      const int tc = static_cast<int>(treated);
      const int cc = static_cast<int>(control);
      Eigen::VectorXd raw = Eigen::VectorXd::Zero(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        if (c(k) > 0.0) raw(k) = probs(k, tc) / probs(k, cc);
      }
      const Eigen::VectorXd wc = raw / raw.mean();
      max_weight = std::max(max_weight, wc.maxCoeff());
      const double tau_c = (wc.array() * r.array()).mean();
      att -= tau_c;
      part -= (wc.array() * (r.array() - tau_c)).matrix();
    }
    max_weight = std::max(max_weight, wt.maxCoeff());
    e.estimate += sign * att;
    eta += sign * part;
  }
  e.diagnostics.max_weight = max_weight;
  if (method == Estimator::IPW) {
    e.diagnostics.notes.push_back("IPW influence values ignore propensity estimation (conservative)");
  }
  (void)nd;
  detail::set_influence(e, p, std::move(eta));
  attach_inference(e);
  return e;
}

EffectEstimate estimate_datt(const PanelDataset& data, int g, int t, const DesignSpec& spec) {
  switch (spec.estimator) {
    case Estimator::Unadjusted:
      return estimate_datt_unadjusted(data, g, t, spec);
    case Estimator::ThreeWFE:
      return estimate_datt_3wfe(data, g, t, spec);
    default:
      return estimate_datt_adjusted(data, g, t, spec, spec.estimator);
  }
}

double cluster_weighted_gap_did(const PanelDataset& data, const std::vector<std::string>& clusters, int g, int t,
                                const DesignSpec& spec) {
  if (clusters.size() != data.size()) throw UsageError("one cluster label per unit is required");
  const auto p = detail::make_problem(data, g, t, spec);
  struct Acc {
    double sum[2] = {0.0, 0.0};
    double count[2] = {0.0, 0.0};
  };
  // Per group (treated / comparison), per cluster, per subgroup.
  std::map<std::string, Acc> groups[2];
  for (std::size_t k = 0; k < p.size(); ++k) {
    const int group = p.cells.treated(k) ? 0 : 1;
    const int sub = p.cells.focal_subgroup(k) ? 0 : 1;
    auto& acc = groups[group][clusters[p.cells.rows[k]]];
    acc.sum[sub] += p.y(static_cast<Eigen::Index>(k));
    acc.count[sub] += 1.0;
  }
  double out = 0.0;
  for (int group = 0; group < 2; ++group) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& [name, acc] : groups[group]) {
      if (acc.count[0] == 0.0 || acc.count[1] == 0.0) {
        throw DegenerateDesignError("cluster '" + name + "' lacks one of the two subgroups");
      }
      const double size = acc.count[0] + acc.count[1];
      num += size * (acc.sum[0] / acc.count[0] - acc.sum[1] / acc.count[1]);
      den += size;
    }
    out += (group == 0 ? 1.0 : -1.0) * num / den;
  }
  return out;
}

}  // namespace tripdiff
