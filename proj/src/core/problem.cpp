#include "problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"

namespace tripdiff::detail {

std::vector<int> Problem::labels() const {
  std::vector<int> out(cells.cells.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<int>(cells.cells[k]);
  return out;
}

Eigen::VectorXd Problem::indicator(Cell cell) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) out(static_cast<Eigen::Index>(k)) = cells.cells[k] == cell ? 1.0 : 0.0;
  return out;
}

Eigen::VectorXd Problem::indicator(Cell cell, bool post) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) {
    const bool hit = cells.cells[k] == cell && (cells.post[k] != 0) == post;
    out(static_cast<Eigen::Index>(k)) = hit ? 1.0 : 0.0;
  }
  return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(rows[k]));
  return out;
}

std::vector<std::size_t> positions(const Problem& p, Cell cell) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p.cells.cells[k] == cell) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> positions(const Problem& p, Cell cell, bool post) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p.cells.cells[k] == cell && (p.cells.post[k] != 0) == post) out.push_back(k);
  }
  return out;
}

Problem make_problem(const PanelDataset& data, int g, int t, const DesignSpec& spec) {
  spec.validate();
  Problem p;
  p.cells = build_cells(data, g, t, spec);
  const auto pre = data.time_index(g - 1);
  const auto post = data.time_index(t);
  p.y.resize(static_cast<Eigen::Index>(p.size()));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(p.cells.rows[k]);
    p.y(static_cast<Eigen::Index>(k)) = data.outcomes()(i, static_cast<Eigen::Index>(post)) -
                                        data.outcomes()(i, static_cast<Eigen::Index>(pre));
  }
  p.ps_x = select_rows(data.covariate_columns(spec.propensity_covariates()), p.cells.rows);
  p.or_x = select_rows(data.covariate_columns(spec.outcome_covariates()), p.cells.rows);
  const auto* ids = &data.unit_ids();
  p.name_of = [ids](std::size_t row) { return "unit '" + (*ids)[row] + "'"; };
  return p;
}

Problem make_problem(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec) {
  spec.validate();
  Problem p;
  p.cells = build_cells(data, g, t, spec);
  p.y = select_rows(data.outcomes(), p.cells.rows);
  p.ps_x = select_rows(data.covariate_columns(spec.propensity_covariates()), p.cells.rows);
  p.or_x = select_rows(data.covariate_columns(spec.outcome_covariates()), p.cells.rows);
  p.name_of = [](std::size_t row) { return "observation " + std::to_string(row + 1); };
  return p;
}

namespace {

void keep_positions(Problem& p, const std::vector<std::size_t>& keep) {
  CellIndicators next = p.cells;
  next.rows.clear();
  next.cells.clear();
  next.post.clear();
  next.counts = {};
  for (std::size_t k : keep) {
    next.rows.push_back(p.cells.rows[k]);
    next.cells.push_back(p.cells.cells[k]);
    if (!p.cells.post.empty()) next.post.push_back(p.cells.post[k]);
    ++next.counts[static_cast<std::size_t>(p.cells.cells[k])];
  }
  for (std::size_t k = 0, j = 0; k < p.size(); ++k) {
    if (j < keep.size() && keep[j] == k) {
      ++j;
    } else {
      next.excluded.push_back(p.cells.rows[k]);
    }
  }
  std::sort(next.excluded.begin(), next.excluded.end());
  p.y = select_rows(p.y, keep);
  p.ps_x = select_rows(p.ps_x, keep);
  p.or_x = select_rows(p.or_x, keep);
  p.cells = std::move(next);
  for (std::size_t c = 0; c < kCellCount; ++c) {
    if (p.cells.counts[c] == 0) {
      throw DegenerateDesignError("trimming emptied cell " + std::string(describe(static_cast<Cell>(c))));
    }
  }
}

std::vector<std::size_t> violations(const Eigen::MatrixXd& probs, const std::vector<int>& columns, double eps) {
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < probs.rows(); ++k) {
    for (int c : columns) {
      if (probs(k, c) < eps) {
        out.push_back(static_cast<std::size_t>(k));
        break;
      }
    }
  }
  return out;
}

FittedPropensity fit_once(const Problem& p) {
  FittedPropensity fp;
  fp.model = fit_multinomial_logit(p.ps_x, p.labels());
  fp.probs = predict_cell_probabilities(fp.model, p.ps_x);
  return fp;
}

[[noreturn]] void throw_trim(const Problem& p, const std::vector<std::size_t>& bad, double eps) {
  std::ostringstream msg;
  msg << bad.size() << " row(s) have a fitted cell probability below the overlap threshold "
      << csv::format_double(eps) << " (";
  for (std::size_t j = 0; j < bad.size() && j < 5; ++j) {
    msg << (j ? ", " : "") << p.name_of(p.cells.rows[bad[j]]);
  }
  if (bad.size() > 5) msg << ", ...";
  msg << "); pass --trim to drop them";
  throw TrimError(bad.size(), msg.str());
}

}  // namespace

FittedPropensity fit_propensity(Problem& problem, const DesignSpec& spec, const std::vector<int>& denominators,
                                EstimateDiagnostics& diag) {
  FittedPropensity fp = fit_once(problem);
  auto bad = violations(fp.probs, denominators, spec.trim_threshold);
  if (!bad.empty() && !spec.trim_drop) throw_trim(problem, bad, spec.trim_threshold);
  // Dropping rows moves the fit, which can push a few more rows under the
  // threshold; a handful of rounds settles it in practice.
  constexpr int kTrimRounds = 5;
  for (int round = 0; !bad.empty(); ++round) {
    if (round == kTrimRounds) throw_trim(problem, bad, spec.trim_threshold);
    std::vector<std::size_t> keep;
    for (std::size_t k = 0, j = 0; k < problem.size(); ++k) {
      if (j < bad.size() && bad[j] == k) {
        ++j;
      } else {
        keep.push_back(k);
      }
    }
    diag.trimmed += bad.size();
    keep_positions(problem, keep);
    fp = fit_once(problem);
    bad = violations(fp.probs, denominators, spec.trim_threshold);
  }
  if (diag.trimmed > 0) {
    diag.warnings.push_back("dropped " + std::to_string(diag.trimmed) +
                            " row(s) violating overlap and refit the propensity model");
  }
  diag.models_converged = fp.model.diagnostics.converged;
  diag.logit_iterations = fp.model.diagnostics.iterations;
  diag.logit_gradient_norm = fp.model.diagnostics.gradient_norm;
  for (const auto& w : fp.model.diagnostics.warnings) diag.warnings.push_back("propensity model: " + w);
  return fp;
}

FittedOutcome fit_outcome(const Problem& p, const std::vector<std::size_t>& on, const std::string& target) {
  FittedOutcome fo;
  fo.model = fit_least_squares(select_rows(p.or_x, on), select_rows(p.y, on));
  fo.model.target = target;
  fo.fitted = predict_outcome(fo.model, p.or_x);
  return fo;
}

EffectEstimate start_estimate(const Problem& p, const DesignSpec& spec, Estimand estimand, Estimator estimator) {
  EffectEstimate e;
  e.estimand = estimand;
  e.estimator = estimator;
  e.comparison = p.cells.comparison;
  e.g = p.cells.g;
  e.t = p.cells.t;
  e.focal = p.cells.focal;
  e.other = p.cells.other;
  e.repeated_cross_section = !p.cells.post.empty();
  e.level = spec.level;
  e.n = p.size();
  e.cell_counts = p.cells.counts;
  return e;
}

void set_influence(EffectEstimate& e, const Problem& p, Eigen::VectorXd values) {
  e.influence.rows = p.cells.rows;
  e.influence.population = p.cells.population;
  e.influence.observation_level = false;
  e.influence.values = std::move(values);
}

Eigen::VectorXd regression_adjustment(const Problem& p, const std::vector<std::size_t>& on,
                                      const FittedOutcome& fit, const Eigen::VectorXd& weights) {
  const Eigen::Index n = static_cast<Eigen::Index>(p.size());
  const Eigen::MatrixXd design = with_intercept(p.or_x);
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd a = design.transpose() * weights * inv_n;
  const Eigen::MatrixXd d = select_rows(design, on);
  const Eigen::MatrixXd gram = d.transpose() * d * inv_n;
  const Eigen::VectorXd h = gram.ldlt().solve(a);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < on.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(on[j]);
    const double resid = p.y(k) - fit.fitted(k);
    out(k) = -design.row(k).dot(h) * resid;
  }
  return out;
}

}  // namespace tripdiff::detail
