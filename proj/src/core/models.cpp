#include "models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csv.hpp"
#include "error.hpp"

namespace tripdiff {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& covariates) {
  Eigen::MatrixXd design(covariates.rows(), covariates.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(covariates.cols()) = covariates;
  return design;
}

namespace {

constexpr int kCategories = 4;
constexpr int kFree = 3;  // non-base categories
constexpr double kSeparationFloor = 1e-12;

// Softmax of (eta_0, eta_1, eta_2, 0); returns log-normalizer.
double softmax(const double* eta, double* prob) {
  double m = 0.0;
  for (int c = 0; c < kFree; ++c) m = std::max(m, eta[c]);
  double sum = std::exp(-m);
  double e[kFree];
  for (int c = 0; c < kFree; ++c) {
    e[c] = std::exp(eta[c] - m);
    sum += e[c];
  }
  for (int c = 0; c < kFree; ++c) prob[c] = e[c] / sum;
  prob[kFree] = std::exp(-m) / sum;
  return m + std::log(sum);
}

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // zero for constant columns

  explicit Standardizer(const Eigen::MatrixXd& x) : mean(x.cols()), sd(x.cols()) {
    const double n = static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      mean(j) = x.col(j).sum() / n;
      const double ss = (x.col(j).array() - mean(j)).square().sum();
      sd(j) = std::sqrt(ss / n);
      if (!(sd(j) > 1e-300)) sd(j) = 0.0;
    }
  }

  Eigen::MatrixXd design(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (sd(j) > 0.0) {
        z.col(j + 1) = (x.col(j).array() - mean(j)) / sd(j);
      } else {
        z.col(j + 1).setZero();
      }
    }
    return z;
  }
};

struct LogitState {
  double objective = 0.0;  // mean log-likelihood minus ridge penalty
  Eigen::VectorXd gradient;
  Eigen::MatrixXd neg_hessian;
  double min_prob = 1.0;
};

// theta is stacked category-major: theta[c * p + j].
LogitState evaluate(const Eigen::MatrixXd& z, const std::vector<int>& labels, const Eigen::VectorXd& theta,
                    double ridge, bool with_derivatives) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  const Eigen::Index dim = kFree * p;
  LogitState state;
  if (with_derivatives) {
    state.gradient = Eigen::VectorXd::Zero(dim);
    state.neg_hessian = Eigen::MatrixXd::Zero(dim, dim);
  }
  double loglik = 0.0;
  double eta[kFree];
  double prob[kCategories];
  Eigen::Matrix3d w;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < kFree; ++c) eta[c] = z.row(i).dot(theta.segment(c * p, p));
    const double lse = softmax(eta, prob);
    const int y = labels[static_cast<std::size_t>(i)];
    loglik += (y < kFree ? eta[y] : 0.0) - lse;
    for (int c = 0; c < kCategories; ++c) state.min_prob = std::min(state.min_prob, prob[c]);
    if (!with_derivatives) continue;
    for (int c = 0; c < kFree; ++c) {
      const double resid = (y == c ? 1.0 : 0.0) - prob[c];
      state.gradient.segment(c * p, p).noalias() += resid * z.row(i).transpose();
      for (int d = 0; d < kFree; ++d) w(c, d) = (c == d ? prob[c] : 0.0) - prob[c] * prob[d];
    }
    const Eigen::MatrixXd zz = z.row(i).transpose() * z.row(i);
    for (int c = 0; c < kFree; ++c) {
      for (int d = 0; d <= c; ++d) state.neg_hessian.block(c * p, d * p, p, p).noalias() += w(c, d) * zz;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  state.objective = loglik * inv_n - ridge * theta.squaredNorm();
  if (with_derivatives) {
    for (int c = 0; c < kFree; ++c) {
      for (int d = 0; d < c; ++d) {
        state.neg_hessian.block(d * p, c * p, p, p) = state.neg_hessian.block(c * p, d * p, p, p).transpose();
      }
    }
    state.gradient = state.gradient * inv_n - 2.0 * ridge * theta;
    state.neg_hessian *= inv_n;
    state.neg_hessian.diagonal().array() += 2.0 * ridge;
  }
  return state;
}

}  // namespace

PropensityModel fit_multinomial_logit(const Eigen::MatrixXd& covariates, const std::vector<int>& labels,
                                      const LogitSettings& settings) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index p = covariates.cols() + 1;
  if (static_cast<std::size_t>(n) != labels.size()) throw UsageError("label count does not match covariate rows");
  if (n < kCategories) throw DegenerateDesignError("multinomial logit needs at least 4 observations");
  std::array<std::size_t, kCategories> counts{};
  for (int y : labels) {
    if (y < 0 || y >= kCategories) throw UsageError("category label outside 0..3");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < kCategories; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw DegenerateDesignError("multinomial logit: category " + std::to_string(c) + " has no observations");
    }
  }

  const Standardizer standardizer(covariates);
  const Eigen::MatrixXd z = standardizer.design(covariates);

  // Start from the intercept-only MLE: log frequency ratios against the base.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(kFree * p);
  for (int c = 0; c < kFree; ++c) {
    theta(c * p) = std::log(static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                            static_cast<double>(counts[kFree]));
  }

  PropensityModel model;
  auto& diag = model.diagnostics;
  diag.ridge_active = settings.ridge > 0.0;
  LogitState state = evaluate(z, labels, theta, settings.ridge, true);
  diag.loglik_trace.push_back(state.objective);
  diag.gradient_norm = state.gradient.lpNorm<Eigen::Infinity>();

  while (diag.gradient_norm >= settings.tol && diag.iterations < settings.max_iter) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(state.neg_hessian);
    if (ldlt.info() != Eigen::Success) {
      throw NumericalError("multinomial logit: Hessian factorization failed");
    }
    const Eigen::VectorXd step = ldlt.solve(state.gradient);
    ++diag.iterations;
    // Close to the optimum the predicted gain drops below the resolution of
    // the objective; the full step is then judged by the score instead.
    const double predicted_gain = 0.5 * step.dot(state.gradient);
    if (predicted_gain < 1e-13 * (1.0 + std::abs(state.objective))) {
      LogitState full = evaluate(z, labels, theta + step, settings.ridge, true);
      if (std::isfinite(full.objective) && full.gradient.lpNorm<Eigen::Infinity>() < diag.gradient_norm) {
        theta += step;
        state = std::move(full);
        diag.loglik_trace.push_back(state.objective);
        diag.gradient_norm = state.gradient.lpNorm<Eigen::Infinity>();
        continue;
      }
    }
    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      Eigen::VectorXd candidate = theta + scale * step;
      LogitState trial = evaluate(z, labels, candidate, settings.ridge, false);
      if (std::isfinite(trial.objective) && trial.objective >= state.objective) {
        theta = std::move(candidate);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no ascent direction left at machine precision
    state = evaluate(z, labels, theta, settings.ridge, true);
    diag.loglik_trace.push_back(state.objective);
    diag.gradient_norm = state.gradient.lpNorm<Eigen::Infinity>();
  }
  diag.converged = diag.gradient_norm < settings.tol;
  if (!diag.converged) {
    throw ConvergenceError(diag.gradient_norm,
                           "multinomial logit did not converge after " + std::to_string(diag.iterations) +
                               " iterations (gradient max-norm " + csv::format_double(diag.gradient_norm) + ")");
  }
  if (state.min_prob < kSeparationFloor) {
    diag.quasi_separation = true;
    diag.warnings.push_back("quasi-separation: a fitted cell probability is below 1e-12");
  }

  // Map standardized coefficients back to the original covariate scale.
  model.coefficients.resize(kFree, p);
  for (int c = 0; c < kFree; ++c) {
    double intercept = theta(c * p);
    for (Eigen::Index j = 0; j + 1 < p; ++j) {
      const double sd = standardizer.sd(j);
      const double slope = sd > 0.0 ? theta(c * p + j + 1) / sd : 0.0;
      model.coefficients(c, j + 1) = slope;
      intercept -= slope * standardizer.mean(j);
    }
    model.coefficients(c, 0) = intercept;
  }
  return model;
}

std::array<double, 4> predict_cell_probabilities(const PropensityModel& model,
                                                 const Eigen::RowVectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.arity()) {
    throw UsageError("covariate arity " + std::to_string(x.size()) + " does not match propensity model arity " +
                     std::to_string(model.arity()));
  }
  double eta[kFree];
  for (int c = 0; c < kFree; ++c) {
    eta[c] = model.coefficients(c, 0) + model.coefficients.row(c).tail(x.size()).dot(x);
  }
  std::array<double, 4> prob{};
  softmax(eta, prob.data());
  return prob;
}

Eigen::MatrixXd predict_cell_probabilities(const PropensityModel& model, const Eigen::MatrixXd& covariates) {
  Eigen::MatrixXd out(covariates.rows(), kCategories);
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    const auto prob = predict_cell_probabilities(model, Eigen::RowVectorXd(covariates.row(i)));
    for (int c = 0; c < kCategories; ++c) out(i, c) = prob[static_cast<std::size_t>(c)];
  }
  return out;
}

double multinomial_loglik(const PropensityModel& model, const Eigen::MatrixXd& covariates,
                          const std::vector<int>& labels) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    const auto prob = predict_cell_probabilities(model, Eigen::RowVectorXd(covariates.row(i)));
    ll += std::log(std::max(prob[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])], kSeparationFloor));
  }
  return ll;
}

namespace {

constexpr double kRidgeLeastSquares = 1e-10;
constexpr double kCollinearRcond = 1e-14;

std::string column_label(Eigen::Index j) { return j == 0 ? "intercept" : "x" + std::to_string(j); }

}  // namespace

OutcomeModel fit_least_squares(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index p = covariates.cols() + 1;
  if (y.size() != n) throw UsageError("least squares: target length does not match design rows");
  if (weights.size() != 0 && weights.size() != n) throw UsageError("least squares: weight length mismatch");
  if (n < p) {
    throw DegenerateDesignError("least squares: " + std::to_string(n) + " rows for " + std::to_string(p) +
                                " coefficients");
  }
  Eigen::VectorXd w = weights.size() == 0 ? Eigen::VectorXd::Ones(n) : weights;
  if ((w.array() < 0.0).any() || !w.allFinite()) throw UsageError("least squares: weights must be finite and >= 0");

  const Eigen::MatrixXd design = with_intercept(covariates);
  const Eigen::MatrixXd weighted = design.array().colwise() * w.array();
  Eigen::MatrixXd gram = design.transpose() * weighted;
  Eigen::VectorXd rhs = weighted.transpose() * y;

  // Equilibrate to unit diagonal before judging conditioning.
  Eigen::VectorXd scale = gram.diagonal().cwiseSqrt();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(scale(j) > 0.0)) {
      throw NumericalError("least squares: design column " + column_label(j) + " is identically zero");
    }
  }
  const Eigen::VectorXd inv_scale = scale.cwiseInverse();
  Eigen::MatrixXd equil = inv_scale.asDiagonal() * gram * inv_scale.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(equil);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  const double rcond = lmax > 0.0 ? lmin / lmax : 0.0;

  OutcomeModel model;
  if (rcond < kCollinearRcond) {
    const Eigen::VectorXd v = eig.eigenvectors().col(0);
    std::string cols;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::abs(v(j)) > 0.05) cols += (cols.empty() ? "" : ", ") + column_label(j);
    }
    throw NumericalError("least squares: collinear design columns (" + cols + ")");
  }
  if (rcond < 1e-10) {
    equil.diagonal().array() += kRidgeLeastSquares;
    model.ridge_active = true;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(equil);
  if (llt.info() != Eigen::Success) throw NumericalError("least squares: normal equations are not positive definite");
  model.coefficients = inv_scale.asDiagonal() * llt.solve(inv_scale.asDiagonal() * rhs);

  const Eigen::VectorXd resid = y - design * model.coefficients;
  const double ssr = (w.array() * resid.array().square()).sum();
  model.rank = static_cast<std::size_t>(p);
  model.observations = static_cast<std::size_t>(n);
  model.residual_variance = n > p ? ssr / static_cast<double>(n - p) : 0.0;
  return model;
}

double predict_outcome(const OutcomeModel& model, const Eigen::RowVectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.arity()) {
    throw UsageError("covariate arity " + std::to_string(x.size()) + " does not match outcome model arity " +
                     std::to_string(model.arity()));
  }
  return model.coefficients(0) + model.coefficients.tail(x.size()).dot(x);
}

Eigen::VectorXd predict_outcome(const OutcomeModel& model, const Eigen::MatrixXd& covariates) {
  if (static_cast<std::size_t>(covariates.cols()) != model.arity()) {
    throw UsageError("covariate arity " + std::to_string(covariates.cols()) +
                     " does not match outcome model arity " + std::to_string(model.arity()));
  }
  Eigen::VectorXd out = (covariates * model.coefficients.tail(covariates.cols())).array() + model.coefficients(0);
  return out;
}

}  // namespace tripdiff
