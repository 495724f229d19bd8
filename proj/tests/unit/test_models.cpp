#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "error.hpp"
#include "models.hpp"
#include "rng.hpp"

using namespace tripdiff;

namespace {

std::vector<int> labels_from_counts(std::array<int, 4> counts) {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), static_cast<std::size_t>(counts[c]), c);
  return labels;
}

// Covariates and labels drawn from a known multinomial logit.
struct LogitSample {
  Eigen::MatrixXd x;
  std::vector<int> labels;
};

LogitSample logit_sample(std::uint64_t seed, int n, int k, double slope) {
  Philox4x32 rng(seed);
  LogitSample s{Eigen::MatrixXd(n, k), {}};
  for (int i = 0; i < n; ++i) {
    double eta[4] = {0, 0, 0, 0};
    for (int j = 0; j < k; ++j) {
      s.x(i, j) = rng.normal();
      for (int c = 0; c < 3; ++c) eta[c] += slope * (c + 1 - j) * s.x(i, j) / k;
    }
    double denom = 0;
    for (double e : eta) denom += std::exp(e);
    double u = rng.uniform() * denom;
    int label = 3;
    for (int c = 0; c < 4; ++c) {
      u -= std::exp(eta[c]);
      if (u < 0) {
        label = c;
        break;
      }
    }
    s.labels.push_back(label);
  }
  return s;
}

PropensityModel zero_model(int k) {
  PropensityModel m;
  m.coefficients = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, k + 1);
  return m;
}

}  // namespace

TEST_CASE("logit intercept-only recovers cell frequencies") {
  LogitSettings exact;
  exact.ridge = 0.0;
  for (auto counts : {std::array<int, 4>{25, 25, 25, 25}, std::array<int, 4>{10, 20, 30, 40}}) {
    const auto labels = labels_from_counts(counts);
    const Eigen::MatrixXd x(labels.size(), 0);
    const auto model = fit_multinomial_logit(x, labels, exact);
    const auto p = predict_cell_probabilities(model, Eigen::RowVectorXd(0));
    for (int c = 0; c < 4; ++c) CHECK(p[c] == doctest::Approx(counts[c] / 100.0).epsilon(1e-12));
    // default ridge stays within rounding of the frequencies
    const auto ridged = predict_cell_probabilities(fit_multinomial_logit(x, labels), Eigen::RowVectorXd(0));
    for (int c = 0; c < 4; ++c) CHECK(std::abs(ridged[c] - counts[c] / 100.0) < 1e-6);
  }
}

TEST_CASE("logit on a binary covariate matches within-stratum frequencies") {
  Philox4x32 rng(17);
  const int n = 4000;
  Eigen::MatrixXd x(n, 1);
  std::vector<int> labels(n);
  std::array<std::array<double, 4>, 2> freq{};
  std::array<double, 2> total{};
  for (int i = 0; i < n; ++i) {
    const int b = rng.bernoulli(0.4) ? 1 : 0;
    x(i, 0) = b;
    const double u = rng.uniform();
    const int y = b == 0 ? (u < 0.1 ? 0 : u < 0.3 ? 1 : u < 0.6 ? 2 : 3) : (u < 0.4 ? 0 : u < 0.6 ? 1 : u < 0.7 ? 2 : 3);
    labels[i] = y;
    freq[b][y] += 1;
    total[b] += 1;
  }
  const auto model = fit_multinomial_logit(x, labels);
  for (int b = 0; b < 2; ++b) {
    Eigen::RowVectorXd xb(1);
    xb << b;
    const auto p = predict_cell_probabilities(model, xb);
    for (int c = 0; c < 4; ++c) CHECK(std::abs(p[c] - freq[b][c] / total[b]) < 1e-6);
  }
}

TEST_CASE("logit prediction at fixed coefficients") {
  auto m = zero_model(2);
  Eigen::RowVectorXd x(2);
  x << 0.3, -1.2;
  for (double p : predict_cell_probabilities(m, x)) CHECK(p == doctest::Approx(0.25));
  m.coefficients(0, 0) = std::log(2.0);
  const auto p = predict_cell_probabilities(m, x);
  CHECK(p[0] == doctest::Approx(0.4));
  CHECK(p[1] == doctest::Approx(0.2));
  CHECK(p[2] == doctest::Approx(0.2));
  CHECK(p[3] == doctest::Approx(0.2));
  // extreme indices stay normalized
  m.coefficients << 700, 1, -1, -700, 0, 2, 30, 5, 5;
  const auto q = predict_cell_probabilities(m, x);
  CHECK(std::abs(q[0] + q[1] + q[2] + q[3] - 1.0) < 1e-12);
  CHECK_THROWS_AS(predict_cell_probabilities(m, Eigen::RowVectorXd(3)), UsageError);
}

TEST_CASE("logit fit: score equations, monotone trace, refit determinism") {
  const auto s = logit_sample(5, 3000, 3, 0.8);
  const auto model = fit_multinomial_logit(s.x, s.labels);
  const auto& d = model.diagnostics;
  CHECK(d.converged);
  CHECK(d.gradient_norm < 1e-8);
  for (std::size_t i = 1; i < d.loglik_trace.size(); ++i) {
    CHECK(d.loglik_trace[i] >= d.loglik_trace[i - 1] - 1e-12 * std::abs(d.loglik_trace[i - 1]));
  }
  // intercept score: fitted probabilities average to the observed shares
  const auto p = predict_cell_probabilities(model, s.x);
  for (int c = 0; c < 4; ++c) {
    double observed = 0;
    for (int y : s.labels) observed += y == c;
    CHECK(std::abs(p.col(c).mean() - observed / s.labels.size()) < 1e-7);
  }
  const auto again = fit_multinomial_logit(s.x, s.labels);
  CHECK(again.coefficients == model.coefficients);
  CHECK(multinomial_loglik(model, s.x, s.labels) < 0.0);
}

TEST_CASE("logit fit is invariant to affine rescaling of covariates") {
  const auto s = logit_sample(9, 2000, 2, 1.0);
  Eigen::MatrixXd scaled = s.x;
  scaled.col(0) = scaled.col(0) * 1000.0 + Eigen::VectorXd::Constant(scaled.rows(), 50.0);
  scaled.col(1) *= 0.001;
  const auto a = predict_cell_probabilities(fit_multinomial_logit(s.x, s.labels), s.x);
  const auto b = predict_cell_probabilities(fit_multinomial_logit(scaled, s.labels), scaled);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("logit failure modes") {
  const auto s = logit_sample(2, 500, 2, 1.0);
  LogitSettings tight;
  tight.max_iter = 1;
  tight.tol = 1e-15;
  try {
    fit_multinomial_logit(s.x, s.labels, tight);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& e) {
    CHECK(e.gradient_norm() > 0.0);
  }
  // category 0 never observed
  CHECK_THROWS_AS(fit_multinomial_logit(Eigen::MatrixXd(3, 0), {1, 2, 3}), DegenerateDesignError);
  CHECK_THROWS_AS(fit_multinomial_logit(Eigen::MatrixXd(8, 0), {0, 1, 2, 3, 0, 1, 2, 9}), UsageError);
}

TEST_CASE("logit flags quasi-separation") {
  // category 0 sits entirely above x = 3
  const int n = 200;
  Eigen::MatrixXd x(n, 1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i < 20 ? 4.0 + 0.01 * i : -1.0 + 0.01 * i;
    labels[i] = i < 20 ? 0 : 1 + i % 3;
  }
  LogitSettings settings;
  settings.ridge = 0.0;
  settings.max_iter = 1000;
  settings.tol = 1e-14;
  const auto model = fit_multinomial_logit(x, labels, settings);
  CHECK(model.diagnostics.quasi_separation);
  CHECK_FALSE(model.diagnostics.warnings.empty());
}

TEST_CASE("least squares exact line") {
  Eigen::MatrixXd x(5, 1);
  x << 0, 1, 2, 3, 4;
  const Eigen::VectorXd y = (3.0 + 2.0 * x.col(0).array()).matrix();
  const auto m = fit_least_squares(x, y);
  CHECK(m.coefficients(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m.coefficients(1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m.residual_variance == doctest::Approx(0.0));
  CHECK(m.rank == 2);
}

TEST_CASE("least squares intercept-only is the mean") {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 10;
  const auto m = fit_least_squares(Eigen::MatrixXd(4, 0), y);
  CHECK(m.coefficients(0) == doctest::Approx(4.0));
  Eigen::VectorXd w(4);
  w << 1, 1, 1, 0;
  CHECK(fit_least_squares(Eigen::MatrixXd(4, 0), y, w).coefficients(0) == doctest::Approx(2.0));
}

TEST_CASE("least squares matches a QR oracle and its invariances") {
  Philox4x32 rng(21);
  const int n = 300, k = 4;
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) x(i, j) = rng.normal() * (j + 1);
    y(i) = 1.0 - x(i, 0) + 0.5 * x(i, 3) + rng.normal();
    w(i) = 0.5 + rng.uniform();
  }
  const Eigen::MatrixXd design = with_intercept(x);
  const Eigen::VectorXd oracle = design.colPivHouseholderQr().solve(y);
  const auto m = fit_least_squares(x, y);
  CHECK((m.coefficients - oracle).cwiseAbs().maxCoeff() < 1e-8);

  const auto constant = fit_least_squares(x, y, Eigen::VectorXd::Constant(n, 3.7));
  CHECK((constant.coefficients - m.coefficients).cwiseAbs().maxCoeff() < 1e-10);

  // weighted oracle: scale rows by sqrt(w)
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::VectorXd woracle = (sw.asDiagonal() * design).colPivHouseholderQr().solve(sw.asDiagonal() * y);
  CHECK((fit_least_squares(x, y, w).coefficients - woracle).cwiseAbs().maxCoeff() < 1e-8);

  // duplicating every row leaves the coefficients unchanged
  Eigen::MatrixXd x2(2 * n, k);
  Eigen::VectorXd y2(2 * n);
  x2 << x, x;
  y2 << y, y;
  CHECK((fit_least_squares(x2, y2).coefficients - m.coefficients).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("least squares prediction and errors") {
  OutcomeModel m;
  m.coefficients = Eigen::Vector2d(1.0, 2.0);
  Eigen::RowVectorXd x(1);
  x << 3.0;
  CHECK(predict_outcome(m, x) == 7.0);
  CHECK_THROWS_AS(predict_outcome(m, Eigen::RowVectorXd(2)), UsageError);

  Eigen::MatrixXd collinear(6, 2);
  collinear << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
  Eigen::VectorXd y(6);
  y << 1, 2, 3, 4, 5, 7;
  try {
    fit_least_squares(collinear, y);
    FAIL("expected a collinearity error");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("x1") != std::string::npos);
    CHECK(what.find("x2") != std::string::npos);
  }
  CHECK_THROWS_AS(fit_least_squares(Eigen::MatrixXd(1, 1), Eigen::VectorXd(1)), DegenerateDesignError);
}
