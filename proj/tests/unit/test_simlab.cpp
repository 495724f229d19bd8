#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"
#include "simlab.hpp"

using namespace tripdiff;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// DATT truth by summing over every support point of the built-in covariate
// generator: educ 8..20, age 20..40, white, union, whitecollar.
double enumerated_datt(const DgpSpec& spec) {
  const auto& a1 = spec.alpha_ws;
  const auto& a2 = spec.alpha_wsp;
  const auto& a3 = spec.alpha_cs;
  double num[2] = {0, 0}, den[2] = {0, 0};
  for (int educ = 8; educ <= 20; ++educ) {
    const double lo = educ == 8 ? 0.0 : normal_cdf((educ - 0.5 - 13.0) / 2.5);
    const double hi = educ == 20 ? 1.0 : normal_cdf((educ + 0.5 - 13.0) / 2.5);
    const double p_educ = hi - lo;
    const double p_union = logistic(-1.2 - 0.05 * (educ - 13.0));
    const double p_wc = logistic(-0.2 + 0.2 * (educ - 13.0));
    for (int age = 20; age <= 40; ++age) {
      const double age_c = (age - 30.0) / 10.0;
      for (int white = 0; white < 2; ++white) {
        for (int uni = 0; uni < 2; ++uni) {
          for (int wc = 0; wc < 2; ++wc) {
            const double mass = p_educ / 21.0 * (white ? 0.82 : 0.18) * (uni ? p_union : 1 - p_union) *
                                (wc ? p_wc : 1 - p_wc);
            // educ, age_c, age_c2, white, union, whitecollar
            const double x[6] = {double(educ), age_c, age_c * age_c, double(white), double(uni), double(wc)};
            double e[4] = {0, 0, 0, 0}, bx = 0;
            for (int j = 0; j < 6; ++j) {
              e[0] += a1[j] * x[j];
              e[1] += a2[j] * x[j];
              e[2] += a3[j] * x[j];
              bx += spec.beta[j] * x[j];
            }
            const double z = std::exp(e[0]) + std::exp(e[1]) + std::exp(e[2]) + 1.0;
            for (int c = 0; c < 2; ++c) {
              const double p = std::exp(e[c]) / z;
              num[c] += mass * p * bx;
              den[c] += mass * p;
            }
          }
        }
      }
    }
  }
  return num[0] / den[0] - num[1] / den[1];
}

TrialResult ok(double estimate, double se) {
  return {true, estimate, se, estimate - 1.959963984540054 * se, estimate + 1.959963984540054 * se, ""};
}

}  // namespace

TEST_CASE("misspecified covariate transform") {
  Eigen::VectorXd x(3);
  x << 0.0, 1.0, -0.5;
  const auto y = misspecify_covariates(x, 3.0);
  CHECK(y(0) == 0.0);
  CHECK(y(1) == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-14));
  CHECK(y(2) == doctest::Approx(std::log(0.5) - 0.125).epsilon(1e-14));

  Eigen::VectorXd grid(200);
  for (int i = 0; i < 200; ++i) grid(i) = -0.99 + 0.1 * i;
  for (double nu : {2.0, 3.5, 5.0}) {
    const auto g = misspecify_covariates(grid, nu);
    for (int i = 1; i < 200; ++i) CHECK(g(i) > g(i - 1));
  }
  Eigen::VectorXd bad(1);
  bad << -1.0;
  CHECK_THROWS_AS(misspecify_covariates(bad, 2.0), UsageError);
  CHECK(misspecify_covariates(x, 5, {2.0, 5.0}) == misspecify_covariates(x, 5, {2.0, 5.0}));
}

TEST_CASE("summarize_metrics") {
  SUBCASE("exact estimates") {
    std::vector<TrialResult> r(10, ok(0.3, 0.1));
    const auto row = summarize_metrics(r, std::vector<double>(10, 0.3));
    CHECK(row.avg_bias == 0.0);
    CHECK(row.rmse == 0.0);
    CHECK(row.coverage == 1.0);
    CHECK(row.ci_length == doctest::Approx(0.392).epsilon(1e-3));
    CHECK(row.mean_se == doctest::Approx(0.1));
  }
  SUBCASE("estimates one above the truth") {
    std::vector<TrialResult> r(10, ok(1.0, 0.1));
    const auto row = summarize_metrics(r, std::vector<double>(10, 0.0));
    CHECK(row.avg_bias == doctest::Approx(1.0));
    CHECK(row.median_bias == doctest::Approx(1.0));
    CHECK(row.rmse == doctest::Approx(1.0));
    CHECK(row.coverage == 0.0);
  }
  SUBCASE("failures are counted and excluded") {
    std::vector<TrialResult> r = {ok(1.0, 0.1), {}, ok(3.0, 0.1)};
    const auto row = summarize_metrics(r, {0.0, 0.0, 0.0});
    CHECK(row.failures == 1);
    CHECK(row.trials == 2);
    CHECK(row.avg_bias == 2.0);
    CHECK(row.empirical_sd == doctest::Approx(std::sqrt(2.0)));
  }
  SUBCASE("agrees with a two-pass computation on 10^4 pairs") {
    Philox4x32 rng(77);
    const std::size_t m = 10000;
    std::vector<TrialResult> r;
    std::vector<double> truth, bias;
    for (std::size_t i = 0; i < m; ++i) {
      const double t = rng.normal();
      const double e = t + 0.05 + 0.2 * rng.normal();
      r.push_back(ok(e, 0.15 + 0.1 * rng.uniform()));
      truth.push_back(t);
      bias.push_back(e - t);
    }
    double mean = 0, sq = 0, cover = 0, se = 0, mean_est = 0;
    for (std::size_t i = 0; i < m; ++i) {
      mean += bias[i];
      sq += bias[i] * bias[i];
      cover += r[i].lower <= truth[i] && truth[i] <= r[i].upper;
      se += r[i].se;
      mean_est += r[i].estimate;
    }
    mean /= m;
    mean_est /= m;
    double var = 0;
    for (const auto& x : r) var += (x.estimate - mean_est) * (x.estimate - mean_est);
    std::sort(bias.begin(), bias.end());
    const auto row = summarize_metrics(r, truth);
    CHECK(row.avg_bias == doctest::Approx(mean).epsilon(1e-12));
    CHECK(row.rmse == doctest::Approx(std::sqrt(sq / m)).epsilon(1e-12));
    CHECK(row.median_bias == doctest::Approx(0.5 * (bias[m / 2 - 1] + bias[m / 2])).epsilon(1e-12));
    CHECK(row.coverage == doctest::Approx(cover / m).epsilon(1e-12));
    CHECK(row.mean_se == doctest::Approx(se / m).epsilon(1e-12));
    CHECK(row.empirical_sd == doctest::Approx(std::sqrt(var / (m - 1))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(summarize_metrics({}, {}), UsageError);
}

TEST_CASE("trials are deterministic per seed") {
  const auto spec = default_dgp();
  const auto a = generate_trial(spec, 31);
  const auto b = generate_trial(spec, 31);
  CHECK(a.panel == b.panel);
  CHECK(a.nu == b.nu);
  CHECK_FALSE(a.panel == generate_trial(spec, 32).panel);
  CHECK(a.nu >= 2.0);
  CHECK(a.nu <= 5.0);
  const auto names = a.panel.covariate_names();
  CHECK(names.back() == kMisspecifiedName);
  CHECK(names.size() == spec.covariates.size() + 1);
}

TEST_CASE("no effect and no noise gives flat outcomes") {
  auto spec = default_dgp();
  spec.effect = false;
  spec.sigma_u = 0.0;
  const auto trial = generate_trial(spec, 4);
  const auto& y = trial.panel.outcomes();
  CHECK((y.col(1) - y.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(trial.truth.datt == 0.0);
  CHECK(trial.truth.cdatt == 0.0);
}

TEST_CASE("DATT truth agrees with exact enumeration") {
  for (double gamma : {0.0, 1.0}) {
    auto spec = default_dgp();
    spec.gamma = gamma;
    const double exact = enumerated_datt(spec);
    // the library oversamples 10^6 draws
    CHECK(std::abs(dgp_truth(spec).datt - exact) < 3e-3);
    CHECK(std::abs(exact) > 0.05);
  }
}

TEST_CASE("cell shares of the default scenario are balanced") {
  auto spec = default_dgp();
  spec.n = 100000;
  const auto trial = generate_trial(spec, 8);
  std::array<double, 4> count{};
  for (std::size_t i = 0; i < trial.panel.size(); ++i) {
    const bool treated = !trial.panel.cohorts()[i].is_never();
    const bool focal = trial.panel.subgroups()[i] == kSimFocal;
    count[(treated ? 0 : 2) + (focal ? 0 : 1)] += 1;
  }
  for (double c : count) {
    CHECK(c / 1e5 >= 0.15);
    CHECK(c / 1e5 <= 0.35);
  }
}

TEST_CASE("staggered and repeated cross-section designs") {
  auto spec = default_dgp();
  spec.staggered = true;
  const auto s = generate_trial(spec, 3);
  CHECK(s.panel.times() == std::vector<int>{1, 2, 3});
  CHECK(s.panel.treated_cohorts() == std::vector<int>{2, 3});
  CHECK(spec.pairs().size() == 3);

  auto rc = default_dgp();
  rc.repeated_cross_section = true;
  const auto r = generate_trial(rc, 3);
  REQUIRE(r.repeated.has_value());
  CHECK(r.repeated->size() == rc.n);
  CHECK(r.repeated->periods() == std::vector<int>{1, 2});
}

TEST_CASE("dgp json round trip and validation") {
  auto spec = default_dgp();
  spec.gamma = 0.2;
  spec.ps_wrong = true;
  const auto back = dgp_from_json(dgp_to_json(spec));
  CHECK(dgp_to_json(back) == dgp_to_json(spec));
  CHECK_THROWS_AS(dgp_from_json("{\"bogus\": 1}"), UsageError);
  CHECK_THROWS_AS(dgp_from_json("{\"n\": 10}"), UsageError);
  CHECK_THROWS_AS(dgp_from_json("{\"beta\": [1, 2]}"), UsageError);
  CHECK_THROWS_AS(dgp_from_json("[1]"), UsageError);
}

TEST_CASE("suite labels") {
  CHECK(parse_suite_entry("cdatt_dr").label() == "cdatt_dr");
  CHECK(parse_suite_entry("datt_3wfe").estimator == Estimator::ThreeWFE);
  CHECK_THROWS_AS(parse_suite_entry("cdatt_3wfe"), UsageError);
  CHECK_THROWS_AS(parse_suite_entry("bound_dr"), UsageError);
  CHECK(default_suite().size() == 8);
}

TEST_CASE("null scenario: small bias and nominal coverage") {
  auto spec = default_dgp();
  spec.effect = false;
  McSettings settings;
  settings.suite = {parse_suite_entry("cdatt_dr"), parse_suite_entry("datt_unadjusted")};
  settings.trials = 100;
  settings.master_seed = 5;
  const auto report = run_monte_carlo(spec, settings);
  for (const auto& row : report.rows) {
    CHECK(row.failures == 0);
    CHECK(std::abs(row.avg_bias) <= 3.0 * row.empirical_sd / 10.0);
    CHECK(row.coverage >= 0.90);
  }
  CHECK(report.to_csv().rfind("estimator,g,t,truth", 0) == 0);
}

TEST_CASE("monte carlo output does not depend on the thread count") {
  auto spec = default_dgp();
  spec.gamma = 1.0;
  McSettings settings;
  settings.trials = 24;
  settings.keep_trials = true;
  const auto serial = run_monte_carlo(spec, settings);
  settings.threads = 4;
  const auto parallel = run_monte_carlo(spec, settings);
  CHECK(serial.to_csv() == parallel.to_csv());
  CHECK(serial.trials_csv() == parallel.trials_csv());
}
