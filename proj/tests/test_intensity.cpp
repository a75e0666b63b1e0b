#include <catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "iiwgee/intensity.hpp"
#include "iiwgee/harness.hpp"
#include "iiwgee/simulate.hpp"
#include "oracle.hpp"

using namespace iiwgee;
using testing_support::subject;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Panel two_subjects() {
  auto a = subject("A", {1.0}, {0.0});
  a.baseline_covariates = {1.0};
  auto b = subject("B", {2.0}, {0.0});
  b.baseline_covariates = {0.0};
  return Panel({a, b}, 2.0, Schema{{"z"}, {}});
}

Panel small_s1(int n, std::uint64_t seed) {
  auto cfg = ScenarioConfig::defaults(Scenario::S1);
  cfg.n = n;
  cfg.eta0 = -9.8;
  return generate_panel(cfg, seed);
}

std::vector<oracle::Subject> as_oracle(const Panel& p, RiskMode mode) {
  std::vector<oracle::Subject> out;
  for (const auto& s : p.subjects()) out.push_back({s.visit_times, s.outcomes, follow_up_end(s, mode)});
  return out;
}

}  // namespace

TEST_CASE("two-subject example has gamma hat exactly zero") {
  FeatureSpec spec{{testing_support::baseline("z")}};
  auto fit = fit_intensity(two_subjects(), spec, RiskMode::respect_dropout);
  CHECK(fit.converged);
  CHECK(std::abs(fit.gamma_hat[0]) < 1e-12);
  CHECK(fit.names == std::vector<std::string>{"z"});
}

TEST_CASE("identical covariate paths are non-identifiable") {
  auto a = subject("A", {1.0}, {0.0});
  auto b = subject("B", {2.0}, {0.0});
  a.baseline_covariates = b.baseline_covariates = {3.0};
  Panel p({a, b}, 2.0, Schema{{"z"}, {}});
  try {
    fit_intensity(p, FeatureSpec{{testing_support::baseline("z")}}, RiskMode::respect_dropout);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::non_identifiable);
    CHECK(std::string(e.what()).find("non-identifiable") != std::string::npos);
  }
}

TEST_CASE("collinear columns are named") {
  Panel p = small_s1(100, 3);
  auto y = testing_support::last_outcome(Transform::identity, 0.0);
  auto y2 = y;
  y2.name = "copy";
  try {
    fit_intensity(p, FeatureSpec{{y, y2}}, RiskMode::respect_dropout);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::rank_deficient);
    const std::string msg = e.what();
    CHECK(msg.find("y") != std::string::npos);
    CHECK(msg.find("copy") != std::string::npos);
  }
}

TEST_CASE("monotone likelihood is reported as separation") {
  // The subject with the larger covariate visits at every event time.
  std::vector<SubjectRecord> subs;
  for (int i = 0; i < 6; ++i) {
    auto s = i < 3 ? subject("v" + std::to_string(i), {1.0 + i, 5.0 + i}, {0, 0})
                   : subject("q" + std::to_string(i), {}, {});
    s.baseline_covariates = {i < 3 ? 1.0 : 0.0};
    subs.push_back(s);
  }
  Panel p(subs, 10.0, Schema{{"z"}, {}});
  try {
    fit_intensity(p, FeatureSpec{{testing_support::baseline("z")}}, RiskMode::respect_dropout);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::non_identifiable);
    CHECK(std::string(e.what()).find("non-identifiable / separation") != std::string::npos);
  }
}

TEST_CASE("Breslow increments at gamma zero") {
  auto steps = breslow_baseline(two_subjects(), vec({0.0}), FeatureSpec{{testing_support::baseline("z")}},
                                RiskMode::respect_dropout);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].increment == Approx(0.5));
  CHECK(steps[1].increment == Approx(0.5));
  IntensityFit f;
  f.breslow = steps;
  CHECK(f.cumulative_baseline(2.0) == Approx(1.0));
  CHECK(f.cumulative_baseline(1.5) == Approx(0.5));
}

TEST_CASE("Breslow without events is identically zero") {
  auto a = subject("A", {}, {});
  a.baseline_covariates = {1.0};
  Panel p({a}, 2.0, Schema{{"z"}, {}});
  auto steps = breslow_baseline(p, vec({0.3}), FeatureSpec{{testing_support::baseline("z")}},
                                RiskMode::respect_dropout);
  CHECK(steps.empty());
}

TEST_CASE("visits outside follow-up violate positivity") {
  Panel p({subject("A", {1.0, 3.0}, {0, 0}, 2.0)}, 5.0);
  CHECK_THROWS_AS(CountingProcess(p, bind(default_intensity_spec(), p.schema()), RiskMode::respect_dropout), Error);
  CHECK_NOTHROW(CountingProcess(p, bind(default_intensity_spec(), p.schema()), RiskMode::ignore_dropout));
}

TEST_CASE("intensity factor prediction") {
  IntensityFit fit;
  fit.gamma_hat = vec({0.0});
  CHECK(predict_intensity_factor(fit, {vec({2.0})}) == 1.0);
  fit.gamma_hat = vec({-0.336});
  CHECK(predict_intensity_factor(fit, {vec({std::log(1.0)})}) == 1.0);
  const double f = predict_intensity_factor(fit, {vec({std::log(11.0)})});
  CHECK(f == Approx(std::pow(11.0, -0.336)).epsilon(1e-14));
  CHECK(f == Approx(0.4469).margin(5e-4));
}

TEST_CASE("sweep, enumeration and the oracle agree") {
  Panel p = small_s1(80, 11);
  const auto spec = bind(default_intensity_spec(), p.schema());
  for (auto mode : {RiskMode::respect_dropout, RiskMode::ignore_dropout}) {
    CountingProcess cp(p, spec, mode);
    const auto subs = as_oracle(p, mode);
    for (double g : {-0.8, -0.336, 0.0, 0.4}) {
      const auto sweep = cp.evaluate(vec({g}));
      const auto direct = detail::enumerate_partial_likelihood(p, vec({g}), spec, mode);
      const double ref = oracle::log_partial_likelihood(subs, g);
      CHECK(sweep.loglik == Approx(ref).epsilon(1e-10));
      CHECK(direct.loglik == Approx(ref).epsilon(1e-10));
      CHECK(sweep.score[0] == Approx(direct.score[0]).epsilon(1e-9).margin(1e-9));
      CHECK(sweep.information(0, 0) == Approx(direct.information(0, 0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("analytic score matches central finite differences") {
  Panel p = small_s1(120, 5);
  FeatureTerm count;
  count.source = FeatureSource::visit_count;
  count.transform = Transform::log1p_floor;
  FeatureTerm gap;
  gap.source = FeatureSource::time_since_last;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const FeatureSpec& raw :
       {FeatureSpec{{testing_support::last_outcome(Transform::log1p_floor, 0.0), count}},
        FeatureSpec{{testing_support::last_outcome(Transform::log1p_floor, 0.0), gap}}}) {
    const auto spec = bind(raw, p.schema());
    CountingProcess cp(p, spec, RiskMode::respect_dropout);
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd g = vec({u(rng), 0.3 * u(rng)});
      const auto at = cp.evaluate(g);
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        const double h = 1e-5;
        Eigen::VectorXd gp = g, gm = g;
        gp[j] += h;
        gm[j] -= h;
        const double fd = (cp.evaluate(gp).loglik - cp.evaluate(gm).loglik) / (2 * h);
        CHECK(std::abs(fd - at.score[j]) <= 1e-6 * std::max(1.0, std::abs(at.score[j])));
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(at.information);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    }
  }
}

TEST_CASE("non-piecewise features use direct enumeration consistently") {
  Panel p = small_s1(60, 9);
  FeatureTerm gap;
  gap.source = FeatureSource::time_since_last;
  const auto spec = bind(FeatureSpec{{gap}}, p.schema());
  CountingProcess cp(p, spec, RiskMode::respect_dropout);
  const auto a = cp.evaluate(vec({-0.2}));
  const auto b = detail::enumerate_partial_likelihood(p, vec({-0.2}), spec, RiskMode::respect_dropout);
  CHECK(a.loglik == Approx(b.loglik).epsilon(1e-12));
}

TEST_CASE("fit converges with a small score") {
  Panel p = small_s1(200, 21);
  auto fit = fit_intensity(p, default_intensity_spec(), RiskMode::respect_dropout);
  CHECK(fit.converged);
  CHECK(fit.final_score_norm < 1e-8);
  CHECK(fit.iterations > 0);
}

TEST_CASE("shifting a covariate column leaves gamma hat unchanged") {
  Panel p = small_s1(150, 31);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<SubjectRecord> a, b;
  for (const auto& s : p.subjects()) {
    auto c = s;
    c.baseline_covariates = {z(rng)};
    a.push_back(c);
    c.baseline_covariates[0] += 5.0;
    b.push_back(c);
  }
  const FeatureSpec spec{{testing_support::baseline("z"), testing_support::last_outcome(Transform::log1p_floor, 0.0)}};
  auto fa = fit_intensity(Panel(a, p.tau(), Schema{{"z"}, {}}), spec, RiskMode::respect_dropout);
  auto fb = fit_intensity(Panel(b, p.tau(), Schema{{"z"}, {}}), spec, RiskMode::respect_dropout);
  CHECK(fb.gamma_hat[0] == Approx(fa.gamma_hat[0]).epsilon(1e-8));
  CHECK(fb.gamma_hat[1] == Approx(fa.gamma_hat[1]).epsilon(1e-8));
}

TEST_CASE("constant rate on a homogeneous Poisson panel") {
  auto cfg = ScenarioConfig::defaults(Scenario::S1);
  cfg.n = 1000;
  cfg.gamma0 = 0.0;
  cfg.lambda0 = 1.7;
  cfg.informative_dropout = false;
  Panel p = generate_panel(cfg, 8);
  auto fit = fit_intensity(p, FeatureSpec{}, RiskMode::respect_dropout);
  double exposure = 0.0;
  for (const auto& s : p.subjects()) exposure += follow_up_end(s);
  const double se = std::sqrt(static_cast<double>(fit.n_events)) / exposure;
  CHECK(std::abs(fit.constant_rate - 1.7) < 3 * se);
  CHECK(fit.constant_rate == Approx(fit.n_events / exposure).epsilon(1e-12));
}

TEST_CASE("large Scenario 1 panel recovers gamma0") {
  Panel p = small_s1(2000, 2024);
  auto fit = fit_intensity(p, default_intensity_spec(), RiskMode::respect_dropout);
  const auto info = CountingProcess(p, fit.spec, RiskMode::respect_dropout).evaluate(fit.gamma_hat).information;
  const double sd = 1.0 / std::sqrt(info(0, 0));
  CHECK(std::abs(fit.gamma_hat[0] - (-0.336)) < 3 * sd);
}
