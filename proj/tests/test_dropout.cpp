#include <catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "iiwgee/dropout.hpp"
#include "iiwgee/harness.hpp"
#include "iiwgee/simulate.hpp"
#include "oracle.hpp"

using namespace iiwgee;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("intercept-only MLE is the empirical log odds") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(100, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(100);
  y.head(30).setOnes();
  auto fit = fit_logistic(x, y, {"(intercept)"});
  CHECK(fit.converged);
  CHECK(fit.eta_hat[0] == Approx(std::log(0.3 / 0.7)).epsilon(1e-12));
  CHECK(fit.eta_hat[0] == Approx(-0.8473).margin(1e-4));
  CHECK(fit.final_score_norm < 1e-10);
  CHECK(fit.n_dropouts == 30);
}

TEST_CASE("labels ordered by the covariate are separated") {
  Eigen::MatrixXd x(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i;
    y[i] = i >= 10 ? 1.0 : 0.0;
  }
  try {
    fit_logistic(x, y, {"(intercept)", "y"});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::separation);
    CHECK(std::string(e.what()).find("separation") != std::string::npos);
  }
}

TEST_CASE("identical labels are rejected") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
  CHECK_THROWS_AS(fit_logistic(x, Eigen::VectorXd::Zero(5), {"a"}), Error);
  CHECK_THROWS_AS(fit_logistic(x, Eigen::VectorXd::Ones(5), {"a"}), Error);
}

TEST_CASE("collinear dropout columns are named") {
  Eigen::MatrixXd x(6, 2);
  x << 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2;
  Eigen::VectorXd y = vec({0, 1, 0, 0, 1, 0});
  try {
    fit_logistic(x, y, {"one", "two"});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::rank_deficient);
    CHECK(std::string(e.what()).find("one") != std::string::npos);
  }
}

TEST_CASE("Bernoulli score matches finite differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd x(200, 3);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = z(rng);
    x(i, 2) = z(rng) * 2;
    y[i] = std::bernoulli_distribution(detail::expit(-0.5 + x(i, 1)))(rng) ? 1.0 : 0.0;
  }
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd eta = vec({z(rng), z(rng), 0.3 * z(rng)});
    const auto at = bernoulli_loglik(x, y, eta);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double h = 1e-5;
      Eigen::VectorXd ep = eta, em = eta;
      ep[j] += h;
      em[j] -= h;
      const double fd = (bernoulli_loglik(x, y, ep).loglik - bernoulli_loglik(x, y, em).loglik) / (2 * h);
      CHECK(std::abs(fd - at.score[j]) <= 1e-6 * std::max(1.0, std::abs(at.score[j])));
    }
  }
  auto fit = fit_logistic(x, y, {"a", "b", "c"});
  CHECK(fit.converged);
  CHECK(bernoulli_loglik(x, y, fit.eta_hat).score.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("dropout odds") {
  DropoutFit fit;
  fit.eta_hat = vec({0.0, 0.0});
  CHECK(dropout_odds(fit, {vec({1.0, 3.0})}) == 1.0);
  fit.eta_hat = vec({-2.0, 0.5});
  CHECK(dropout_odds(fit, {vec({1.0, 4.0})}) == Approx(1.0));
}

TEST_CASE("survival given no visit: spec examples") {
  CHECK(survival_given_no_visit(3.0, 3.0, 1.0, 1.0, 1.0) == Approx(0.5));
  for (double t : {0.0, 1.0, 100.0}) CHECK(survival_given_no_visit(t, 0.0, 2.0, 1.0, 0.0) == 1.0);
  const double p = survival_given_no_visit(3.0, 1.0, 0.5, 1.0, 0.25);
  CHECK(p == Approx(std::exp(-1.0) / (std::exp(-1.0) + 0.25)).epsilon(1e-14));
  CHECK(p == Approx(0.5954).margin(1e-4));
}

TEST_CASE("survival given no visit is non-increasing and vanishes") {
  double prev = 1.0;
  for (double t = 0.0; t <= 20.0; t += 0.05) {
    const double p = survival_given_no_visit(t, 0.0, 1.3, 1.0, 0.4);
    CHECK(p <= prev);
    prev = p;
  }
  CHECK(prev < 1e-8);
  CHECK_THROWS_AS(survival_given_no_visit(100.0, 0.0, 1.0, 1.0, 1.0), Error);
}

TEST_CASE("closed form matches the two-state Monte Carlo oracle") {
  struct Case {
    double pi, rate, gap;
  };
  for (const Case c : {Case{0.2, 0.5, 2.0}, Case{0.5, 1.0, 0.7}, Case{0.05, 2.0, 1.5}, Case{0.8, 0.3, 3.0}}) {
    const double closed = survival_given_no_visit(c.gap, 0.0, c.rate, 1.0, c.pi / (1.0 - c.pi));
    const auto mc = oracle::still_enrolled_given_no_visit(c.pi, c.rate, c.gap, 400000, 77);
    CHECK(std::abs(mc.estimate - closed) < 3 * mc.se);
  }
}

TEST_CASE("continuous survival") {
  CHECK(survival_continuous(5.0, 0.0, {{0.0}, {0.0}}) == 1.0);
  CHECK(survival_continuous(3.0, 1.0, {{0.0}, {0.4}}) == Approx(std::exp(-0.8)));
  CHECK(survival_continuous(2.0, 0.0, {{0.0, 1.0}, {0.1, 0.3}}) == Approx(std::exp(-0.4)));
}

TEST_CASE("dropout design uses history through the visit") {
  auto s = testing_support::subject("a", {1, 2, 3}, {4, 5, 6}, 3.0);
  Panel p({s, testing_support::subject("b", {1}, {0})}, 10.0);
  auto d = dropout_design(p, bind(default_dropout_spec(), p.schema()));
  REQUIRE(d.x.rows() == 4);
  CHECK(d.x(0, 1) == 4.0);
  CHECK(d.x(2, 1) == 6.0);
  CHECK(d.y[2] == 1.0);
  CHECK(d.y.sum() == 1.0);
  CHECK(has_dropout_events(p));
}

TEST_CASE("large Scenario 1 panel recovers eta1") {
  auto cfg = ScenarioConfig::defaults(Scenario::S1);
  cfg.n = 2000;
  cfg.eta0 = -9.84;
  Panel p = generate_panel(cfg, 99);
  auto fit = fit_dropout(p, default_dropout_spec());
  CHECK(fit.converged);
  auto d = dropout_design(p, fit.spec);
  const Eigen::MatrixXd cov = bernoulli_loglik(d.x, d.y, fit.eta_hat).information.inverse();
  CHECK(std::abs(fit.eta_hat[1] - 0.5) < 3 * std::sqrt(cov(1, 1)));
  CHECK(std::abs(fit.eta_hat[0] - (-9.84)) < 3 * std::sqrt(cov(0, 0)));
}
