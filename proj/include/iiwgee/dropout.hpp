#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "iiwgee/core_model.hpp"
#include "iiwgee/intensity.hpp"

namespace iiwgee {

struct DropoutFit {
  Eigen::VectorXd eta_hat;
  std::vector<std::string> names;
  FeatureSpec spec;  // bound
  bool converged = false;
  int iterations = 0;
  double final_score_norm = 0.0;
  int n_records = 0;
  int n_dropouts = 0;
};

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
  // Coefficient size beyond which a non-vanishing score is read as
  // separation. Calibrated Scenario 1 intercepts legitimately reach -30.
  double separation_norm = 50.0;
};

struct BernoulliLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

namespace detail {

// log(1 + e^x) without overflow.
inline double log1pexp(double x) noexcept {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double expit(double x) noexcept {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

inline BernoulliLikelihood bernoulli_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& eta) {
  const Eigen::VectorXd lin = x * eta;
  BernoulliLikelihood out{0.0, Eigen::VectorXd::Zero(eta.size()),
                          Eigen::MatrixXd::Zero(eta.size(), eta.size())};
  Eigen::VectorXd w(lin.size()), r(lin.size());
  for (Eigen::Index i = 0; i < lin.size(); ++i) {
    const double p = detail::expit(lin[i]);
    out.loglik += y[i] * lin[i] - detail::log1pexp(lin[i]);
    r[i] = y[i] - p;
    w[i] = p * (1.0 - p);
  }
  out.score = x.transpose() * r;
  out.information = x.transpose() * w.asDiagonal() * x;
  return out;
}

// Maximum-likelihood logistic regression by IRLS (Newton on the Bernoulli
// log-likelihood) from eta = 0, with step-halving.
inline DropoutFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               std::vector<std::string> names, const LogisticOptions& opt = {}) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n == 0) fail(ErrorKind::invalid_argument, "logistic fit requires at least one record");
  const double positives = y.sum();
  if (positives == 0.0 || positives == static_cast<double>(n))
    fail(ErrorKind::invalid_argument, "dropout labels are all identical; logistic model not estimable");

  DropoutFit fit;
  fit.names = std::move(names);
  fit.n_records = static_cast<int>(n);
  fit.n_dropouts = static_cast<int>(positives);
  fit.eta_hat = Eigen::VectorXd::Zero(p);

  BernoulliLikelihood cur = bernoulli_loglik(x, y, fit.eta_hat);
  const auto bad = detail::degenerate_columns(cur.information, fit.names);
  if (!bad.empty())
    fail(ErrorKind::rank_deficient, "rank deficient dropout design: collinear columns " + detail::join(bad));

  for (;;) {
    fit.final_score_norm = cur.score.lpNorm<Eigen::Infinity>();
    if (fit.final_score_norm < opt.tolerance) {
      fit.converged = true;
      break;
    }
    // Perfect prediction of every label: the likelihood supremum is not attained.
    if (-cur.loglik < 1e-8 * static_cast<double>(n) || fit.iterations >= opt.max_iterations ||
        fit.eta_hat.lpNorm<Eigen::Infinity>() > opt.separation_norm) {
      if (-cur.loglik < 1e-6 * static_cast<double>(n) ||
          fit.eta_hat.lpNorm<Eigen::Infinity>() > opt.separation_norm)
        fail(ErrorKind::separation, "separation in dropout model: |eta| = " +
                                        std::to_string(fit.eta_hat.lpNorm<Eigen::Infinity>()) +
                                        " with score norm " + std::to_string(fit.final_score_norm));
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
      fail(ErrorKind::separation, "separation in dropout model: singular information matrix");
    Eigen::VectorXd step = ldlt.solve(cur.score);
    Eigen::VectorXd trial;
    BernoulliLikelihood next;
    for (int h = 0;; ++h) {
      trial = fit.eta_hat + step;
      next = bernoulli_loglik(x, y, trial);
      if (next.loglik >= cur.loglik - 1e-12 * (1.0 + std::abs(cur.loglik)) || h >= 30) break;
      step *= 0.5;
    }
    fit.eta_hat = trial;
    cur = std::move(next);
    ++fit.iterations;
  }
  return fit;
}

struct VisitDesign {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

// One record per observed visit with the history through that visit; the
// label is 1 iff the subject drops out at that visit.
inline VisitDesign dropout_design(const Panel& panel, const FeatureSpec& bound) {
  const auto n = static_cast<Eigen::Index>(panel.total_visits());
  VisitDesign d{Eigen::MatrixXd(n, static_cast<Eigen::Index>(bound.size())), Eigen::VectorXd(n)};
  Eigen::Index row = 0;
  for (const auto& s : panel.subjects()) {
    for (std::size_t k = 0; k < s.n_visits(); ++k, ++row) {
      d.x.row(row) = features_through_visit(s, k, bound).values.transpose();
      d.y[row] = s.dropped_out_at_visit(k) ? 1.0 : 0.0;
    }
  }
  return d;
}

inline bool has_dropout_events(const Panel& panel) {
  for (const auto& s : panel.subjects())
    for (std::size_t k = 0; k < s.n_visits(); ++k)
      if (s.dropped_out_at_visit(k)) return true;
  return false;
}

inline DropoutFit fit_dropout(const Panel& panel, const FeatureSpec& spec, const LogisticOptions& opt = {}) {
  const FeatureSpec bound = bind(spec, panel.schema());
  auto design = dropout_design(panel, bound);
  DropoutFit fit = fit_logistic(design.x, design.y, bound.names(), opt);
  fit.spec = bound;
  return fit;
}

inline double dropout_odds(const DropoutFit& fit, const HistoryFeatures& features) {
  if (features.values.size() != fit.eta_hat.size())
    fail(ErrorKind::invalid_argument, "feature length does not match eta");
  if (!features.values.allFinite()) fail(ErrorKind::invalid_argument, "dropout features must be finite");
  return std::exp(fit.eta_hat.dot(features.values));
}

inline constexpr double kPositivityFloor = 1e-12;

// P(D > t | G > t, history, no visit in (last_visit, t)) when dropout happens
// only at visits with the given odds and visits arrive at the constant rate
// lambda0 * intensity_factor.
inline double survival_given_no_visit(double t, double last_visit, double intensity_factor,
                                      double lambda0, double odds_at_last_visit,
                                      double floor = kPositivityFloor) {
  if (!(t >= last_visit)) fail(ErrorKind::invalid_argument, "t precedes the last visit");
  if (!(intensity_factor > 0.0) || !(lambda0 > 0.0) || !(odds_at_last_visit >= 0.0))
    fail(ErrorKind::invalid_argument, "survival inputs must be positive");
  if (odds_at_last_visit == 0.0) return 1.0;
  const double s = std::exp(-lambda0 * intensity_factor * (t - last_visit));
  const double p = s / (s + odds_at_last_visit);
  if (!(p >= floor))
    fail(ErrorKind::positivity, "positivity violation: dropout survival " + std::to_string(p) +
                                    " below floor " + std::to_string(floor));
  return p;
}

// Continuous-time dropout hazard, constant on (knots[j], knots[j+1]] and
// equal to rates.back() after the last knot.
struct PiecewiseHazard {
  std::vector<double> knots;
  std::vector<double> rates;

  double cumulative(double from, double to) const {
    if (knots.size() != rates.size() || knots.empty())
      fail(ErrorKind::invalid_argument, "piecewise hazard needs one rate per knot");
    double total = 0.0;
    for (std::size_t j = 0; j < knots.size(); ++j) {
      const double lo = std::max(from, knots[j]);
      const double hi = std::min(to, j + 1 < knots.size() ? knots[j + 1] : kInfinity);
      if (hi > lo) total += rates[j] * (hi - lo);
    }
    return total;
  }
};

inline double survival_continuous(double t, double last_reset, const PiecewiseHazard& hazard,
                                  double floor = kPositivityFloor) {
  if (!(t >= last_reset)) fail(ErrorKind::invalid_argument, "t precedes the reset time");
  for (double r : hazard.rates)
    if (!(r >= 0.0)) fail(ErrorKind::invalid_argument, "dropout hazard must be non-negative");
  const double p = std::exp(-hazard.cumulative(last_reset, t));
  if (!(p >= floor))
    fail(ErrorKind::positivity, "positivity violation: dropout survival below floor");
  return p;
}

}  // namespace iiwgee
