#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iiwgee/core_model.hpp"
#include "iiwgee/intensity.hpp"
#include "iiwgee/weights.hpp"

namespace iiwgee {

enum class BasisKind {
  intercept,       // 1
  log1p_t,         // log(1 + t)
  inv_sq1p,        // (1 + t)^-2
  inv_sq1p_log1p,  // (1 + t)^-2 log(1 + t)
  linear_t,        // t
  baseline,        // a baseline covariate (not a function of t)
};

inline std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::intercept: return "intercept";
    case BasisKind::log1p_t: return "log1p_t";
    case BasisKind::inv_sq1p: return "inv_sq1p";
    case BasisKind::inv_sq1p_log1p: return "inv_sq1p_log1p";
    case BasisKind::linear_t: return "linear_t";
    case BasisKind::baseline: return "baseline";
  }
  return "?";
}

inline std::optional<BasisKind> parse_basis_kind(std::string_view s) {
  for (auto k : {BasisKind::intercept, BasisKind::log1p_t, BasisKind::inv_sq1p,
                 BasisKind::inv_sq1p_log1p, BasisKind::linear_t, BasisKind::baseline})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct BasisTerm {
  BasisKind kind = BasisKind::intercept;
  std::string column;  // baseline only
};

// Outcome mean model mu(t) = sum_j beta_j basis_j(t, covariates).
struct OutcomeBasis {
  std::vector<BasisTerm> terms;

  static OutcomeBasis scenario1() { return {{{BasisKind::intercept, {}}, {BasisKind::log1p_t, {}}}}; }
  static OutcomeBasis scenario2() {
    return {{{BasisKind::intercept, {}}, {BasisKind::inv_sq1p, {}}, {BasisKind::inv_sq1p_log1p, {}}}};
  }

  std::size_t size() const noexcept { return terms.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(t.kind == BasisKind::baseline ? t.column : to_string(t.kind));
    return out;
  }

  static double time_function(BasisKind k, double t) {
    switch (k) {
      case BasisKind::intercept: return 1.0;
      case BasisKind::log1p_t: return std::log1p(t);
      case BasisKind::inv_sq1p: return 1.0 / ((1.0 + t) * (1.0 + t));
      case BasisKind::inv_sq1p_log1p: return std::log1p(t) / ((1.0 + t) * (1.0 + t));
      case BasisKind::linear_t: return t;
      case BasisKind::baseline: break;
    }
    fail(ErrorKind::invalid_argument, "basis term is not a function of time");
  }

  template <class Row>
  void row(const SubjectRecord& s, const Schema& schema, double t, Row&& out) const {
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const auto& term = terms[j];
      if (term.kind == BasisKind::baseline) {
        const int c = detail::find_column(schema.baseline, term.column);
        if (c < 0) fail(ErrorKind::invalid_argument, "unknown baseline column '" + term.column + "'");
        out[static_cast<Eigen::Index>(j)] = s.baseline_covariates[static_cast<std::size_t>(c)];
      } else {
        out[static_cast<Eigen::Index>(j)] = time_function(term.kind, t);
      }
    }
  }
};

// Antiderivatives on [0, tau].
inline double closed_form_integral(BasisKind k, double tau) {
  const double l = std::log1p(tau);
  switch (k) {
    case BasisKind::intercept: return tau;
    case BasisKind::log1p_t: return (1.0 + tau) * l - tau;
    case BasisKind::inv_sq1p: return 1.0 - 1.0 / (1.0 + tau);
    case BasisKind::inv_sq1p_log1p: return 1.0 - (1.0 + l) / (1.0 + tau);
    case BasisKind::linear_t: return 0.5 * tau * tau;
    case BasisKind::baseline: break;
  }
  fail(ErrorKind::invalid_argument, "basis term is not a function of time");
}

inline Eigen::VectorXd auc_coefficients(const OutcomeBasis& basis, double tau) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const BasisKind k = basis.terms[j].kind;
    if (k == BasisKind::baseline)
      fail(ErrorKind::invalid_argument, "AUC needs a mean model in time only");
    c[static_cast<Eigen::Index>(j)] = boost::math::quadrature::gauss<double, 64>::integrate(
        [k](double t) { return OutcomeBasis::time_function(k, t); }, 0.0, tau);
  }
  return c;
}

inline Eigen::VectorXd auc_coefficients_closed_form(const OutcomeBasis& basis, double tau) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j)
    c[static_cast<Eigen::Index>(j)] = closed_form_integral(basis.terms[j].kind, tau);
  return c;
}

struct WgeeDesign {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  std::vector<std::size_t> cluster;  // subject index per row, non-decreasing
};

inline WgeeDesign wgee_design(const Panel& panel, const WeightSet& weights, const OutcomeBasis& basis) {
  const auto n = static_cast<Eigen::Index>(weights.records.size());
  if (weights.records.size() != panel.total_visits())
    fail(ErrorKind::invalid_argument, "weight set does not match the panel");
  WgeeDesign d{Eigen::MatrixXd(n, static_cast<Eigen::Index>(basis.size())), Eigen::VectorXd(n),
               Eigen::VectorXd(n), std::vector<std::size_t>(static_cast<std::size_t>(n))};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& rec = weights.records[static_cast<std::size_t>(r)];
    const auto& s = panel[rec.subject];
    basis.row(s, panel.schema(), rec.time, d.x.row(r));
    d.y[r] = s.outcomes[rec.visit];
    d.w[r] = rec.weight;
    d.cluster[static_cast<std::size_t>(r)] = rec.subject;
    if (!(rec.weight > 0.0) || !std::isfinite(rec.weight))
      fail(ErrorKind::invalid_argument, "WGEE weights must be positive and finite");
  }
  return d;
}

// A^-1 B A^-1 with A = X'WX and B = sum over clusters of u u', u = X_i' W_i r_i.
inline Eigen::MatrixXd sandwich_cov(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                    const std::vector<std::size_t>& cluster, const Eigen::VectorXd& beta) {
  const Eigen::Index p = x.cols();
  const Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) fail(ErrorKind::rank_deficient, "sandwich bread matrix is singular");
  const Eigen::VectorXd r = y - x * beta;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    u += w[i] * r[i] * x.row(i).transpose();
    const bool last = i + 1 == x.rows() ||
                      cluster[static_cast<std::size_t>(i + 1)] != cluster[static_cast<std::size_t>(i)];
    if (last) {
      b.noalias() += u * u.transpose();
      u.setZero();
    }
  }
  const Eigen::MatrixXd ainv = lu.inverse();
  Eigen::MatrixXd v = ainv * b * ainv;
  return 0.5 * (v + v.transpose());
}

struct WgeeFit {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd naive_cov;
  OutcomeBasis basis;
  std::vector<double> weights;
  std::size_t n_subjects = 0;
  std::size_t n_visits = 0;
};

struct AucEstimate {
  double value = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

enum class Link { identity };

// Weighted estimating equation sum_ik w_ik x_ik (y_ik - x_ik' beta) = 0 under
// working independence; with the identity link this is weighted least squares.
inline WgeeFit fit_wgee(const Panel& panel, const WeightSet& weights, const OutcomeBasis& basis,
                        Link = Link::identity) {
  const WgeeDesign d = wgee_design(panel, weights, basis);
  const Eigen::MatrixXd a = d.x.transpose() * d.w.asDiagonal() * d.x;
  const auto bad = detail::degenerate_columns(a, basis.names(), 1e-12);
  if (!bad.empty())
    fail(ErrorKind::rank_deficient, "rank deficient outcome design: collinear columns " + detail::join(bad));
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    fail(ErrorKind::rank_deficient, "rank deficient outcome design");
  WgeeFit fit;
  fit.beta_hat = ldlt.solve(d.x.transpose() * (d.w.array() * d.y.array()).matrix());
  fit.naive_cov = sandwich_cov(d.x, d.y, d.w, d.cluster, fit.beta_hat);
  fit.basis = basis;
  fit.weights.assign(d.w.data(), d.w.data() + d.w.size());
  fit.n_subjects = panel.size();
  fit.n_visits = static_cast<std::size_t>(d.x.rows());
  return fit;
}

inline AucEstimate auc(const WgeeFit& fit, double tau) {
  const Eigen::VectorXd c = auc_coefficients(fit.basis, tau);
  AucEstimate a;
  a.value = c.dot(fit.beta_hat);
  a.se = std::sqrt(std::max(0.0, c.dot(fit.naive_cov * c)));
  a.ci_low = a.value - 1.96 * a.se;
  a.ci_high = a.value + 1.96 * a.se;
  return a;
}

// U(beta) = sum_ik w_ik x_ik (y_ik - x_ik' beta).
inline Eigen::VectorXd estimating_function(const Panel& panel, const WeightSet& weights,
                                           const OutcomeBasis& basis, const Eigen::VectorXd& beta) {
  const WgeeDesign d = wgee_design(panel, weights, basis);
  return d.x.transpose() * (d.w.array() * (d.y - d.x * beta).array()).matrix();
}

}  // namespace iiwgee
