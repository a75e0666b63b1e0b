#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "iiwgee/core_model.hpp"

namespace iiwgee {

struct BreslowStep {
  double time;
  double increment;
};

struct IntensityFit {
  Eigen::VectorXd gamma_hat;
  std::vector<std::string> names;
  FeatureSpec spec;  // bound
  RiskMode risk_mode = RiskMode::respect_dropout;
  std::vector<BreslowStep> breslow;
  double constant_rate = 0.0;
  int n_events = 0;
  bool converged = false;
  int iterations = 0;
  double final_score_norm = 0.0;

  // Breslow cumulative baseline at t (right-continuous step function).
  double cumulative_baseline(double t) const {
    double total = 0.0;
    for (const auto& step : breslow) {
      if (step.time > t) break;
      total += step.increment;
    }
    return total;
  }
};

struct IntensityOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;     // on the sup-norm of the score
  double divergence_norm = 20.0;
  int max_halvings = 30;
};

struct PartialLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

namespace detail {

// Direct evaluation: for every distinct visit time, enumerate the subjects in
// the risk set and evaluate their history features at that instant. Works for
// any feature specification; cost is O(events x subjects).
inline PartialLikelihood enumerate_partial_likelihood(const Panel& panel, const Eigen::VectorXd& gamma,
                                                      const FeatureSpec& spec, RiskMode mode) {
  const Eigen::Index p = gamma.size();
  std::vector<double> times;
  for (const auto& s : panel.subjects())
    for (double t : s.visit_times)
      if (t > 0.0) times.push_back(t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  PartialLikelihood out{0.0, Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
  Eigen::VectorXd x(p), s1(p);
  Eigen::MatrixXd s2(p, p);
  for (double t : times) {
    double s0 = 0.0;
    s1.setZero();
    s2.setZero();
    Eigen::VectorXd event_sum = Eigen::VectorXd::Zero(p);
    int d = 0;
    for (const auto& s : panel.subjects()) {
      const bool visits_now = std::binary_search(s.visit_times.begin(), s.visit_times.end(), t);
      if (!(t <= follow_up_end(s, mode))) {
        if (visits_now)
          fail(ErrorKind::positivity, "positivity violation in risk set: subject " + s.id +
                                          " visits at t=" + std::to_string(t) +
                                          " outside its follow-up");
        continue;
      }
      detail::prefix_features(s, detail::visits_before(s, t), t, spec, x);
      const double e = std::exp(gamma.dot(x));
      s0 += e;
      s1 += e * x;
      s2.noalias() += e * x * x.transpose();
      if (visits_now) {
        ++d;
        event_sum += x;
      }
    }
    if (d == 0) continue;
    if (!(s0 > 0.0)) fail(ErrorKind::positivity, "positivity violation in risk set");
    out.loglik += gamma.dot(event_sum) - d * std::log(s0);
    out.score += event_sum - d * s1 / s0;
    out.information += d * (s2 / s0 - (s1 / s0) * (s1 / s0).transpose());
  }
  return out;
}

}  // namespace detail

// Counting-process form of a panel for the visit intensity model: one
// segment (start, stop] per inter-visit interval with the history covariates
// that apply on it, ending in a visit event or in the end of follow-up.
class CountingProcess {
 public:
  CountingProcess(const Panel& panel, FeatureSpec spec, RiskMode mode)
      : panel_(&panel), spec_(std::move(spec)), mode_(mode), p_(static_cast<Eigen::Index>(spec_.size())) {
    piecewise_ = spec_.piecewise_constant();
    for (const auto& s : panel.subjects()) {
      const double end = follow_up_end(s, mode);
      for (double t : s.visit_times) {
        if (!(t > 0.0)) continue;
        if (t > end)
          fail(ErrorKind::positivity, "positivity violation in risk set: subject " + s.id +
                                          " visits at t=" + std::to_string(t) +
                                          " outside its follow-up");
        event_times_.push_back(t);
      }
    }
    n_events_ = static_cast<int>(event_times_.size());
    std::sort(event_times_.begin(), event_times_.end());
    if (piecewise_) build_segments();
  }

  int n_events() const noexcept { return n_events_; }
  Eigen::Index dimension() const noexcept { return p_; }
  const FeatureSpec& spec() const noexcept { return spec_; }

  PartialLikelihood evaluate(const Eigen::VectorXd& gamma) const {
    check_dimension(gamma);
    if (!piecewise_) return detail::enumerate_partial_likelihood(*panel_, gamma, spec_, mode_);
    PartialLikelihood out{0.0, Eigen::VectorXd::Zero(p_), Eigen::MatrixXd::Zero(p_, p_)};
    sweep(gamma, [&](std::size_t j, long double s0, const std::vector<long double>& s1,
                     const std::vector<long double>& s2) {
      const double d = distinct_counts_[j];
      const auto xs = event_x_sum_.col(static_cast<Eigen::Index>(j));
      out.loglik += gamma.dot(xs) - d * std::log(static_cast<double>(s0));
      for (Eigen::Index a = 0; a < p_; ++a) {
        const long double ma = s1[static_cast<std::size_t>(a)] / s0;
        out.score[a] += xs[a] - d * static_cast<double>(ma);
        for (Eigen::Index b = 0; b < p_; ++b) {
          const long double mb = s1[static_cast<std::size_t>(b)] / s0;
          out.information(a, b) +=
              d * static_cast<double>(s2[static_cast<std::size_t>(a * p_ + b)] / s0 - ma * mb);
        }
      }
    });
    return out;
  }

  std::vector<BreslowStep> breslow(const Eigen::VectorXd& gamma) const {
    check_dimension(gamma);
    std::vector<BreslowStep> steps;
    if (piecewise_) {
      steps.resize(distinct_times_.size());
      sweep(gamma, [&](std::size_t j, long double s0, const auto&, const auto&) {
        steps[j] = {distinct_times_[j], distinct_counts_[j] / static_cast<double>(s0)};
      });
      return steps;
    }
    std::vector<double> times = event_times_;
    times.erase(std::unique(times.begin(), times.end()), times.end());
    Eigen::VectorXd x(p_);
    for (double t : times) {
      double s0 = 0.0;
      int d = 0;
      for (const auto& s : panel_->subjects()) {
        if (!(t <= follow_up_end(s, mode_))) continue;
        detail::prefix_features(s, detail::visits_before(s, t), t, spec_, x);
        s0 += std::exp(gamma.dot(x));
        d += std::binary_search(s.visit_times.begin(), s.visit_times.end(), t) ? 1 : 0;
      }
      if (!(s0 > 0.0)) fail(ErrorKind::positivity, "positivity violation in risk set");
      steps.push_back({t, d / s0});
    }
    return steps;
  }

  // Sum over subjects of the integral of exp(gamma' x(t)) over follow-up.
  double exposure(const Eigen::VectorXd& gamma) const {
    check_dimension(gamma);
    double total = 0.0;
    if (piecewise_) {
      for (std::size_t i = 0; i < seg_start_.size(); ++i)
        total += (seg_stop_[i] - seg_start_[i]) *
                 std::exp(gamma.dot(seg_x_.col(static_cast<Eigen::Index>(i))));
      return total;
    }
    Eigen::VectorXd x(p_);
    for (const auto& s : panel_->subjects()) {
      const double end = follow_up_end(s, mode_);
      double prev = 0.0;
      for (std::size_t k = 0; k <= s.n_visits(); ++k) {
        const double stop = k < s.n_visits() ? std::min(s.visit_times[k], end) : end;
        if (stop > prev) {
          total += boost::math::quadrature::gauss<double, 20>::integrate(
              [&](double t) {
                detail::prefix_features(s, k, t, spec_, x);
                return std::exp(gamma.dot(x));
              },
              prev, stop);
        }
        if (k < s.n_visits()) prev = std::max(prev, s.visit_times[k]);
        if (prev >= end) break;
      }
    }
    return total;
  }

 private:
  void check_dimension(const Eigen::VectorXd& gamma) const {
    if (gamma.size() != p_)
      fail(ErrorKind::invalid_argument, "gamma has length " + std::to_string(gamma.size()) +
                                            ", feature spec has " + std::to_string(p_));
  }

  void build_segments() {
    std::vector<double> starts, stops;
    std::vector<char> events;
    std::vector<Eigen::VectorXd> xs;
    Eigen::VectorXd x(p_);
    for (const auto& s : panel_->subjects()) {
      const double end = follow_up_end(s, mode_);
      double prev = 0.0;
      std::size_t k = 0;
      for (; k < s.n_visits(); ++k) {
        const double t = s.visit_times[k];
        if (!(t > prev)) continue;  // visits at time 0 open the record but are not events
        detail::prefix_features(s, k, t, spec_, x);
        starts.push_back(prev);
        stops.push_back(t);
        events.push_back(1);
        xs.push_back(x);
        prev = t;
      }
      if (end > prev) {
        detail::prefix_features(s, s.n_visits(), end, spec_, x);
        starts.push_back(prev);
        stops.push_back(end);
        events.push_back(0);
        xs.push_back(x);
      }
    }
    const std::size_t n = starts.size();
    seg_start_ = std::move(starts);
    seg_stop_ = std::move(stops);
    seg_x_.resize(p_, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) seg_x_.col(static_cast<Eigen::Index>(i)) = xs[i];

    by_stop_.resize(n);
    std::iota(by_stop_.begin(), by_stop_.end(), std::size_t{0});
    by_start_ = by_stop_;
    std::sort(by_stop_.begin(), by_stop_.end(),
              [&](std::size_t a, std::size_t b) { return seg_stop_[a] > seg_stop_[b]; });
    std::sort(by_start_.begin(), by_start_.end(),
              [&](std::size_t a, std::size_t b) { return seg_start_[a] > seg_start_[b]; });

    distinct_times_ = event_times_;
    distinct_times_.erase(std::unique(distinct_times_.begin(), distinct_times_.end()),
                          distinct_times_.end());
    distinct_counts_.assign(distinct_times_.size(), 0.0);
    event_x_sum_ = Eigen::MatrixXd::Zero(p_, static_cast<Eigen::Index>(distinct_times_.size()));
    for (std::size_t i = 0; i < n; ++i) {
      if (!events[i]) continue;
      const auto j = static_cast<std::size_t>(
          std::lower_bound(distinct_times_.begin(), distinct_times_.end(), seg_stop_[i]) -
          distinct_times_.begin());
      distinct_counts_[j] += 1.0;
      event_x_sum_.col(static_cast<Eigen::Index>(j)) += seg_x_.col(static_cast<Eigen::Index>(i));
    }
  }

  // Visits distinct event times in decreasing order while maintaining the
  // risk-set sums S0, S1, S2 over segments with start < t <= stop.
  template <class Visit>
  void sweep(const Eigen::VectorXd& gamma, Visit&& visit) const {
    const std::size_t n = seg_start_.size();
    const auto pp = static_cast<std::size_t>(p_);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i)
      e[i] = std::exp(gamma.dot(seg_x_.col(static_cast<Eigen::Index>(i))));
    long double s0 = 0.0L;
    std::vector<long double> s1(pp, 0.0L), s2(pp * pp, 0.0L);
    auto accumulate = [&](std::size_t i, long double sign) {
      const long double w = sign * e[i];
      s0 += w;
      const auto xi = seg_x_.col(static_cast<Eigen::Index>(i));
      for (std::size_t a = 0; a < pp; ++a) {
        const long double wa = w * xi[static_cast<Eigen::Index>(a)];
        s1[a] += wa;
        for (std::size_t b = 0; b < pp; ++b) s2[a * pp + b] += wa * xi[static_cast<Eigen::Index>(b)];
      }
    };
    std::size_t add = 0, remove = 0;
    for (std::size_t jj = distinct_times_.size(); jj-- > 0;) {
      const double t = distinct_times_[jj];
      while (add < n && seg_stop_[by_stop_[add]] >= t) accumulate(by_stop_[add++], 1.0L);
      while (remove < n && seg_start_[by_start_[remove]] >= t) accumulate(by_start_[remove++], -1.0L);
      if (!(s0 > 0.0L)) fail(ErrorKind::positivity, "positivity violation in risk set");
      visit(jj, s0, s1, s2);
    }
  }

  const Panel* panel_;
  FeatureSpec spec_;
  RiskMode mode_;
  Eigen::Index p_;
  bool piecewise_ = true;
  int n_events_ = 0;
  std::vector<double> event_times_;

  std::vector<double> seg_start_, seg_stop_;
  Eigen::MatrixXd seg_x_;
  std::vector<std::size_t> by_stop_, by_start_;
  std::vector<double> distinct_times_, distinct_counts_;
  Eigen::MatrixXd event_x_sum_;
};

inline PartialLikelihood log_partial_likelihood(const Panel& panel, const Eigen::VectorXd& gamma,
                                                const FeatureSpec& spec, RiskMode mode) {
  return CountingProcess(panel, spec, mode).evaluate(gamma);
}

namespace detail {

// Names the columns that carry no information or take part in a linear
// dependency of the information matrix.
inline std::vector<std::string> degenerate_columns(const Eigen::MatrixXd& info,
                                                   const std::vector<std::string>& names,
                                                   double rel_tol = 1e-10) {
  const Eigen::Index p = info.rows();
  std::vector<std::string> out;
  const double scale = std::max(info.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Eigen::Index> live;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (info(j, j) <= rel_tol * scale) out.push_back(names[static_cast<std::size_t>(j)]);
    else live.push_back(j);
  }
  if (live.size() < 2) return out;
  const auto m = static_cast<Eigen::Index>(live.size());
  Eigen::MatrixXd corr(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      corr(a, b) = info(live[a], live[b]) / std::sqrt(info(live[a], live[a]) * info(live[b], live[b]));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  for (Eigen::Index v = 0; v < m; ++v) {
    if (eig.eigenvalues()[v] > 1e-9) continue;
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto& name = names[static_cast<std::size_t>(live[a])];
      if (std::abs(eig.eigenvectors()(a, v)) > 1e-6 &&
          std::find(out.begin(), out.end(), name) == out.end())
        out.push_back(name);
    }
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace detail

// Andersen-Gill fit of the proportional visit intensity by Newton-Raphson on
// the log partial likelihood (Breslow ties) with step-halving, from gamma = 0.
inline IntensityFit fit_intensity(const Panel& panel, const FeatureSpec& spec, RiskMode mode,
                                  const IntensityOptions& opt = {}) {
  const FeatureSpec bound = bind(spec, panel.schema());
  CountingProcess cp(panel, bound, mode);
  if (cp.n_events() == 0) fail(ErrorKind::invalid_argument, "intensity fit requires at least one visit");
  const Eigen::Index p = cp.dimension();

  IntensityFit fit;
  fit.names = bound.names();
  fit.spec = bound;
  fit.risk_mode = mode;
  fit.n_events = cp.n_events();
  fit.gamma_hat = Eigen::VectorXd::Zero(p);

  if (p > 0) {
    PartialLikelihood cur = cp.evaluate(fit.gamma_hat);
    const auto bad = detail::degenerate_columns(cur.information, fit.names);
    if (bad.size() == static_cast<std::size_t>(p) && cur.information.diagonal().maxCoeff() <= 1e-12)
      fail(ErrorKind::non_identifiable,
           "non-identifiable: covariates are identical across every risk set");
    if (!bad.empty())
      fail(ErrorKind::rank_deficient, "rank deficient intensity design: collinear columns " +
                                          detail::join(bad));
    for (;;) {
      fit.final_score_norm = cur.score.lpNorm<Eigen::Infinity>();
      if (fit.final_score_norm < opt.tolerance) {
        fit.converged = true;
        break;
      }
      if (fit.iterations >= opt.max_iterations) break;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
      if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        fail(ErrorKind::non_identifiable, "non-identifiable: singular information matrix");
      Eigen::VectorXd step = ldlt.solve(cur.score);
      PartialLikelihood next;
      Eigen::VectorXd trial;
      int halvings = 0;
      for (;;) {
        trial = fit.gamma_hat + step;
        next = cp.evaluate(trial);
        if (std::isfinite(next.loglik) &&
            next.loglik >= cur.loglik - 1e-12 * (1.0 + std::abs(cur.loglik)))
          break;
        if (++halvings > opt.max_halvings) break;
        step *= 0.5;
      }
      fit.gamma_hat = trial;
      cur = std::move(next);
      ++fit.iterations;
      if (fit.gamma_hat.lpNorm<Eigen::Infinity>() > opt.divergence_norm)
        fail(ErrorKind::non_identifiable,
             "non-identifiable / separation: |gamma| exceeded " + std::to_string(opt.divergence_norm) +
                 " with score norm " + std::to_string(cur.score.lpNorm<Eigen::Infinity>()));
    }
  } else {
    fit.converged = true;
  }
  fit.breslow = cp.breslow(fit.gamma_hat);
  fit.constant_rate = fit.n_events / cp.exposure(fit.gamma_hat);
  return fit;
}

inline std::vector<BreslowStep> breslow_baseline(const Panel& panel, const Eigen::VectorXd& gamma,
                                                 const FeatureSpec& spec, RiskMode mode) {
  if (!gamma.allFinite()) fail(ErrorKind::invalid_argument, "gamma must be finite");
  return CountingProcess(panel, bind(spec, panel.schema()), mode).breslow(gamma);
}

inline double predict_intensity_factor(const IntensityFit& fit, const HistoryFeatures& features) {
  if (features.values.size() != fit.gamma_hat.size())
    fail(ErrorKind::invalid_argument, "feature length does not match gamma");
  return std::exp(fit.gamma_hat.dot(features.values));
}

}  // namespace iiwgee
