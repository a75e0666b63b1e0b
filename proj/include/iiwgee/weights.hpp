#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "iiwgee/core_model.hpp"
#include "iiwgee/dropout.hpp"
#include "iiwgee/intensity.hpp"
#include "iiwgee/panel_io.hpp"

namespace iiwgee {

enum class Method { IIW_NID, IIW, IIWxIPW };

inline constexpr Method kAllMethods[] = {Method::IIW_NID, Method::IIW, Method::IIWxIPW};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::IIW_NID: return "IIW-NID";
    case Method::IIW: return "IIW";
    case Method::IIWxIPW: return "IIWxIPW";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "IIW-NID" || s == "IIW_NID") return Method::IIW_NID;
  if (s == "IIW") return Method::IIW;
  if (s == "IIWxIPW" || s == "IIW_IPW" || s == "IIWXIPW") return Method::IIWxIPW;
  return std::nullopt;
}

enum class StabilizerKind { unit, locally_constant };

struct WeightRecord {
  std::size_t subject = 0;  // index into the panel
  std::size_t visit = 0;
  double time = 0.0;
  double rho = 0.0;  // after stabilization
  double untrimmed_weight = 0.0;
  double weight = 0.0;
};

struct WeightSet {
  Method method = Method::IIW;
  std::optional<double> trim_percentile;
  std::vector<WeightRecord> records;  // panel order: subject, then visit

  std::vector<double> weights() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.weight);
    return out;
  }
};

// Stabilizing function h(t): identically 1, or a locally constant kernel
// smooth of (times, values) tabulated on a grid and read off at the nearest
// grid node.
class Stabilizer {
 public:
  static Stabilizer unit() { return Stabilizer(); }

  static Stabilizer locally_constant(std::vector<double> times, const std::vector<double>& values,
                                     double span = 0.75, std::size_t grid_size = 257) {
    const std::size_t n = times.size();
    if (n != values.size()) fail(ErrorKind::invalid_argument, "stabilizer times and values differ in length");
    if (n < 10) fail(ErrorKind::invalid_argument, "locally constant stabilizer needs at least 10 points");
    if (!(span > 0.0 && span <= 1.0)) fail(ErrorKind::invalid_argument, "span must lie in (0, 1]");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
    std::vector<double> t(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = times[order[i]];
      v[i] = values[order[i]];
    }
    Stabilizer h;
    h.kind_ = StabilizerKind::locally_constant;
    h.lo_ = t.front();
    h.hi_ = t.back();
    if (h.hi_ == h.lo_) grid_size = 1;
    h.grid_.resize(grid_size);
    for (std::size_t g = 0; g < grid_size; ++g) {
      const double x = grid_size == 1 ? h.lo_ : h.lo_ + (h.hi_ - h.lo_) * g / (grid_size - 1.0);
      h.grid_[g] = local_average(t, v, x, span);
    }
    return h;
  }

  StabilizerKind kind() const noexcept { return kind_; }

  double operator()(double t) const noexcept {
    if (kind_ == StabilizerKind::unit) return 1.0;
    if (grid_.size() == 1) return grid_.front();
    const double u = (std::clamp(t, lo_, hi_) - lo_) / (hi_ - lo_) * (grid_.size() - 1.0);
    return grid_[static_cast<std::size_t>(std::lround(u))];
  }

  // Epanechnikov-weighted mean of the ceil(span * n) points nearest to x.
  static double local_average(const std::vector<double>& t, const std::vector<double>& v, double x,
                              double span) {
    const std::size_t n = t.size();
    const std::size_t q = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-9)), 1, n);
    // The q nearest points form a contiguous window of the sorted times.
    std::size_t lo = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), x) - t.begin());
    std::size_t hi = lo;  // window [lo, hi)
    while (hi - lo < q) {
      if (lo == 0) ++hi;
      else if (hi == n) --lo;
      else if (x - t[lo - 1] <= t[hi] - x) --lo;
      else ++hi;
    }
    double radius = std::max(x - t[lo], t[hi - 1] - x);
    radius = radius > 0.0 ? radius * (1.0 + 1e-6) : 1.0;
    double num = 0.0, den = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double u = (t[i] - x) / radius;
      const double k = 1.0 - u * u;
      num += k * v[i];
      den += k;
    }
    return num / den;
  }

 private:
  StabilizerKind kind_ = StabilizerKind::unit;
  double lo_ = 0.0, hi_ = 0.0;
  std::vector<double> grid_;
};

inline Stabilizer stabilize(const std::vector<double>& times, const std::vector<double>& inverse_rhos,
                            StabilizerKind kind) {
  if (kind == StabilizerKind::unit) return Stabilizer::unit();
  return Stabilizer::locally_constant(times, inverse_rhos);
}

// Caps every weight at the pooled nearest-rank p-th percentile.
inline std::vector<double> trim(std::vector<double> weights, double percentile) {
  if (weights.empty()) fail(ErrorKind::invalid_argument, "cannot trim an empty weight list");
  if (!(percentile > 0.0 && percentile <= 100.0))
    fail(ErrorKind::invalid_argument, "trim percentile must lie in (0, 100]");
  if (percentile == 100.0) return weights;
  const auto n = weights.size();
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::vector<double> sorted = weights;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  const double cap = sorted[rank - 1];
  for (double& w : weights) w = std::min(w, cap);
  return weights;
}

inline WeightSet trim_weights(WeightSet set, std::optional<double> percentile) {
  set.trim_percentile = percentile;
  std::vector<double> w;
  w.reserve(set.records.size());
  for (const auto& r : set.records) w.push_back(r.untrimmed_weight);
  if (percentile && !w.empty()) w = trim(std::move(w), *percentile);
  for (std::size_t i = 0; i < w.size(); ++i) set.records[i].weight = w[i];
  return set;
}

// rho(T_ik) = exp(gamma' H(T_ik-)) [x P(D > T_ik | ...) for IIWxIPW] / h(T_ik).
// The dropout term follows the visit-time-dropout form with the intensity
// factor and dropout odds frozen at the previous visit; it is 1 at a
// subject's first visit and whenever no dropout fit is supplied.
inline WeightSet compose_weights(const Panel& panel, const IntensityFit& intensity,
                                 const DropoutFit* dropout, Method method,
                                 StabilizerKind stabilizer = StabilizerKind::unit) {
  WeightSet set;
  set.method = method;
  set.records.reserve(panel.total_visits());
  const auto p = static_cast<Eigen::Index>(intensity.spec.size());
  if (p != intensity.gamma_hat.size())
    fail(ErrorKind::invalid_argument, "intensity fit carries no bound feature spec");
  Eigen::VectorXd x(p);
  std::vector<double> times, base;
  times.reserve(panel.total_visits());
  base.reserve(panel.total_visits());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto& s = panel[i];
    for (std::size_t k = 0; k < s.n_visits(); ++k) {
      const double t = s.visit_times[k];
      detail::prefix_features(s, k, t, intensity.spec, x);
      const double factor = std::exp(intensity.gamma_hat.dot(x));
      double survival = 1.0;
      if (method == Method::IIWxIPW && dropout && k > 0) {
        const double odds = dropout_odds(*dropout, features_through_visit(s, k - 1, dropout->spec));
        survival = survival_given_no_visit(t, s.visit_times[k - 1], factor, intensity.constant_rate, odds);
      }
      times.push_back(t);
      base.push_back(factor * survival);
      set.records.push_back({i, k, t, 0.0, 0.0, 0.0});
    }
  }
  const Stabilizer h = stabilize(times, base, stabilizer);
  for (std::size_t r = 0; r < set.records.size(); ++r) {
    const double hv = h(times[r]);
    if (!(hv > 0.0)) fail(ErrorKind::positivity, "stabilizing function is not positive");
    auto& rec = set.records[r];
    rec.rho = base[r] / hv;
    if (!(rec.rho > 0.0) || !std::isfinite(rec.rho))
      fail(ErrorKind::positivity, "positivity violation: non-positive rho");
    rec.untrimmed_weight = rec.weight = 1.0 / rec.rho;
  }
  return set;
}

inline std::string weights_csv(const Panel& panel, const WeightSet& set, const std::string& comment = {}) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "id,time,rho,weight,method\n";
  const std::string m = to_string(set.method);
  for (const auto& r : set.records)
    out << panel[r.subject].id << ',' << format_number(r.time) << ',' << format_number(r.rho) << ','
        << format_number(r.weight) << ',' << m << '\n';
  return out.str();
}

}  // namespace iiwgee
