#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iiwgee/error.hpp"

namespace iiwgee {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// One subject's observed longitudinal record. Event times that were not
// observed are absent and behave as +infinity.
struct SubjectRecord {
  std::string id;
  std::vector<double> visit_times;
  std::vector<double> outcomes;
  std::vector<double> baseline_covariates;
  // One row per visit; rows are empty when the panel has no auxiliary columns.
  std::vector<std::vector<double>> aux_covariates;
  std::optional<double> dropout_time;
  std::optional<double> censor_time;
  std::optional<double> competing_time;
  double admin_end = kInfinity;

  std::size_t n_visits() const noexcept { return visit_times.size(); }
  double dropout_or_inf() const noexcept { return dropout_time.value_or(kInfinity); }
  double censor_or_inf() const noexcept { return censor_time.value_or(kInfinity); }
  double competing_or_inf() const noexcept { return competing_time.value_or(kInfinity); }
  bool dropped_out_at_visit(std::size_t k) const noexcept {
    return dropout_time && visit_times[k] == *dropout_time;
  }
};

struct Schema {
  std::vector<std::string> baseline;
  std::vector<std::string> aux;

  bool operator==(const Schema&) const = default;
};

// Immutable collection of subjects sharing a study end and covariate schema.
class Panel {
 public:
  Panel(std::vector<SubjectRecord> subjects, double tau, Schema schema = {})
      : subjects_(std::move(subjects)), tau_(tau), schema_(std::move(schema)) {
    if (subjects_.empty()) fail(ErrorKind::invalid_argument, "panel has no subjects");
    if (!(tau_ > 0.0) || !std::isfinite(tau_))
      fail(ErrorKind::invalid_argument, "panel tau must be positive and finite");
    for (auto& s : subjects_) {
      if (s.admin_end == kInfinity) s.admin_end = tau_;
      if (s.admin_end != tau_)
        fail(ErrorKind::invalid_argument, "subject " + s.id + " does not share the panel tau");
      if (s.baseline_covariates.size() != schema_.baseline.size())
        fail(ErrorKind::invalid_argument,
             "subject " + s.id + " baseline covariates do not match the schema");
    }
  }

  std::span<const SubjectRecord> subjects() const noexcept { return subjects_; }
  const SubjectRecord& operator[](std::size_t i) const { return subjects_[i]; }
  std::size_t size() const noexcept { return subjects_.size(); }
  double tau() const noexcept { return tau_; }
  const Schema& schema() const noexcept { return schema_; }

  std::size_t total_visits() const noexcept {
    std::size_t n = 0;
    for (const auto& s : subjects_) n += s.n_visits();
    return n;
  }

 private:
  std::vector<SubjectRecord> subjects_;
  double tau_;
  Schema schema_;
};

struct Violation {
  std::string subject_id;
  std::string rule;
};

inline std::vector<Violation> validate_panel(const Panel& panel) {
  std::vector<Violation> out;
  const auto& schema = panel.schema();
  for (const auto& s : panel.subjects()) {
    auto add = [&](std::string rule) { out.push_back({s.id, std::move(rule)}); };
    if (s.outcomes.size() != s.visit_times.size()) add("outcome count does not match visit count");
    if (!s.aux_covariates.empty() || !schema.aux.empty()) {
      if (s.aux_covariates.size() != s.visit_times.size()) {
        add("auxiliary covariate rows do not match visit count");
      } else if (std::any_of(s.aux_covariates.begin(), s.aux_covariates.end(),
                             [&](const auto& row) { return row.size() != schema.aux.size(); })) {
        add("auxiliary covariate width does not match schema");
      }
    }
    for (std::size_t k = 1; k < s.visit_times.size(); ++k) {
      if (!(s.visit_times[k] > s.visit_times[k - 1])) {
        add("non-increasing visit times");
        break;
      }
    }
    if (std::any_of(s.visit_times.begin(), s.visit_times.end(),
                    [](double t) { return !std::isfinite(t) || t < 0.0; }))
      add("visit time negative or non-finite");
    if (std::any_of(s.outcomes.begin(), s.outcomes.end(), [](double y) { return !std::isfinite(y); }))
      add("non-finite outcome");

    auto check_event = [&](const std::optional<double>& time, const char* name,
                           const char* after_rule) {
      if (!time) return;
      if (!(*time > 0.0)) {
        add(std::string("non-positive ") + name);
        return;
      }
      if (std::any_of(s.visit_times.begin(), s.visit_times.end(),
                      [&](double t) { return t > *time; }))
        add(after_rule);
    };
    check_event(s.dropout_time, "dropout time", "visit after dropout");
    check_event(s.censor_time, "censoring time", "visit after censoring");
    check_event(s.competing_time, "competing event time", "visit after competing event");
    if (std::any_of(s.visit_times.begin(), s.visit_times.end(),
                    [&](double t) { return t > s.admin_end; }))
      add("visit after study end");
  }
  return out;
}

enum class RiskMode { respect_dropout, ignore_dropout };

// Follow-up status zeta(t) = 1(D > t) 1(G > t) 1(L >= t), intersected with
// t <= tau. ignore_dropout treats D as +infinity.
inline bool at_risk(const SubjectRecord& s, double t,
                    RiskMode mode = RiskMode::respect_dropout) noexcept {
  const double d = mode == RiskMode::ignore_dropout ? kInfinity : s.dropout_or_inf();
  return d > t && s.censor_or_inf() > t && s.competing_or_inf() >= t && t <= s.admin_end;
}

// End of the predictable risk interval: the subject is in the visit risk set
// at t iff 0 < t <= follow_up_end (the left limit of at_risk).
inline double follow_up_end(const SubjectRecord& s,
                            RiskMode mode = RiskMode::respect_dropout) noexcept {
  const double d = mode == RiskMode::ignore_dropout ? kInfinity : s.dropout_or_inf();
  return std::min({d, s.censor_or_inf(), s.competing_or_inf(), s.admin_end});
}

// ---------------------------------------------------------------------------
// History features

enum class FeatureSource {
  constant,         // 1, for intercepts
  last_outcome,     // Y at the (lag+1)-th most recent visit
  visit_count,      // N(t-)
  time_since_last,  // t minus the most recent visit time (t itself if none)
  baseline,         // named baseline covariate
  last_aux,         // named auxiliary covariate at the (lag+1)-th most recent visit
};

enum class Transform {
  identity,
  log1p_floor,  // log(max(1 + v, floor))
  log_floor,    // log(max(v, floor))
};

struct FeatureTerm {
  std::string name;
  FeatureSource source = FeatureSource::last_outcome;
  std::string column;  // for baseline / last_aux
  Transform transform = Transform::identity;
  double floor = 0.01;
  int lag = 0;
  // Raw (pre-transform) fallbacks when the requested visit does not exist yet.
  std::optional<double> default_value;
  std::optional<std::string> default_baseline;

  // Resolved against a schema by bind().
  int column_index = -1;
  int default_baseline_index = -1;
};

struct FeatureSpec {
  std::vector<FeatureTerm> terms;

  std::size_t size() const noexcept { return terms.size(); }
  bool empty() const noexcept { return terms.empty(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(terms.size());
    for (const auto& t : terms) out.push_back(t.name);
    return out;
  }

  // True when every term is constant between consecutive visits.
  bool piecewise_constant() const noexcept {
    return std::none_of(terms.begin(), terms.end(), [](const FeatureTerm& t) {
      return t.source == FeatureSource::time_since_last;
    });
  }
};

namespace detail {

inline int find_column(const std::vector<std::string>& names, const std::string& col) {
  auto it = std::find(names.begin(), names.end(), col);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

inline std::string default_term_name(const FeatureTerm& t) {
  std::string base;
  switch (t.source) {
    case FeatureSource::constant: return "(intercept)";
    case FeatureSource::last_outcome: base = "y"; break;
    case FeatureSource::visit_count: base = "n_visits"; break;
    case FeatureSource::time_since_last: base = "gap"; break;
    case FeatureSource::baseline: base = t.column; break;
    case FeatureSource::last_aux: base = t.column; break;
  }
  if (t.lag > 0) base += "_lag" + std::to_string(t.lag);
  switch (t.transform) {
    case Transform::identity: return base;
    case Transform::log1p_floor: return "log1p(" + base + ")";
    case Transform::log_floor: return "log(" + base + ")";
  }
  return base;
}

}  // namespace detail

// Resolves column names to indices and fills default term names.
inline FeatureSpec bind(FeatureSpec spec, const Schema& schema) {
  for (auto& t : spec.terms) {
    if (t.lag < 0) fail(ErrorKind::invalid_argument, "feature lag must be non-negative");
    if (t.source == FeatureSource::baseline) {
      t.column_index = detail::find_column(schema.baseline, t.column);
      if (t.column_index < 0)
        fail(ErrorKind::invalid_argument, "unknown baseline column '" + t.column + "'");
    } else if (t.source == FeatureSource::last_aux) {
      t.column_index = detail::find_column(schema.aux, t.column);
      if (t.column_index < 0)
        fail(ErrorKind::invalid_argument, "unknown auxiliary column '" + t.column + "'");
    }
    if (t.default_baseline) {
      t.default_baseline_index = detail::find_column(schema.baseline, *t.default_baseline);
      if (t.default_baseline_index < 0)
        fail(ErrorKind::invalid_argument,
             "unknown baseline column '" + *t.default_baseline + "' used as default");
    }
    if (t.name.empty()) t.name = detail::default_term_name(t);
  }
  return spec;
}

inline double apply_transform(Transform tr, double v, double floor) noexcept {
  switch (tr) {
    case Transform::identity: return v;
    case Transform::log1p_floor: return std::log(std::max(1.0 + v, floor));
    case Transform::log_floor: return std::log(std::max(v, floor));
  }
  return v;
}

struct HistoryFeatures {
  Eigen::VectorXd values;
};

namespace detail {

// Features from the first `m` visits of `s`, evaluated at time t >= T_m.
inline void prefix_features(const SubjectRecord& s, std::size_t m, double t,
                            const FeatureSpec& spec, Eigen::Ref<Eigen::VectorXd> out) {
  for (std::size_t j = 0; j < spec.terms.size(); ++j) {
    const FeatureTerm& term = spec.terms[j];
    const auto lagged_visit = [&]() -> std::optional<std::size_t> {
      const std::size_t need = static_cast<std::size_t>(term.lag) + 1;
      if (m < need) return std::nullopt;
      return m - need;
    };
    const auto fallback = [&]() -> double {
      if (term.default_baseline_index >= 0)
        return s.baseline_covariates[static_cast<std::size_t>(term.default_baseline_index)];
      if (term.default_value) return *term.default_value;
      fail(ErrorKind::no_history, "no history available for feature '" + term.name +
                                      "' of subject " + s.id + " at t=" + std::to_string(t));
    };
    double raw = 0.0;
    switch (term.source) {
      case FeatureSource::constant: raw = 1.0; break;
      case FeatureSource::last_outcome: {
        auto k = lagged_visit();
        raw = k ? s.outcomes[*k] : fallback();
        break;
      }
      case FeatureSource::visit_count: raw = static_cast<double>(m); break;
      case FeatureSource::time_since_last: raw = m > 0 ? t - s.visit_times[m - 1] : t; break;
      case FeatureSource::baseline:
        if (term.column_index < 0) fail(ErrorKind::invalid_argument, "feature spec not bound");
        raw = s.baseline_covariates[static_cast<std::size_t>(term.column_index)];
        break;
      case FeatureSource::last_aux: {
        if (term.column_index < 0) fail(ErrorKind::invalid_argument, "feature spec not bound");
        auto k = lagged_visit();
        raw = k ? s.aux_covariates[*k][static_cast<std::size_t>(term.column_index)] : fallback();
        break;
      }
    }
    out[static_cast<Eigen::Index>(j)] =
        term.source == FeatureSource::constant ? raw
                                               : apply_transform(term.transform, raw, term.floor);
  }
}

// Number of visits strictly before t.
inline std::size_t visits_before(const SubjectRecord& s, double t) {
  return static_cast<std::size_t>(
      std::lower_bound(s.visit_times.begin(), s.visit_times.end(), t) - s.visit_times.begin());
}

}  // namespace detail

// Features of the observed history strictly before t.
inline HistoryFeatures history_features(const SubjectRecord& s, double t, const FeatureSpec& spec) {
  if (!(t > 0.0)) fail(ErrorKind::invalid_argument, "history features require t > 0");
  HistoryFeatures h{Eigen::VectorXd(static_cast<Eigen::Index>(spec.size()))};
  detail::prefix_features(s, detail::visits_before(s, t), t, spec, h.values);
  return h;
}

// Features of the history that includes visit k, evaluated at T_k. This is
// the covariate vector of the visit-level dropout model and the frozen
// intensity history used between visit k and the next one.
inline HistoryFeatures features_through_visit(const SubjectRecord& s, std::size_t k,
                                              const FeatureSpec& spec) {
  HistoryFeatures h{Eigen::VectorXd(static_cast<Eigen::Index>(spec.size()))};
  detail::prefix_features(s, k + 1, s.visit_times[k], spec, h.values);
  return h;
}

}  // namespace iiwgee
