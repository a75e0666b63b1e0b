#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iiwgee/core_model.hpp"
#include "iiwgee/dropout.hpp"
#include "iiwgee/parallel.hpp"
#include "iiwgee/rng.hpp"

namespace iiwgee {

enum class Scenario { S1, S2 };

inline std::string to_string(Scenario s) { return s == Scenario::S1 ? "S1" : "S2"; }

// How the visit intensity sees the outcome process.
enum class VisitDependence {
  // Through the most recently observed outcome; constant between visits.
  last_observed,
  // Through Y(t) with fresh noise at every grid point.
  current,
};

inline std::string to_string(VisitDependence v) {
  return v == VisitDependence::last_observed ? "last_observed" : "current";
}

struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  int n = 200;
  double gamma0 = -0.336;
  std::vector<double> beta0{16.4, -3.1};
  double tau = 16.0;
  double c = 2.0;
  double lambda0 = 1.0;
  double sigma_phi = 1.0;
  double sigma_eps = 2.0;
  double eta1 = 0.5;
  std::optional<double> eta0;
  std::optional<double> target_dropout;
  double grid_dt = 0.01;
  std::uint64_t seed = 1;

  VisitDependence visit_dependence = VisitDependence::last_observed;
  // Outcome value the intensity uses before the first visit (last_observed).
  double pre_visit_outcome = 0.0;
  bool informative_dropout = true;
  bool censoring = true;

  int calibration_subjects = 50000;
  std::uint64_t calibration_seed = 20240601;
  double calibration_tolerance = 0.005;
  double eta0_lower = -40.0;
  double eta0_upper = 40.0;
  bool calibrated = false;  // eta0 was produced from target_dropout

  static ScenarioConfig defaults(Scenario s) {
    ScenarioConfig c;
    c.scenario = s;
    if (s == Scenario::S2) {
      c.gamma0 = 0.5;
      c.beta0 = {3.3, 4.0, 10.5};
      c.tau = 3.5;
      c.c = 3.0;
      c.eta1 = -0.5;
    }
    return c;
  }

  void validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::validation, m); };
    if (n <= 0) bad("n must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau)) bad("tau must be positive");
    if (!(c > 0.0)) bad("c must be positive");
    if (!(lambda0 > 0.0)) bad("lambda0 must be positive");
    if (!(sigma_phi >= 0.0) || !(sigma_eps >= 0.0)) bad("standard deviations must be non-negative");
    if (!(grid_dt > 0.0) || grid_dt > tau / 100.0 * (1.0 + 1e-12)) bad("grid_dt must lie in (0, tau/100]");
    if (beta0.size() != (scenario == Scenario::S1 ? 2u : 3u))
      bad("beta0 must have " + std::string(scenario == Scenario::S1 ? "2" : "3") + " entries for " +
          to_string(scenario));
    if (informative_dropout) {
      if (calibrated ? !eta0 : eta0.has_value() == target_dropout.has_value())
        bad("exactly one of eta0 and target_dropout must be given");
      if (target_dropout && !(*target_dropout > 0.0 && *target_dropout < 1.0))
        bad("target_dropout must lie in (0, 1)");
    }
    if (calibration_subjects <= 0) bad("calibration_subjects must be positive");
    if (!(eta0_lower < eta0_upper)) bad("calibration bounds must be increasing");
  }
};

inline double mean_trajectory(Scenario scenario, const std::vector<double>& beta, double t) {
  if (scenario == Scenario::S1) return beta.at(0) + beta.at(1) * std::log1p(t);
  const double inv = 1.0 / ((1.0 + t) * (1.0 + t));
  return beta.at(0) + beta.at(1) * inv + beta.at(2) * inv * std::log1p(t);
}

// A subject's visits up to min(G, tau) as if nobody dropped out, each with the
// uniform draw that decides dropout at that visit. Informative dropout only
// truncates this path, so calibration can reuse it for every eta0.
struct LatentPath {
  double censor_time = kInfinity;
  std::vector<double> times;
  std::vector<double> outcomes;
  std::vector<double> dropout_uniforms;
};

namespace detail {

inline double visit_rate(const ScenarioConfig& cfg, double y) {
  return cfg.lambda0 * std::pow(std::max(1.0 + y, 0.01), cfg.gamma0);
}

[[noreturn]] inline void too_coarse(const ScenarioConfig& cfg, double rate) {
  fail(ErrorKind::grid_too_coarse, "grid too coarse: lambda*dt = " + std::to_string(rate * cfg.grid_dt) +
                                       " exceeds 0.1; use a smaller grid_dt");
}

}  // namespace detail

inline LatentPath latent_path(const ScenarioConfig& cfg, std::uint64_t subject_seed) {
  Engine rng = make_engine(subject_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  LatentPath path;
  const double b = cfg.sigma_phi * normal(rng);
  const double g = cfg.c * cfg.tau * unif(rng);
  if (cfg.censoring) path.censor_time = g;
  const double end = std::min(path.censor_time, cfg.tau);
  const auto last_step = static_cast<std::int64_t>(std::llround(cfg.tau / cfg.grid_dt));

  auto record = [&](double t, double y) {
    path.times.push_back(t);
    path.outcomes.push_back(y);
    path.dropout_uniforms.push_back(unif(rng));
  };

  if (cfg.visit_dependence == VisitDependence::current) {
    for (std::int64_t j = 1; j <= last_step; ++j) {
      const double t = static_cast<double>(j) * cfg.grid_dt;
      if (t >= end) break;
      const double y = mean_trajectory(cfg.scenario, cfg.beta0, t) + b + cfg.sigma_eps * normal(rng);
      const double rate = detail::visit_rate(cfg, y);
      if (rate * cfg.grid_dt > 0.1) detail::too_coarse(cfg, rate);
      if (unif(rng) < rate * cfg.grid_dt) record(t, y);
    }
    return path;
  }

  // Between visits the intensity is constant, so the number of grid steps to
  // the next visit is geometric: the same law as a step-by-step walk.
  double y_last = cfg.pre_visit_outcome;
  std::int64_t j = 0;
  for (;;) {
    const double rate = detail::visit_rate(cfg, y_last);
    const double p = rate * cfg.grid_dt;
    if (p > 0.1) detail::too_coarse(cfg, rate);
    j += std::geometric_distribution<std::int64_t>(p)(rng) + 1;
    if (j > last_step) break;
    const double t = static_cast<double>(j) * cfg.grid_dt;
    if (t >= end) break;
    const double y = mean_trajectory(cfg.scenario, cfg.beta0, t) + b + cfg.sigma_eps * normal(rng);
    record(t, y);
    y_last = y;
  }
  return path;
}

// Index of the first visit at which the subject drops out, if any.
inline std::optional<std::size_t> dropout_visit(const LatentPath& path, double eta0, double eta1) {
  for (std::size_t k = 0; k < path.times.size(); ++k)
    if (path.dropout_uniforms[k] < detail::expit(eta0 + eta1 * path.outcomes[k])) return k;
  return std::nullopt;
}

inline SubjectRecord apply_dropout(const LatentPath& path, const ScenarioConfig& cfg, std::string id) {
  SubjectRecord s;
  s.id = std::move(id);
  s.admin_end = cfg.tau;
  std::size_t keep = path.times.size();
  if (cfg.informative_dropout) {
    if (!cfg.eta0) fail(ErrorKind::invalid_argument, "eta0 is not resolved; calibrate first");
    if (auto k = dropout_visit(path, *cfg.eta0, cfg.eta1)) {
      keep = *k + 1;
      s.dropout_time = path.times[*k];
    }
  }
  s.visit_times.assign(path.times.begin(), path.times.begin() + static_cast<std::ptrdiff_t>(keep));
  s.outcomes.assign(path.outcomes.begin(), path.outcomes.begin() + static_cast<std::ptrdiff_t>(keep));
  if (path.censor_time < cfg.tau) s.censor_time = path.censor_time;
  return s;
}

inline SubjectRecord generate_subject(const ScenarioConfig& cfg, std::uint64_t subject_seed,
                                      std::string id = "1") {
  return apply_dropout(latent_path(cfg, subject_seed), cfg, std::move(id));
}

inline Panel generate_panel(const ScenarioConfig& cfg, std::uint64_t panel_seed, unsigned threads = 1) {
  cfg.validate();
  std::vector<SubjectRecord> subjects(static_cast<std::size_t>(cfg.n));
  parallel_for(subjects.size(), threads, [&](std::size_t i) {
    subjects[i] = generate_subject(cfg, derive_seed(panel_seed, i), std::to_string(i + 1));
  });
  return Panel(std::move(subjects), cfg.tau);
}

inline double dropout_proportion(const Panel& panel) {
  std::size_t d = 0;
  for (const auto& s : panel.subjects()) d += s.dropout_time ? 1 : 0;
  return static_cast<double>(d) / static_cast<double>(panel.size());
}

inline double dropout_proportion(const std::vector<LatentPath>& paths, double eta0, double eta1) {
  std::size_t d = 0;
  for (const auto& p : paths) d += dropout_visit(p, eta0, eta1) ? 1 : 0;
  return static_cast<double>(d) / static_cast<double>(paths.size());
}

struct Calibration {
  double eta0 = 0.0;
  double proportion = 0.0;
  int iterations = 0;
};

inline std::vector<LatentPath> pilot_paths(const ScenarioConfig& cfg, unsigned threads = 1) {
  std::vector<LatentPath> paths(static_cast<std::size_t>(cfg.calibration_subjects));
  parallel_for(paths.size(), threads,
               [&](std::size_t i) { paths[i] = latent_path(cfg, derive_seed(cfg.calibration_seed, i)); });
  return paths;
}

// Bisection on eta0 for a target share of subjects with an observed dropout.
// Common random numbers make the pilot proportion monotone in eta0.
inline Calibration calibrate_eta0_on_paths(const std::vector<LatentPath>& paths, double target, double eta1,
                                           double lower, double upper, double tolerance) {
  if (!(target > 0.0 && target < 1.0))
    fail(ErrorKind::calibration, "target dropout proportion must lie in (0, 1)");
  const double p_lo = dropout_proportion(paths, lower, eta1);
  const double p_hi = dropout_proportion(paths, upper, eta1);
  if (p_lo - target > tolerance || target - p_hi > tolerance)
    fail(ErrorKind::calibration, "target dropout " + std::to_string(target) +
                                     " unreachable for eta0 in [" + std::to_string(lower) + ", " +
                                     std::to_string(upper) + "] (proportions " + std::to_string(p_lo) +
                                     " to " + std::to_string(p_hi) + ")");
  Calibration cal;
  double lo = lower, hi = upper;
  for (cal.iterations = 1; cal.iterations <= 200; ++cal.iterations) {
    cal.eta0 = 0.5 * (lo + hi);
    cal.proportion = dropout_proportion(paths, cal.eta0, eta1);
    if (std::abs(cal.proportion - target) < tolerance) return cal;
    (cal.proportion < target ? lo : hi) = cal.eta0;
  }
  fail(ErrorKind::calibration, "bisection on eta0 did not reach the tolerance");
}

inline Calibration calibrate_eta0(const ScenarioConfig& cfg, unsigned threads = 1) {
  if (!cfg.target_dropout) fail(ErrorKind::calibration, "calibration needs target_dropout");
  ScenarioConfig pilot = cfg;
  pilot.informative_dropout = false;
  return calibrate_eta0_on_paths(pilot_paths(pilot, threads), *cfg.target_dropout, cfg.eta1, cfg.eta0_lower,
                                 cfg.eta0_upper, cfg.calibration_tolerance);
}

// Returns a config with eta0 fixed, calibrating it when only a target is given.
inline ScenarioConfig resolve(ScenarioConfig cfg, unsigned threads = 1,
                              std::optional<Calibration>* calibration = nullptr) {
  cfg.validate();
  if (cfg.informative_dropout && !cfg.eta0) {
    const Calibration cal = calibrate_eta0(cfg, threads);
    cfg.eta0 = cal.eta0;
    cfg.calibrated = true;
    if (calibration) *calibration = cal;
  }
  return cfg;
}

}  // namespace iiwgee
