#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "iiwgee/dropout.hpp"
#include "iiwgee/intensity.hpp"
#include "iiwgee/parallel.hpp"
#include "iiwgee/rng.hpp"
#include "iiwgee/simulate.hpp"
#include "iiwgee/weights.hpp"
#include "iiwgee/wgee.hpp"

namespace iiwgee {

inline FeatureSpec default_intensity_spec() {
  FeatureTerm y;
  y.source = FeatureSource::last_outcome;
  y.transform = Transform::log1p_floor;
  y.default_value = 0.0;
  return {{y}};
}

inline FeatureSpec default_dropout_spec() {
  FeatureTerm one;
  one.source = FeatureSource::constant;
  FeatureTerm y;
  y.source = FeatureSource::last_outcome;
  return {{one, y}};
}

struct AnalysisConfig {
  FeatureSpec intensity = default_intensity_spec();
  FeatureSpec dropout = default_dropout_spec();
  OutcomeBasis basis = OutcomeBasis::scenario1();
  double tau = 16.0;
  StabilizerKind stabilizer = StabilizerKind::unit;
  std::vector<Method> methods{Method::IIW_NID, Method::IIW, Method::IIWxIPW};
  std::vector<double> trims{100.0, 99.9, 99.5, 99.0};  // 100 means untrimmed
  IntensityOptions intensity_options;
  LogisticOptions dropout_options;

  static AnalysisConfig for_scenario(Scenario s, double tau) {
    AnalysisConfig a;
    a.basis = s == Scenario::S1 ? OutcomeBasis::scenario1() : OutcomeBasis::scenario2();
    a.tau = tau;
    return a;
  }
};

struct MethodResult {
  Method method = Method::IIW;
  double trim = 100.0;
  AucEstimate auc;
  Eigen::VectorXd beta;
  bool converged = true;
};

struct AnalysisFits {
  std::optional<IntensityFit> intensity;         // respect_dropout
  std::optional<IntensityFit> intensity_nid;     // ignore_dropout
  std::optional<DropoutFit> dropout;             // absent when the panel has no dropouts
};

inline bool uses_dropout(Method m) { return m == Method::IIWxIPW; }

inline AnalysisFits fit_models(const Panel& panel, const AnalysisConfig& cfg) {
  AnalysisFits f;
  const bool want_respect = std::any_of(cfg.methods.begin(), cfg.methods.end(),
                                        [](Method m) { return m != Method::IIW_NID; });
  const bool want_nid = std::find(cfg.methods.begin(), cfg.methods.end(), Method::IIW_NID) != cfg.methods.end();
  const bool want_dropout = std::any_of(cfg.methods.begin(), cfg.methods.end(), uses_dropout);
  if (want_respect) f.intensity = fit_intensity(panel, cfg.intensity, RiskMode::respect_dropout, cfg.intensity_options);
  if (want_nid) f.intensity_nid = fit_intensity(panel, cfg.intensity, RiskMode::ignore_dropout, cfg.intensity_options);
  if (want_dropout && has_dropout_events(panel)) f.dropout = fit_dropout(panel, cfg.dropout, cfg.dropout_options);
  return f;
}

inline WeightSet method_weights(const Panel& panel, const AnalysisFits& fits, Method method,
                                StabilizerKind stabilizer) {
  const IntensityFit& in = method == Method::IIW_NID ? *fits.intensity_nid : *fits.intensity;
  const DropoutFit* d = uses_dropout(method) && fits.dropout ? &*fits.dropout : nullptr;
  return compose_weights(panel, in, d, method, stabilizer);
}

// Every configured (method, trim) cell, in config order (method-major).
inline std::vector<MethodResult> analyze_all(const Panel& panel, const AnalysisConfig& cfg) {
  const AnalysisFits fits = fit_models(panel, cfg);
  std::vector<MethodResult> out;
  for (Method m : cfg.methods) {
    const WeightSet base = method_weights(panel, fits, m, cfg.stabilizer);
    bool converged = (m == Method::IIW_NID ? fits.intensity_nid : fits.intensity)->converged;
    if (uses_dropout(m) && fits.dropout) converged = converged && fits.dropout->converged;
    for (double p : cfg.trims) {
      const WeightSet w = trim_weights(base, p < 100.0 ? std::optional<double>(p) : std::nullopt);
      const WgeeFit fit = fit_wgee(panel, w, cfg.basis);
      out.push_back({m, p, auc(fit, cfg.tau), fit.beta_hat, converged});
    }
  }
  return out;
}

inline MethodResult analyze(const Panel& panel, const AnalysisConfig& cfg, Method method, double trim = 100.0) {
  AnalysisConfig one = cfg;
  one.methods = {method};
  one.trims = {trim};
  return analyze_all(panel, one).front();
}

inline double true_auc(Scenario scenario, const std::vector<double>& beta, double tau) {
  const double l = std::log1p(tau);
  if (scenario == Scenario::S1) return beta.at(0) * tau + beta.at(1) * ((1.0 + tau) * l - tau);
  return beta.at(0) * tau + beta.at(1) * (1.0 - 1.0 / (1.0 + tau)) +
         beta.at(2) * (1.0 - (1.0 + l) / (1.0 + tau));
}

// Linear-interpolation sample quantile (R type 7).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) fail(ErrorKind::invalid_argument, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct CellSummary {
  Method method = Method::IIW;
  double trim = 100.0;
  int nsim = 0;  // iterations contributing
  double mean_auc = 0.0;
  double bias = 0.0;
  double emp_se = 0.0;
  double naive_se_mean = 0.0;
  double se_ratio = 0.0;  // naive_se_mean / emp_se
  double coverage = 0.0;
  double mcse_bias = 0.0;
  double mcse_coverage = 0.0;
  std::optional<double> boot_se_mean;
  std::optional<double> boot_coverage;
  std::optional<double> mcse_boot_coverage;
};

inline CellSummary summarize(const std::vector<double>& aucs, const std::vector<double>& ses, double truth) {
  if (aucs.size() != ses.size()) fail(ErrorKind::invalid_argument, "AUC and SE draws differ in length");
  if (aucs.size() < 2) fail(ErrorKind::invalid_argument, "summaries need at least two iterations");
  CellSummary c;
  const double n = static_cast<double>(aucs.size());
  c.nsim = static_cast<int>(aucs.size());
  c.mean_auc = mean(aucs);
  c.bias = c.mean_auc - truth;
  c.emp_se = sample_sd(aucs);
  c.naive_se_mean = mean(ses);
  c.se_ratio = c.emp_se > 0.0 ? c.naive_se_mean / c.emp_se : 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < aucs.size(); ++i)
    hits += std::abs(aucs[i] - truth) <= 1.96 * ses[i] ? 1 : 0;
  c.coverage = hits / n;
  c.mcse_bias = c.emp_se / std::sqrt(n);
  c.mcse_coverage = std::sqrt(c.coverage * (1.0 - c.coverage) / n);
  return c;
}

struct BootCell {
  Method method = Method::IIW;
  double trim = 100.0;
  std::vector<double> draws;
  double boot_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct BootSummary {
  int B = 0;
  int failed = 0;
  std::vector<BootCell> cells;
};

inline Panel resample(const Panel& panel, Engine& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, panel.size() - 1);
  std::vector<SubjectRecord> subjects;
  subjects.reserve(panel.size());
  for (std::size_t j = 0; j < panel.size(); ++j) {
    subjects.push_back(panel[pick(rng)]);
    subjects.back().id = std::to_string(j + 1);
  }
  return Panel(std::move(subjects), panel.tau(), panel.schema());
}

// Subject-level bootstrap with a full re-fit per resample.
inline BootSummary run_bootstrap(const Panel& panel, const AnalysisConfig& cfg, int B, std::uint64_t seed,
                                 unsigned threads = 1) {
  if (B < 2) fail(ErrorKind::invalid_argument, "bootstrap needs B >= 2");
  std::vector<std::optional<std::vector<MethodResult>>> res(static_cast<std::size_t>(B));
  std::vector<std::string> errors(static_cast<std::size_t>(B));
  parallel_for(res.size(), threads, [&](std::size_t b) {
    Engine rng = make_engine(derive_seed(seed, b));
    try {
      auto r = analyze_all(resample(panel, rng), cfg);
      if (std::all_of(r.begin(), r.end(), [](const MethodResult& m) { return m.converged; })) res[b] = std::move(r);
      else errors[b] = "non-converged fit";
    } catch (const Error& e) {
      errors[b] = e.what();
    }
  });
  BootSummary out;
  out.B = B;
  for (auto& r : res) out.failed += r ? 0 : 1;
  if (out.failed * 10 > B) {
    std::string first;
    for (auto& e : errors)
      if (!e.empty()) {
        first = e;
        break;
      }
    fail(ErrorKind::validation, std::to_string(out.failed) + " of " + std::to_string(B) +
                                    " bootstrap resamples failed (first: " + first + ")");
  }
  const std::size_t cells = cfg.methods.size() * cfg.trims.size();
  for (std::size_t c = 0; c < cells; ++c) {
    BootCell cell;
    for (auto& r : res) {
      if (!r) continue;
      cell.method = (*r)[c].method;
      cell.trim = (*r)[c].trim;
      cell.draws.push_back((*r)[c].auc.value);
    }
    cell.boot_se = sample_sd(cell.draws);
    cell.ci_low = quantile(cell.draws, 0.025);
    cell.ci_high = quantile(cell.draws, 0.975);
    out.cells.push_back(std::move(cell));
  }
  return out;
}

struct McOptions {
  int nsim = 100;
  unsigned threads = 1;
  int bootstrap_B = 0;  // > 0 adds bootstrap SE and percentile-interval coverage
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct McSummary {
  Scenario scenario = Scenario::S1;
  int n = 0;
  int nsim = 0;
  int failed = 0;
  double true_auc = 0.0;
  double dropout_proportion = 0.0;  // mean over iterations
  std::vector<CellSummary> cells;
  std::vector<std::string> failures;  // "iteration k: message"
  std::vector<std::string> warnings;
};

inline std::uint64_t iteration_seed(std::uint64_t master, std::size_t k) { return derive_seed(master, k, 0); }
inline std::uint64_t bootstrap_seed(std::uint64_t master, std::size_t k) { return derive_seed(master, k, 1); }

inline McSummary run_mc(const ScenarioConfig& scenario, const AnalysisConfig& cfg, const McOptions& opt) {
  if (opt.nsim < 2) fail(ErrorKind::invalid_argument, "nsim must be at least 2");
  scenario.validate();
  if (scenario.informative_dropout && !scenario.eta0)
    fail(ErrorKind::invalid_argument, "scenario eta0 is not resolved; calibrate first");
  const auto nsim = static_cast<std::size_t>(opt.nsim);

  struct Iteration {
    std::optional<std::vector<MethodResult>> results;
    std::optional<BootSummary> boot;
    double dropout = 0.0;
    std::string error;
  };
  std::vector<Iteration> its(nsim);
  std::size_t done = 0;
  std::mutex progress_mutex;
  parallel_for(nsim, opt.threads, [&](std::size_t k) {
    auto& it = its[k];
    try {
      const Panel panel = generate_panel(scenario, iteration_seed(scenario.seed, k));
      it.dropout = dropout_proportion(panel);
      it.results = analyze_all(panel, cfg);
      if (opt.bootstrap_B > 0) it.boot = run_bootstrap(panel, cfg, opt.bootstrap_B, bootstrap_seed(scenario.seed, k));
    } catch (const Error& e) {
      it.results.reset();
      it.error = e.what();
    }
    if (opt.progress) {
      std::lock_guard lock(progress_mutex);
      opt.progress(++done, nsim);
    }
  });

  McSummary s;
  s.scenario = scenario.scenario;
  s.n = scenario.n;
  s.nsim = opt.nsim;
  s.true_auc = true_auc(scenario.scenario, scenario.beta0, scenario.tau);
  std::vector<double> drop;
  for (std::size_t k = 0; k < nsim; ++k) {
    if (!its[k].results) {
      ++s.failed;
      s.failures.push_back("iteration " + std::to_string(k) + ": " + its[k].error);
    } else {
      drop.push_back(its[k].dropout);
    }
  }
  if (drop.empty()) fail(ErrorKind::validation, "all Monte Carlo iterations failed: " + s.failures.front());
  s.dropout_proportion = mean(drop);

  const std::size_t cells = cfg.methods.size() * cfg.trims.size();
  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<double> a, se, boot_se;
    int boot_hits = 0, excluded = 0;
    for (const auto& it : its) {
      if (!it.results) continue;
      const MethodResult& r = (*it.results)[c];
      if (!r.converged) {
        ++excluded;
        continue;
      }
      a.push_back(r.auc.value);
      se.push_back(r.auc.se);
      if (it.boot) {
        const BootCell& b = it.boot->cells[c];
        boot_se.push_back(b.boot_se);
        boot_hits += (b.ci_low <= s.true_auc && s.true_auc <= b.ci_high) ? 1 : 0;
      }
    }
    const Method m = cfg.methods[c / cfg.trims.size()];
    const double trim = cfg.trims[c % cfg.trims.size()];
    if (a.size() < 2) fail(ErrorKind::validation, "fewer than two usable iterations for " + to_string(m));
    CellSummary cell = summarize(a, se, s.true_auc);
    cell.method = m;
    cell.trim = trim;
    if (!boot_se.empty()) {
      const double nb = static_cast<double>(boot_se.size());
      cell.boot_se_mean = mean(boot_se);
      cell.boot_coverage = boot_hits / nb;
      cell.mcse_boot_coverage = std::sqrt(*cell.boot_coverage * (1.0 - *cell.boot_coverage) / nb);
    }
    if (excluded > 0)
      s.warnings.push_back(std::to_string(excluded) + " non-converged iterations excluded for " + to_string(m));
    s.cells.push_back(cell);
  }
  if (s.failed * 100 > opt.nsim)
    s.warnings.push_back(std::to_string(s.failed) + " of " + std::to_string(opt.nsim) +
                         " iterations failed (more than 1%)");
  return s;
}

}  // namespace iiwgee
