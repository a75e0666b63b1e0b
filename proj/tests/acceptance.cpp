// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "iiwgee/cli.hpp"
#include "iiwgee/iiwgee.hpp"
#include "oracle.hpp"

using namespace iiwgee;

namespace {

constexpr std::uint64_t kMasterSeed = 1;

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Check {
  std::ostringstream detail;
  bool ok = true;

  void range(const std::string& what, double value, double lo, double hi) {
    const bool pass = value >= lo && value <= hi;
    ok = ok && pass;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s%s=%.4f in [%.4f, %.4f]%s", detail.tellp() > 0 ? "; " : "", what.c_str(),
                  value, lo, hi, pass ? "" : " (out)");
    detail << buf;
  }
  void band(const std::string& what, double value, double centre, double half) {
    range(what, value, centre - half, centre + half);
  }
  void flag(const std::string& what, bool pass) {
    ok = ok && pass;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (pass ? " ok" : " FAILED");
  }
};

ScenarioConfig scenario(Scenario s, int n, double target, double eta1) {
  auto cfg = ScenarioConfig::defaults(s);
  cfg.n = n;
  cfg.target_dropout = target;
  cfg.eta1 = eta1;
  cfg.seed = kMasterSeed;
  return resolve(cfg, threads());
}

McSummary monte_carlo(const ScenarioConfig& sc, int nsim, int B = 0) {
  auto a = AnalysisConfig::for_scenario(sc.scenario, sc.tau);
  a.trims = {100.0};
  McOptions o;
  o.nsim = nsim;
  o.threads = threads();
  o.bootstrap_B = B;
  return run_mc(sc, a, o);
}

const CellSummary& cell(const McSummary& s, Method m) {
  for (const auto& c : s.cells)
    if (c.method == m && c.trim == 100.0) return c;
  fail(ErrorKind::invalid_argument, "missing cell");
}

std::string describe(const ScenarioConfig& sc, const McSummary& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "eta0=%.4f dropout=%.3f failed=%d | ", *sc.eta0, s.dropout_proportion, s.failed);
  return buf;
}

// --- criteria --------------------------------------------------------------

Check criterion1() {
  const auto sc = scenario(Scenario::S1, 200, 0.20, 0.5);
  const auto s = monte_carlo(sc, 1000);
  const auto& c = cell(s, Method::IIWxIPW);
  Check k;
  k.detail << describe(sc, s);
  k.band("bias", c.bias, -0.19, 3 * c.mcse_bias);
  k.range("emp_se", c.emp_se, 2.8 * 0.85, 2.8 * 1.15);
  k.band("CP", c.coverage, 0.94, 0.03);
  return k;
}

Check criterion2() {
  const auto sc = scenario(Scenario::S1, 200, 0.80, 1.5);
  const auto s = monte_carlo(sc, 1000, 100);
  const auto& c = cell(s, Method::IIWxIPW);
  Check k;
  k.detail << describe(sc, s);
  k.band("bias", c.bias, -3.4, 3 * c.mcse_bias);
  k.band("CP", c.coverage, 0.69, 0.04);
  k.band("boot_CP", c.boot_coverage.value_or(-1.0), 0.78, 0.05);
  return k;
}

Check criterion3() {
  const auto sc = scenario(Scenario::S1, 200, 0.60, 1.0);
  const auto s = monte_carlo(sc, 1000);
  Check k;
  k.detail << describe(sc, s);
  k.band("NID_bias", cell(s, Method::IIW_NID).bias, -5.0, 0.25);
  k.band("IIW_bias", cell(s, Method::IIW).bias, -5.3, 0.23);
  k.band("IIWxIPW_bias", cell(s, Method::IIWxIPW).bias, -1.3, 0.8);
  return k;
}

Check criterion4() {
  const auto sc = scenario(Scenario::S2, 200, 0.20, -0.5);
  const auto s = monte_carlo(sc, 1000);
  const auto& c = cell(s, Method::IIWxIPW);
  Check k;
  k.detail << describe(sc, s);
  k.band("bias", c.bias, -0.02, 0.04);
  k.band("CP", c.coverage, 0.95, 0.03);
  return k;
}

// |IIWxIPW bias| must not grow from one n to the next beyond two combined
// MCSEs, must have shrunk to MC noise at the largest n, while the comparators
// stay more than 3 MCSEs from zero at every n.
Check criterion5() {
  Check k;
  double prev_abs = 0.0, prev_mcse = 0.0;
  bool first = true;
  for (int n : {200, 500, 1000, 2000}) {
    const auto sc = scenario(Scenario::S1, n, 0.20, 0.5);
    const auto s = monte_carlo(sc, 500);
    const auto& x = cell(s, Method::IIWxIPW);
    const double a = std::abs(x.bias);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%sn=%d: |IIWxIPW|=%.3f(%.3f) IIW=%.3f NID=%.3f", first ? "" : "; ", n, a,
                  x.mcse_bias, cell(s, Method::IIW).bias, cell(s, Method::IIW_NID).bias);
    k.detail << buf;
    if (!first && a - prev_abs > 2.0 * std::hypot(x.mcse_bias, prev_mcse)) {
      k.ok = false;
      k.detail << " (increase)";
    }
    for (Method m : {Method::IIW, Method::IIW_NID}) {
      const auto& c = cell(s, m);
      if (!(std::abs(c.bias) > 3.0 * c.mcse_bias)) {
        k.ok = false;
        k.detail << " (" << to_string(m) << " not separated from 0)";
      }
    }
    if (n == 2000 && !(a < 3.0 * x.mcse_bias)) {
      k.ok = false;
      k.detail << " (IIWxIPW bias not within 3 MCSE of 0 at n=2000)";
    }
    prev_abs = a;
    prev_mcse = x.mcse_bias;
    first = false;
  }
  return k;
}

Check criterion6() {
  auto cfg = ScenarioConfig::defaults(Scenario::S1);
  cfg.target_dropout = 0.20;
  cfg.seed = kMasterSeed;
  cfg = resolve(cfg, threads());
  const auto basis = OutcomeBasis::scenario1();
  const int reps = 2000;
  std::vector<Eigen::VectorXd> u(reps);
  Eigen::VectorXd beta(2);
  beta << cfg.beta0[0], cfg.beta0[1];
  parallel_for(reps, threads(), [&](std::size_t r) {
    const Panel p = generate_panel(cfg, iteration_seed(cfg.seed, r));
    IntensityFit in;
    in.spec = bind(default_intensity_spec(), p.schema());
    in.gamma_hat = Eigen::VectorXd::Constant(1, cfg.gamma0);
    in.constant_rate = cfg.lambda0;
    DropoutFit d;
    d.spec = bind(default_dropout_spec(), p.schema());
    d.eta_hat = Eigen::Vector2d(*cfg.eta0, cfg.eta1);
    const auto w = compose_weights(p, in, &d, Method::IIWxIPW);
    u[r] = estimating_function(p, w, basis, beta) / cfg.n;
  });
  Check k;
  for (Eigen::Index j = 0; j < 2; ++j) {
    std::vector<double> v;
    for (const auto& x : u) v.push_back(x[j]);
    const double m = mean(v), mcse = sample_sd(v) / std::sqrt(static_cast<double>(reps));
    k.range("|mean U" + std::to_string(j) + "/n|/MCSE", std::abs(m) / mcse, 0.0, 4.0);
  }
  return k;
}

Check criterion7() {
  Check k;
  std::mt19937_64 rng(kMasterSeed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);

  // Partial likelihood: score vs central differences, sweep vs oracle.
  {
    auto cfg = ScenarioConfig::defaults(Scenario::S1);
    cfg.n = 150;
    cfg.eta0 = -9.84;
    const Panel p = generate_panel(cfg, 3);
    FeatureTerm count;
    count.source = FeatureSource::visit_count;
    count.transform = Transform::log1p_floor;
    auto spec = default_intensity_spec();
    spec.terms.push_back(count);
    CountingProcess cp(p, bind(spec, p.schema()), RiskMode::respect_dropout);
    bool fd_ok = true;
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::Vector2d g(unif(rng), 0.4 * unif(rng));
      const auto at = cp.evaluate(g);
      for (Eigen::Index j = 0; j < 2; ++j) {
        Eigen::Vector2d a = g, b = g;
        a[j] += 1e-5;
        b[j] -= 1e-5;
        const double fd = (cp.evaluate(a).loglik - cp.evaluate(b).loglik) / 2e-5;
        fd_ok = fd_ok && std::abs(fd - at.score[j]) <= 1e-6 * std::max(1.0, std::abs(at.score[j]));
      }
    }
    k.flag("PL score FD", fd_ok);
    std::vector<oracle::Subject> subs;
    for (const auto& s : p.subjects()) subs.push_back({s.visit_times, s.outcomes, follow_up_end(s)});
    CountingProcess one(p, bind(default_intensity_spec(), p.schema()), RiskMode::respect_dropout);
    bool pl_ok = true;
    for (double g : {-0.6, -0.336, 0.2}) {
      const double ref = oracle::log_partial_likelihood(subs, g);
      pl_ok = pl_ok && std::abs(one.evaluate(Eigen::VectorXd::Constant(1, g)).loglik - ref) <= 1e-10 * std::abs(ref);
    }
    k.flag("PL vs oracle", pl_ok);
  }

  // Logistic score vs central differences.
  {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd x(300, 3);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) {
      x.row(i) << 1.0, z(rng), z(rng);
      y[i] = std::bernoulli_distribution(0.3)(rng) ? 1.0 : 0.0;
    }
    bool ok = true;
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::Vector3d e(z(rng), z(rng), z(rng));
      const auto at = bernoulli_loglik(x, y, e);
      for (Eigen::Index j = 0; j < 3; ++j) {
        Eigen::Vector3d a = e, b = e;
        a[j] += 1e-5;
        b[j] -= 1e-5;
        const double fd = (bernoulli_loglik(x, y, a).loglik - bernoulli_loglik(x, y, b).loglik) / 2e-5;
        ok = ok && std::abs(fd - at.score[j]) <= 1e-6 * std::max(1.0, std::abs(at.score[j]));
      }
    }
    k.flag("logistic score FD", ok);
  }

  // WLS orthogonality on an IIWxIPW-weighted simulated panel.
  {
    auto cfg = ScenarioConfig::defaults(Scenario::S1);
    cfg.eta0 = -9.84;
    const Panel p = generate_panel(cfg, 4);
    auto a = AnalysisConfig::for_scenario(Scenario::S1, 16.0);
    const auto fits = fit_models(p, a);
    const auto w = method_weights(p, fits, Method::IIWxIPW, StabilizerKind::unit);
    const auto fit = fit_wgee(p, w, a.basis);
    const auto d = wgee_design(p, w, a.basis);
    const Eigen::VectorXd u = estimating_function(p, w, a.basis, fit.beta_hat);
    const Eigen::VectorXd scale = d.x.cwiseAbs().transpose() * (d.w.array() * d.y.array().abs()).matrix();
    bool ok = true;
    for (Eigen::Index j = 0; j < u.size(); ++j) ok = ok && std::abs(u[j]) <= 1e-8 * scale[j];
    k.flag("WLS orthogonality", ok);
  }

  // Closed-form AUC coefficients vs 64-node quadrature.
  {
    bool ok = true;
    for (const auto& [basis, tau] : {std::pair{OutcomeBasis::scenario1(), 16.0}, std::pair{OutcomeBasis::scenario2(), 3.5}}) {
      const auto q = auc_coefficients(basis, tau), c = auc_coefficients_closed_form(basis, tau);
      for (Eigen::Index j = 0; j < q.size(); ++j) ok = ok && std::abs(q[j] - c[j]) <= 1e-10 * std::abs(c[j]);
    }
    k.flag("AUC closed form vs quadrature", ok);
  }

  // Visit-time dropout survival vs two-state Monte Carlo.
  {
    bool ok = true;
    for (const auto& [pi, rate, gap] : {std::tuple{0.2, 0.5, 2.0}, std::tuple{0.5, 1.0, 0.7}, std::tuple{0.1, 2.0, 1.2}}) {
      const double closed = survival_given_no_visit(gap, 0.0, rate, 1.0, pi / (1.0 - pi));
      const auto mc = oracle::still_enrolled_given_no_visit(pi, rate, gap, 400000, 99);
      ok = ok && std::abs(mc.estimate - closed) < 3.0 * mc.se;
    }
    k.flag("dropout survival vs two-state MC", ok);
  }

  // Trimming idempotence and monotonicity.
  {
    std::lognormal_distribution<double> ln(0.0, 1.5);
    bool ok = true;
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> w(1 + rep * 3);
      for (auto& v : w) v = ln(rng);
      std::vector<double> prev;
      for (double p : {90.0, 99.0, 99.5, 99.9, 100.0}) {
        const auto t = trim(w, p);
        ok = ok && trim(t, p) == t && t == oracle::nearest_rank_trim(w, p);
        for (std::size_t i = 0; i < prev.size(); ++i) ok = ok && prev[i] <= t[i];
        prev = t;
      }
    }
    k.flag("trimming", ok);
  }

  // Byte-identical CLI outputs across thread counts.
  {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "iiwgee_acceptance";
    fs::remove_all(dir);
    write_file_atomic(dir / "mc.yaml",
                      "seed: 1\nscenario:\n  name: S1\n  n: 100\n  target_dropout: 0.2\n  calibration:\n"
                      "    subjects: 5000\nmc:\n  nsim: 12\n  bootstrap_B: 5\n");
    std::ostringstream sink;
    auto run = [&](const char* sub, const char* t, const fs::path& out) {
      const std::string cfg = (dir / "mc.yaml").string(), o = out.string();
      const char* argv[] = {"iiwgee", sub, "--config", cfg.c_str(), "--threads", t, "--output-dir", o.c_str()};
      return cli::cli_main(8, argv, sink);
    };
    bool ok = run("mc", "1", dir / "a") == 0 && run("mc", "8", dir / "b") == 0 &&
              run("simulate", "1", dir / "a") == 0 && run("simulate", "8", dir / "b") == 0;
    for (const char* f : {"mc_summary.csv", "visits.csv", "events.csv"})
      ok = ok && read_file(dir / "a" / f) == read_file(dir / "b" / f);
    k.flag("thread determinism", ok);
  }
  return k;
}

Check criterion8() {
  auto cfg = ScenarioConfig::defaults(Scenario::S1);
  cfg.n = 10000;
  cfg.sigma_phi = cfg.sigma_eps = 0.0;
  cfg.beta0 = {std::numbers::e - 1.0, 0.0};
  cfg.informative_dropout = false;
  cfg.censoring = false;
  cfg.visit_dependence = VisitDependence::current;
  const Panel p = generate_panel(cfg, iteration_seed(kMasterSeed, 0), threads());
  std::vector<double> counts;
  for (const auto& s : p.subjects()) counts.push_back(static_cast<double>(s.n_visits()));
  const double m = mean(counts), se = sample_sd(counts) / std::sqrt(static_cast<double>(counts.size()));
  Check k;
  k.band("mean visits", m, 16.0 * std::exp(-0.336), 3.0 * se);
  return k;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"1 S1 (20%, eta1=0.5) IIWxIPW", criterion1},
      {"2 S1 (80%, eta1=1.5) IIWxIPW with bootstrap", criterion2},
      {"3 S1 comparator separation (60%, eta1=1.0)", criterion3},
      {"4 S2 (20%, eta1=-0.5) IIWxIPW", criterion4},
      {"5 consistency trend in n", criterion5},
      {"6 mean-zero estimating function", criterion6},
      {"7 oracle and property suites", criterion7},
      {"8 degenerate generator visit count", criterion8},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!wanted.empty() && !wanted.count(static_cast<int>(i + 1))) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << "error: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %s | %s [%.0fs]\n", c.ok ? "PASS" : "FAIL", criteria[i].first.c_str(),
                c.detail.str().c_str(), secs);
    std::fflush(stdout);
    failures += c.ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
