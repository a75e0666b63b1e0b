#pragma once

#include <yaml-cpp/yaml.h>

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "iiwgee/harness.hpp"
#include "iiwgee/panel_io.hpp"
#include "iiwgee/serialize.hpp"

namespace iiwgee::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kComputation = 1, kConfig = 2 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::filesystem::path visits;
  std::filesystem::path events;
  double tau = 0.0;
  std::vector<std::string> baseline_columns;
};

struct RunConfig {
  std::filesystem::path file;
  std::string hash;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::filesystem::path output_dir = ".";
  std::optional<ScenarioConfig> scenario;
  AnalysisConfig analysis;
  bool analysis_basis_given = false;
  std::optional<DataConfig> data;
  int nsim = 100;
  int mc_bootstrap_B = 0;
  std::vector<ScenarioConfig> grid;  // empty: the single base scenario
  int bootstrap_B = 100;
};

inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

class Reader {
 public:
  explicit Reader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void error_at(const YAML::Node& node, const std::string& msg) const {
    const auto m = node.Mark();
    if (m.line < 0) throw ConfigError(file_ + ": " + msg);
    throw ConfigError(file_ + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1) + ": " + msg);
  }

  void require_map(const YAML::Node& node, const std::string& where) const {
    if (!node.IsMap()) error_at(node, "'" + where + "' must be a mapping");
  }

  void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) const {
    require_map(map, where);
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) error_at(kv.first, "unknown key '" + key + "' in " + where);
    }
  }

  template <class T>
  T as(const YAML::Node& node, const std::string& what) const {
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      error_at(node, "invalid value for '" + what + "'");
    }
  }

  template <class T>
  void maybe(const YAML::Node& map, const char* key, T& out, const std::string& where) const {
    if (const auto n = map[key]) out = as<T>(n, where + "." + key);
  }

  const std::string& file() const noexcept { return file_; }

 private:
  std::string file_;
};

inline FeatureSource parse_source(const Reader& r, const YAML::Node& n) {
  const auto s = r.as<std::string>(n, "source");
  if (s == "constant") return FeatureSource::constant;
  if (s == "last_outcome") return FeatureSource::last_outcome;
  if (s == "visit_count") return FeatureSource::visit_count;
  if (s == "time_since_last") return FeatureSource::time_since_last;
  if (s == "baseline") return FeatureSource::baseline;
  if (s == "last_aux") return FeatureSource::last_aux;
  r.error_at(n, "unknown feature source '" + s + "'");
}

inline Transform parse_transform(const Reader& r, const YAML::Node& n) {
  const auto s = r.as<std::string>(n, "transform");
  if (s == "identity") return Transform::identity;
  if (s == "log1p_floor") return Transform::log1p_floor;
  if (s == "log_floor") return Transform::log_floor;
  r.error_at(n, "unknown transform '" + s + "'");
}

inline FeatureSpec parse_features(const Reader& r, const YAML::Node& list, const std::string& where) {
  if (!list.IsSequence()) r.error_at(list, "'" + where + "' must be a list");
  FeatureSpec spec;
  for (const auto& item : list) {
    r.check_keys(item, {"name", "source", "column", "transform", "floor", "lag", "default", "default_baseline"},
                 where + " entry");
    FeatureTerm t;
    if (!item["source"]) r.error_at(item, "feature entry needs 'source'");
    t.source = parse_source(r, item["source"]);
    if (item["transform"]) t.transform = parse_transform(r, item["transform"]);
    r.maybe(item, "name", t.name, where);
    r.maybe(item, "column", t.column, where);
    r.maybe(item, "floor", t.floor, where);
    r.maybe(item, "lag", t.lag, where);
    if (item["default"]) t.default_value = r.as<double>(item["default"], where + ".default");
    if (item["default_baseline"]) t.default_baseline = r.as<std::string>(item["default_baseline"], where + ".default_baseline");
    if ((t.source == FeatureSource::baseline || t.source == FeatureSource::last_aux) && t.column.empty())
      r.error_at(item, "feature source needs 'column'");
    if (t.lag < 0) r.error_at(item["lag"], "lag must be non-negative");
    spec.terms.push_back(std::move(t));
  }
  return spec;
}

inline OutcomeBasis parse_basis(const Reader& r, const YAML::Node& list) {
  if (!list.IsSequence()) r.error_at(list, "'analysis.basis' must be a list");
  OutcomeBasis basis;
  for (const auto& item : list) {
    if (item.IsMap()) {
      r.check_keys(item, {"baseline"}, "analysis.basis entry");
      basis.terms.push_back({BasisKind::baseline, r.as<std::string>(item["baseline"], "baseline")});
      continue;
    }
    const auto s = r.as<std::string>(item, "analysis.basis");
    const auto k = parse_basis_kind(s);
    if (!k || *k == BasisKind::baseline) r.error_at(item, "unknown basis term '" + s + "'");
    basis.terms.push_back({*k, {}});
  }
  if (basis.terms.empty()) r.error_at(list, "analysis.basis must not be empty");
  return basis;
}

inline void apply_scenario_keys(const Reader& r, const YAML::Node& n, ScenarioConfig& c, const std::string& where) {
  r.maybe(n, "n", c.n, where);
  r.maybe(n, "gamma0", c.gamma0, where);
  r.maybe(n, "beta0", c.beta0, where);
  r.maybe(n, "tau", c.tau, where);
  r.maybe(n, "c", c.c, where);
  r.maybe(n, "lambda0", c.lambda0, where);
  r.maybe(n, "sigma_phi", c.sigma_phi, where);
  r.maybe(n, "sigma_eps", c.sigma_eps, where);
  r.maybe(n, "eta1", c.eta1, where);
  r.maybe(n, "grid_dt", c.grid_dt, where);
  r.maybe(n, "pre_visit_outcome", c.pre_visit_outcome, where);
  r.maybe(n, "informative_dropout", c.informative_dropout, where);
  r.maybe(n, "censoring", c.censoring, where);
  if (n["eta0"] && n["target_dropout"])
    r.error_at(n["target_dropout"], "give either eta0 or target_dropout, not both");
  if (n["eta0"]) {
    c.eta0 = r.as<double>(n["eta0"], where + ".eta0");
    c.target_dropout.reset();
  }
  if (n["target_dropout"]) {
    c.target_dropout = r.as<double>(n["target_dropout"], where + ".target_dropout");
    c.eta0.reset();
  }
  if (const auto v = n["visit_dependence"]) {
    const auto s = r.as<std::string>(v, where + ".visit_dependence");
    if (s == "last_observed") c.visit_dependence = VisitDependence::last_observed;
    else if (s == "current") c.visit_dependence = VisitDependence::current;
    else r.error_at(v, "visit_dependence must be last_observed or current");
  }
}

inline Scenario parse_scenario_name(const Reader& r, const YAML::Node& n) {
  const auto s = r.as<std::string>(n, "scenario.name");
  if (s == "S1") return Scenario::S1;
  if (s == "S2") return Scenario::S2;
  r.error_at(n, "scenario.name must be S1 or S2");
}

inline void validate_scenario(const Reader& r, const YAML::Node& anchor, const ScenarioConfig& c) {
  try {
    c.validate();
  } catch (const Error& e) {
    r.error_at(anchor, e.what());
  }
}

inline const std::set<std::string> kScenarioKeys{
    "name",      "n",        "gamma0",         "beta0",    "tau",
    "c",         "lambda0",  "sigma_phi",      "sigma_eps", "eta1",
    "eta0",      "target_dropout", "grid_dt",  "visit_dependence", "pre_visit_outcome",
    "informative_dropout", "censoring", "calibration"};

}  // namespace detail

inline RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.file = path;
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  cfg.hash = fnv1a_hex(text);
  const detail::Reader r(path.string());
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path.string() + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError(path.string() + ": empty config");
  r.check_keys(root, {"seed", "threads", "output_dir", "scenario", "analysis", "data", "mc", "bootstrap"}, "config");
  r.maybe(root, "seed", cfg.seed, "config");
  r.maybe(root, "threads", cfg.threads, "config");
  if (root["output_dir"]) cfg.output_dir = r.as<std::string>(root["output_dir"], "output_dir");
  const auto base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto relative = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base_dir / p; };

  if (const auto s = root["scenario"]) {
    r.check_keys(s, detail::kScenarioKeys, "scenario");
    Scenario name = Scenario::S1;
    if (s["name"]) name = detail::parse_scenario_name(r, s["name"]);
    ScenarioConfig sc = ScenarioConfig::defaults(name);
    detail::apply_scenario_keys(r, s, sc, "scenario");
    if (const auto cal = s["calibration"]) {
      r.check_keys(cal, {"subjects", "seed", "tolerance", "lower", "upper"}, "scenario.calibration");
      r.maybe(cal, "subjects", sc.calibration_subjects, "calibration");
      r.maybe(cal, "seed", sc.calibration_seed, "calibration");
      r.maybe(cal, "tolerance", sc.calibration_tolerance, "calibration");
      r.maybe(cal, "lower", sc.eta0_lower, "calibration");
      r.maybe(cal, "upper", sc.eta0_upper, "calibration");
    }
    sc.seed = cfg.seed;
    detail::validate_scenario(r, s, sc);
    cfg.scenario = sc;
    cfg.analysis = AnalysisConfig::for_scenario(sc.scenario, sc.tau);
  }

  if (const auto a = root["analysis"]) {
    r.check_keys(a, {"methods", "trims", "stabilizer", "basis", "intensity_features", "dropout_features",
                     "dropout_separation_norm"},
                 "analysis");
    if (const auto m = a["methods"]) {
      if (!m.IsSequence() || m.size() == 0) r.error_at(m, "analysis.methods must be a non-empty list");
      cfg.analysis.methods.clear();
      for (const auto& item : m) {
        const auto name = r.as<std::string>(item, "analysis.methods");
        const auto method = parse_method(name);
        if (!method) r.error_at(item, "unknown method '" + name + "'");
        cfg.analysis.methods.push_back(*method);
      }
    }
    if (const auto t = a["trims"]) {
      if (!t.IsSequence() || t.size() == 0) r.error_at(t, "analysis.trims must be a non-empty list");
      cfg.analysis.trims.clear();
      for (const auto& item : t) {
        const auto p = r.as<double>(item, "analysis.trims");
        if (!(p > 0.0 && p <= 100.0)) r.error_at(item, "trim percentiles must lie in (0, 100]");
        cfg.analysis.trims.push_back(p);
      }
    }
    if (const auto st = a["stabilizer"]) {
      const auto s = r.as<std::string>(st, "analysis.stabilizer");
      if (s == "unit") cfg.analysis.stabilizer = StabilizerKind::unit;
      else if (s == "locally_constant") cfg.analysis.stabilizer = StabilizerKind::locally_constant;
      else r.error_at(st, "stabilizer must be unit or locally_constant");
    }
    if (const auto b = a["basis"]) {
      cfg.analysis.basis = detail::parse_basis(r, b);
      cfg.analysis_basis_given = true;
    }
    if (const auto f = a["intensity_features"]) cfg.analysis.intensity = detail::parse_features(r, f, "analysis.intensity_features");
    if (const auto f = a["dropout_features"]) cfg.analysis.dropout = detail::parse_features(r, f, "analysis.dropout_features");
    r.maybe(a, "dropout_separation_norm", cfg.analysis.dropout_options.separation_norm, "analysis");
  }

  if (const auto d = root["data"]) {
    r.check_keys(d, {"visits", "events", "tau", "baseline_columns"}, "data");
    for (const char* key : {"visits", "events", "tau"})
      if (!d[key]) r.error_at(d, std::string("data needs '") + key + "'");
    DataConfig dc;
    dc.visits = relative(r.as<std::string>(d["visits"], "data.visits"));
    dc.events = relative(r.as<std::string>(d["events"], "data.events"));
    dc.tau = r.as<double>(d["tau"], "data.tau");
    if (!(dc.tau > 0.0)) r.error_at(d["tau"], "data.tau must be positive");
    r.maybe(d, "baseline_columns", dc.baseline_columns, "data");
    cfg.data = dc;
    if (!cfg.scenario) cfg.analysis.tau = dc.tau;
  }

  if (const auto m = root["mc"]) {
    r.check_keys(m, {"nsim", "bootstrap_B", "grid"}, "mc");
    r.maybe(m, "nsim", cfg.nsim, "mc");
    r.maybe(m, "bootstrap_B", cfg.mc_bootstrap_B, "mc");
    if (cfg.nsim < 2) r.error_at(m["nsim"], "mc.nsim must be at least 2");
    if (cfg.mc_bootstrap_B < 0 || cfg.mc_bootstrap_B == 1) r.error_at(m["bootstrap_B"], "mc.bootstrap_B must be 0 or >= 2");
    if (const auto g = m["grid"]) {
      if (!cfg.scenario) r.error_at(g, "mc.grid needs a scenario section");
      if (!g.IsSequence()) r.error_at(g, "mc.grid must be a list");
      for (const auto& cell : g) {
        r.check_keys(cell, {"name", "n", "eta0", "target_dropout", "eta1"}, "mc.grid entry");
        ScenarioConfig sc = *cfg.scenario;
        if (cell["name"]) {
          const Scenario name = detail::parse_scenario_name(r, cell["name"]);
          if (name != sc.scenario) {
            sc = ScenarioConfig::defaults(name);
            sc.seed = cfg.seed;
          }
        }
        detail::apply_scenario_keys(r, cell, sc, "mc.grid");
        detail::validate_scenario(r, cell, sc);
        cfg.grid.push_back(sc);
      }
    }
  }

  if (const auto b = root["bootstrap"]) {
    r.check_keys(b, {"B"}, "bootstrap");
    r.maybe(b, "B", cfg.bootstrap_B, "bootstrap");
    if (cfg.bootstrap_B < 2) r.error_at(b["B"], "bootstrap.B must be at least 2");
  }
  return cfg;
}

namespace detail {

inline std::string stamp(const RunConfig& cfg) {
  return "config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed);
}

inline std::string trim_label(double p) {
  if (p >= 100.0) return "none";
  std::ostringstream s;
  s << p;
  return s.str();
}

inline AnalysisConfig analysis_for(const RunConfig& cfg, const ScenarioConfig& sc) {
  AnalysisConfig a = cfg.analysis;
  a.tau = sc.tau;
  if (!cfg.analysis_basis_given) a.basis = sc.scenario == Scenario::S1 ? OutcomeBasis::scenario1() : OutcomeBasis::scenario2();
  return a;
}

struct LoadedPanel {
  std::optional<Panel> panel;
  json source;
};

// Panel from the data section, or simulated from the scenario section.
inline LoadedPanel obtain_panel(const RunConfig& cfg) {
  LoadedPanel out;
  if (cfg.data) {
    out.panel = read_panel_csv(cfg.data->visits, cfg.data->events, cfg.data->tau, cfg.data->baseline_columns);
    const auto violations = validate_panel(*out.panel);
    if (!violations.empty()) {
      std::string msg = "panel failed validation:";
      for (const auto& v : violations) msg += "\n  subject " + v.subject_id + ": " + v.rule;
      fail(ErrorKind::validation, msg);
    }
    out.source = {{"visits", cfg.data->visits.string()}, {"events", cfg.data->events.string()}};
    return out;
  }
  if (!cfg.scenario) throw ConfigError(cfg.file.string() + ": a data or scenario section is required");
  std::optional<Calibration> cal;
  const ScenarioConfig sc = resolve(*cfg.scenario, cfg.threads, &cal);
  out.panel = generate_panel(sc, iteration_seed(sc.seed, 0), cfg.threads);
  out.source = {{"simulated", sc}};
  if (cal) out.source["calibration"] = *cal;
  return out;
}

inline json manifest_base(const RunConfig& cfg, const char* command) {
  return {{"command", command},
          {"config", cfg.file.filename().string()},
          {"config_hash", cfg.hash},
          {"seed", cfg.seed},
          {"versions",
           {{"iiwgee", kVersion},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION}}}};
}

}  // namespace detail

inline int cmd_simulate(const RunConfig& cfg) {
  if (!cfg.scenario) throw ConfigError(cfg.file.string() + ": simulate needs a scenario section");
  std::optional<Calibration> cal;
  const ScenarioConfig sc = resolve(*cfg.scenario, cfg.threads, &cal);
  const Panel panel = generate_panel(sc, iteration_seed(sc.seed, 0), cfg.threads);
  const auto stamp = detail::stamp(cfg);
  write_panel_csv(panel, cfg.output_dir / "visits.csv", cfg.output_dir / "events.csv", stamp);
  json j = detail::manifest_base(cfg, "simulate");
  j["scenario"] = sc;
  if (cal) j["calibration"] = *cal;
  j["n_subjects"] = panel.size();
  j["n_visits"] = panel.total_visits();
  j["dropout_proportion"] = dropout_proportion(panel);
  j["files"] = {"visits.csv", "events.csv"};
  write_file_atomic(cfg.output_dir / "simulate.json", j.dump(2) + "\n");
  return kOk;
}

inline int cmd_fit(const RunConfig& cfg) {
  auto loaded = detail::obtain_panel(cfg);
  const Panel& panel = *loaded.panel;
  const AnalysisConfig a = cfg.data || !cfg.scenario ? cfg.analysis : detail::analysis_for(cfg, *cfg.scenario);
  const auto stamp = detail::stamp(cfg);

  auto with_method = [](const std::string& who, auto&& f) {
    try {
      return f();
    } catch (const Error& e) {
      throw Error(e.kind(), who + ": " + e.what());
    }
  };
  std::optional<IntensityFit> in, in_nid;
  std::optional<DropoutFit> drop;
  json j = detail::manifest_base(cfg, "fit");
  j["data"] = loaded.source;
  json results = json::array();
  for (Method m : a.methods) {
    const std::string name = to_string(m);
    if (m == Method::IIW_NID && !in_nid)
      in_nid = with_method(name, [&] { return fit_intensity(panel, a.intensity, RiskMode::ignore_dropout, a.intensity_options); });
    if (m != Method::IIW_NID && !in)
      in = with_method(name, [&] { return fit_intensity(panel, a.intensity, RiskMode::respect_dropout, a.intensity_options); });
    if (uses_dropout(m) && !drop && has_dropout_events(panel))
      drop = with_method(name, [&] { return fit_dropout(panel, a.dropout, a.dropout_options); });
    const IntensityFit& fit_in = m == Method::IIW_NID ? *in_nid : *in;
    const WeightSet base = with_method(name, [&] {
      return compose_weights(panel, fit_in, uses_dropout(m) && drop ? &*drop : nullptr, m, a.stabilizer);
    });
    bool converged = fit_in.converged && (!uses_dropout(m) || !drop || drop->converged);
    for (double p : a.trims) {
      const WeightSet w = trim_weights(base, p < 100.0 ? std::optional<double>(p) : std::nullopt);
      const WgeeFit g = with_method(name, [&] { return fit_wgee(panel, w, a.basis); });
      const std::string csv = "weights_" + name + "_" + detail::trim_label(p) + ".csv";
      write_file_atomic(cfg.output_dir / csv, weights_csv(panel, w, stamp));
      MethodResult r{m, p, auc(g, a.tau), g.beta_hat, converged};
      json rj = r;
      rj["wgee"] = g;
      rj["weights_file"] = csv;
      results.push_back(rj);
    }
  }
  if (in) j["intensity"] = *in;
  if (in_nid) j["intensity_ignore_dropout"] = *in_nid;
  if (drop) j["dropout"] = *drop;
  j["results"] = results;
  write_file_atomic(cfg.output_dir / "fit.json", j.dump(2) + "\n");
  return kOk;
}

inline std::string mc_csv_header() {
  return "config,scenario,n,target_dropout,eta0,eta1,dropout_proportion,method,trim,nsim,true_auc,mean_auc,"
         "bias,mcse_bias,emp_se,naive_se_mean,se_ratio,coverage,mcse_coverage,boot_se_mean,boot_coverage,"
         "mcse_boot_coverage\n";
}

inline std::string mc_csv_rows(int config_index, const ScenarioConfig& sc, const McSummary& s) {
  std::ostringstream out;
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& c : s.cells) {
    out << config_index << ',' << to_string(sc.scenario) << ',' << sc.n << ',' << opt(sc.target_dropout) << ','
        << opt(sc.eta0) << ',' << format_number(sc.eta1) << ',' << format_number(s.dropout_proportion) << ','
        << to_string(c.method) << ',' << format_number(c.trim) << ',' << c.nsim << ','
        << format_number(s.true_auc) << ',' << format_number(c.mean_auc) << ',' << format_number(c.bias) << ','
        << format_number(c.mcse_bias) << ',' << format_number(c.emp_se) << ','
        << format_number(c.naive_se_mean) << ',' << format_number(c.se_ratio) << ','
        << format_number(c.coverage) << ',' << format_number(c.mcse_coverage) << ',' << opt(c.boot_se_mean)
        << ',' << opt(c.boot_coverage) << ',' << opt(c.mcse_boot_coverage) << '\n';
  }
  return out.str();
}

inline int cmd_mc(const RunConfig& cfg, std::ostream& log = std::cerr) {
  if (!cfg.scenario) throw ConfigError(cfg.file.string() + ": mc needs a scenario section");
  const std::vector<ScenarioConfig> cells = cfg.grid.empty() ? std::vector<ScenarioConfig>{*cfg.scenario} : cfg.grid;
  std::string csv = "# " + detail::stamp(cfg) + "\n" + mc_csv_header();
  json manifest = detail::manifest_base(cfg, "mc");
  manifest["nsim"] = cfg.nsim;
  manifest["bootstrap_B"] = cfg.mc_bootstrap_B;
  json configs = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::optional<Calibration> cal;
    const ScenarioConfig sc = resolve(cells[i], cfg.threads, &cal);
    McOptions opt;
    opt.nsim = cfg.nsim;
    opt.threads = cfg.threads;
    opt.bootstrap_B = cfg.mc_bootstrap_B;
    const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.nsim) / 20);
    opt.progress = [&, i](std::size_t done, std::size_t total) {
      if (done % step == 0 || done == total)
        log << "mc config " << i + 1 << "/" << cells.size() << ": " << done << "/" << total << "\n";
    };
    const McSummary s = run_mc(sc, detail::analysis_for(cfg, sc), opt);
    for (const auto& w : s.warnings) log << "warning: config " << i + 1 << ": " << w << "\n";
    csv += mc_csv_rows(static_cast<int>(i), sc, s);
    json cj = {{"config", i}, {"scenario", sc}, {"failed", s.failed}, {"warnings", s.warnings},
               {"failures", s.failures}, {"true_auc", s.true_auc}, {"dropout_proportion", s.dropout_proportion}};
    if (cal) cj["calibration"] = *cal;
    configs.push_back(cj);
  }
  manifest["configs"] = configs;
  manifest["outputs"] = {"mc_summary.csv"};
  write_file_atomic(cfg.output_dir / "mc_summary.csv", csv);
  write_file_atomic(cfg.output_dir / "mc_manifest.json", manifest.dump(2) + "\n");
  return kOk;
}

inline int cmd_bootstrap(const RunConfig& cfg) {
  auto loaded = detail::obtain_panel(cfg);
  const Panel& panel = *loaded.panel;
  const AnalysisConfig a = cfg.data || !cfg.scenario ? cfg.analysis : detail::analysis_for(cfg, *cfg.scenario);
  const auto point = analyze_all(panel, a);
  const BootSummary boot = run_bootstrap(panel, a, cfg.bootstrap_B, derive_seed(cfg.seed, 0, 1), cfg.threads);
  json j = detail::manifest_base(cfg, "bootstrap");
  j["data"] = loaded.source;
  j["B"] = boot.B;
  j["failed"] = boot.failed;
  json cells = json::array();
  for (std::size_t c = 0; c < boot.cells.size(); ++c) {
    json cj = boot.cells[c];
    cj["estimate"] = point[c].auc;
    cells.push_back(cj);
  }
  j["cells"] = cells;
  write_file_atomic(cfg.output_dir / "bootstrap.json", j.dump(2) + "\n");
  return kOk;
}

// Entry point shared by the executable and the tests.
inline int cli_main(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"IIW x IPW weighted GEE: simulation, fitting, Monte Carlo studies and bootstrap"};
  app.set_version_flag("--version", kVersion);
  std::string config;
  std::optional<unsigned> threads;
  std::optional<std::string> output_dir;
  app.require_subcommand(1, 1);
  for (const char* name : {"simulate", "fit", "mc", "bootstrap"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "run configuration (YAML)")->required();
    sub->add_option("--threads", threads, "worker threads");
    sub->add_option("--output-dir", output_dir, "directory for results");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, error;
    const int code = app.exit(e, out, error);
    err << error.str();
    std::cout << out.str();
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = load_config(config);
    if (threads) cfg.threads = std::max(1u, *threads);
    if (output_dir) cfg.output_dir = *output_dir;
    if (command == "simulate") return cmd_simulate(cfg);
    if (command == "fit") return cmd_fit(cfg);
    if (command == "mc") return cmd_mc(cfg, err);
    return cmd_bootstrap(cfg);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const Error& e) {
    err << command << " failed (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kComputation;
  } catch (const std::exception& e) {
    err << command << " failed: " << e.what() << "\n";
    return kComputation;
  }
}

}  // namespace iiwgee::cli
