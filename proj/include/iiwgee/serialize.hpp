#pragma once

#include "json.hpp"

#include <Eigen/Dense>

#include <vector>

#include "iiwgee/harness.hpp"

namespace iiwgee {

using json = nlohmann::ordered_json;

namespace detail {

inline json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline json named(const std::vector<std::string>& names, const Eigen::VectorXd& v) {
  json out = json::object();
  for (std::size_t j = 0; j < names.size(); ++j) out[names[j]] = v[static_cast<Eigen::Index>(j)];
  return out;
}

}  // namespace detail

inline void to_json(json& j, const IntensityFit& f) {
  json breslow = json::array();
  for (const auto& s : f.breslow) breslow.push_back({s.time, s.increment});
  j = {{"gamma_hat", detail::named(f.names, f.gamma_hat)},
       {"risk_mode", f.risk_mode == RiskMode::respect_dropout ? "respect_dropout" : "ignore_dropout"},
       {"constant_rate", f.constant_rate},
       {"n_events", f.n_events},
       {"converged", f.converged},
       {"iterations", f.iterations},
       {"final_score_norm", f.final_score_norm},
       {"breslow", breslow}};
}

inline void to_json(json& j, const DropoutFit& f) {
  j = {{"eta_hat", detail::named(f.names, f.eta_hat)},
       {"converged", f.converged},
       {"iterations", f.iterations},
       {"final_score_norm", f.final_score_norm},
       {"n_records", f.n_records},
       {"n_dropouts", f.n_dropouts}};
}

inline void to_json(json& j, const AucEstimate& a) {
  j = {{"value", a.value}, {"se", a.se}, {"ci", {a.ci_low, a.ci_high}}};
}

inline void to_json(json& j, const WgeeFit& f) {
  j = {{"beta_hat", detail::named(f.basis.names(), f.beta_hat)},
       {"naive_cov", detail::matrix_json(f.naive_cov)},
       {"n_subjects", f.n_subjects},
       {"n_visits", f.n_visits}};
}

inline void to_json(json& j, const MethodResult& r) {
  j = {{"method", to_string(r.method)},
       {"trim", r.trim},
       {"auc", r.auc},
       {"beta", detail::vector_json(r.beta)},
       {"converged", r.converged}};
}

inline void to_json(json& j, const CellSummary& c) {
  j = {{"method", to_string(c.method)}, {"trim", c.trim},       {"nsim", c.nsim},
       {"mean_auc", c.mean_auc},        {"bias", c.bias},        {"emp_se", c.emp_se},
       {"naive_se_mean", c.naive_se_mean}, {"se_ratio", c.se_ratio}, {"coverage", c.coverage},
       {"mcse_bias", c.mcse_bias},      {"mcse_coverage", c.mcse_coverage}};
  if (c.boot_se_mean) {
    j["boot_se_mean"] = *c.boot_se_mean;
    j["boot_coverage"] = *c.boot_coverage;
    j["mcse_boot_coverage"] = *c.mcse_boot_coverage;
  }
}

inline void to_json(json& j, const BootCell& c) {
  j = {{"method", to_string(c.method)},
       {"trim", c.trim},
       {"boot_se", c.boot_se},
       {"boot_ci", {c.ci_low, c.ci_high}},
       {"draws", c.draws}};
}

inline void to_json(json& j, const BootSummary& b) {
  j = {{"B", b.B}, {"failed", b.failed}, {"cells", b.cells}};
}

inline void to_json(json& j, const ScenarioConfig& c) {
  j = {{"scenario", to_string(c.scenario)},
       {"n", c.n},
       {"gamma0", c.gamma0},
       {"beta0", c.beta0},
       {"tau", c.tau},
       {"c", c.c},
       {"lambda0", c.lambda0},
       {"sigma_phi", c.sigma_phi},
       {"sigma_eps", c.sigma_eps},
       {"eta1", c.eta1},
       {"eta0", c.eta0 ? json(*c.eta0) : json(nullptr)},
       {"target_dropout", c.target_dropout ? json(*c.target_dropout) : json(nullptr)},
       {"grid_dt", c.grid_dt},
       {"seed", c.seed},
       {"visit_dependence", to_string(c.visit_dependence)},
       {"pre_visit_outcome", c.pre_visit_outcome},
       {"informative_dropout", c.informative_dropout},
       {"censoring", c.censoring},
       {"calibration",
        {{"subjects", c.calibration_subjects},
         {"seed", c.calibration_seed},
         {"tolerance", c.calibration_tolerance},
         {"lower", c.eta0_lower},
         {"upper", c.eta0_upper}}}};
}

inline void to_json(json& j, const Calibration& c) {
  j = {{"eta0", c.eta0}, {"proportion", c.proportion}, {"iterations", c.iterations}};
}

inline void to_json(json& j, const McSummary& s) {
  j = {{"scenario", to_string(s.scenario)},
       {"n", s.n},
       {"nsim", s.nsim},
       {"failed", s.failed},
       {"true_auc", s.true_auc},
       {"dropout_proportion", s.dropout_proportion},
       {"cells", s.cells},
       {"failures", s.failures},
       {"warnings", s.warnings}};
}

}  // namespace iiwgee
