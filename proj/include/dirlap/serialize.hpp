#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dirlap/errors.hpp"
#include "dirlap/fitter.hpp"
#include "dirlap/formula.hpp"
#include "dirlap/mcmc.hpp"
#include "dirlap/version.hpp"

// JSON artifacts: the fit (everything prediction needs), and the run manifest
// (everything a bit-exact re-run needs). Doubles are emitted with shortest
// round-trip formatting, and artifacts contain no wall-clock data, so a re-run
// with the same inputs produces byte-identical files.

namespace dirlap {

using json = nlohmann::ordered_json;

inline constexpr int fit_schema_version = 1;

namespace detail {

inline json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    rows.push_back(vec_to_json(m.row(r).transpose()));
  return rows;
}

inline Eigen::MatrixXd mat_from_json(const json& rows) {
  const Eigen::Index R = static_cast<Eigen::Index>(rows.size());
  if (R == 0) return Eigen::MatrixXd();
  const Eigen::Index C = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(R, C);
  for (Eigen::Index r = 0; r < R; ++r)
    m.row(r) = vec_from_json(rows[static_cast<std::size_t>(r)]).transpose();
  return m;
}

}  // namespace detail

inline json to_json(const FitConfig& c) {
  return json{{"prior_precision", c.prior_precision},
              {"max_iterations", c.max_iterations},
              {"gradient_tolerance", c.gradient_tolerance},
              {"armijo_c1", c.armijo_c1},
              {"backtrack_factor", c.backtrack_factor},
              {"min_step", c.min_step},
              {"seed", c.seed},
              {"n_posterior_draws", c.n_posterior_draws}};
}

inline FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  c.prior_precision = j.at("prior_precision").get<double>();
  c.max_iterations = j.at("max_iterations").get<int>();
  c.gradient_tolerance = j.at("gradient_tolerance").get<double>();
  c.armijo_c1 = j.at("armijo_c1").get<double>();
  c.backtrack_factor = j.at("backtrack_factor").get<double>();
  c.min_step = j.at("min_step").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_posterior_draws = j.at("n_posterior_draws").get<int>();
  return c;
}

inline json to_json(const ChainConfig& c) {
  return json{{"n_iterations", c.n_iterations},
              {"n_warmup", c.n_warmup},
              {"thin", c.thin},
              {"n_chains", c.n_chains},
              {"proposal_scale", detail::vec_to_json(c.proposal_scale)},
              {"seed", c.seed}};
}

inline ChainConfig chain_config_from_json(const json& j) {
  ChainConfig c;
  c.n_iterations = j.at("n_iterations").get<std::int64_t>();
  c.n_warmup = j.at("n_warmup").get<std::int64_t>();
  c.thin = j.at("thin").get<std::int64_t>();
  c.n_chains = j.at("n_chains").get<int>();
  c.proposal_scale = detail::vec_from_json(j.at("proposal_scale"));
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json to_json(const FittedModel& model) {
  json trace = json::array();
  for (const IterationRecord& r : model.fit.iteration_trace)
    trace.push_back(json{{"iteration", r.iteration},
                         {"objective", r.objective},
                         {"gradient_norm", r.gradient_norm},
                         {"step_length", r.step_length},
                         {"fallback_count", r.fallback_count}});
  return json{
      {"schema_version", fit_schema_version},
      {"formula", model.formula.render()},
      {"n_categories", model.n_categories},
      {"n_obs", model.n_obs},
      {"transform_applied", model.transform_applied},
      {"column_labels", model.column_labels},
      {"fit_config", to_json(model.config)},
      {"mode", detail::vec_to_json(model.fit.mode)},
      {"posterior_mean", detail::vec_to_json(model.fit.posterior_mean)},
      {"marginal_sd", detail::vec_to_json(model.fit.marginal_sd)},
      {"q025", detail::vec_to_json(model.fit.q025)},
      {"q50", detail::vec_to_json(model.fit.q50)},
      {"q975", detail::vec_to_json(model.fit.q975)},
      {"posterior_precision", detail::mat_to_json(model.fit.posterior_precision)},
      {"criteria",
       json{{"dic", model.fit.criteria.dic},
            {"waic", model.fit.criteria.waic},
            {"lcpo", model.fit.criteria.lcpo},
            {"waic_degenerate", model.fit.criteria.waic_degenerate}}},
      {"iteration_trace", trace}};
}

inline FittedModel fitted_model_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != fit_schema_version)
    throw validation_error("fit artifact: unsupported schema version");
  FittedModel model;
  model.n_categories = j.at("n_categories").get<Eigen::Index>();
  model.n_obs = j.at("n_obs").get<Eigen::Index>();
  model.formula = parse_formula(j.at("formula").get<std::string>(),
                                static_cast<int>(model.n_categories));
  model.transform_applied = j.at("transform_applied").get<bool>();
  model.column_labels = j.at("column_labels").get<std::vector<std::string>>();
  model.config = fit_config_from_json(j.at("fit_config"));
  model.fit.mode = detail::vec_from_json(j.at("mode"));
  model.fit.posterior_mean = detail::vec_from_json(j.at("posterior_mean"));
  model.fit.marginal_sd = detail::vec_from_json(j.at("marginal_sd"));
  model.fit.q025 = detail::vec_from_json(j.at("q025"));
  model.fit.q50 = detail::vec_from_json(j.at("q50"));
  model.fit.q975 = detail::vec_from_json(j.at("q975"));
  model.fit.posterior_precision = detail::mat_from_json(j.at("posterior_precision"));
  model.fit.criteria.dic = j.at("criteria").at("dic").get<double>();
  model.fit.criteria.waic = j.at("criteria").at("waic").get<double>();
  model.fit.criteria.lcpo = j.at("criteria").at("lcpo").get<double>();
  model.fit.criteria.waic_degenerate =
      j.at("criteria").at("waic_degenerate").get<bool>();
  for (const json& r : j.at("iteration_trace"))
    model.fit.iteration_trace.push_back(
        IterationRecord{r.at("iteration").get<int>(),
                        r.at("objective").get<double>(),
                        r.at("gradient_norm").get<double>(),
                        r.at("step_length").get<double>(),
                        r.at("fallback_count").get<int>()});
  return model;
}

// Everything needed to reproduce a run bit-exactly, plus observed timings.
struct RunManifest {
  std::string command;
  std::string formula;
  std::map<std::string, std::string> inputs;   // label -> path
  std::map<std::string, std::string> outputs;  // label -> path
  FitConfig fit_config;
  bool has_chain_config = false;
  ChainConfig chain_config;
  std::uint64_t seed = 0;
  std::string software_version = dirlap::version;
  std::map<std::string, double> timings_seconds;
  json extra;  // command-specific parameters (e.g. simulate truth)
};

inline json to_json(const RunManifest& m) {
  json j{{"command", m.command},
         {"formula", m.formula},
         {"inputs", m.inputs},
         {"outputs", m.outputs},
         {"fit_config", to_json(m.fit_config)},
         {"seed", m.seed},
         {"software_version", m.software_version},
         {"timings_seconds", m.timings_seconds}};
  j["chain_config"] = m.has_chain_config ? to_json(m.chain_config) : json();
  j["extra"] = m.extra.is_null() ? json::object() : m.extra;
  return j;
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.formula = j.at("formula").get<std::string>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.fit_config = fit_config_from_json(j.at("fit_config"));
  if (!j.at("chain_config").is_null()) {
    m.has_chain_config = true;
    m.chain_config = chain_config_from_json(j.at("chain_config"));
  }
  m.seed = j.at("seed").get<std::uint64_t>();
  m.software_version = j.at("software_version").get<std::string>();
  m.timings_seconds = j.at("timings_seconds").get<std::map<std::string, double>>();
  m.extra = j.at("extra");
  return m;
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw io_error("error while writing '" + path + "'");
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("malformed JSON in '" + path + "': " + e.what());
  }
  return j;
}

inline void save_fitted_model(const std::string& path, const FittedModel& model) {
  save_json(path, to_json(model));
}

inline FittedModel load_fitted_model(const std::string& path) {
  return fitted_model_from_json(load_json(path));
}

}  // namespace dirlap
