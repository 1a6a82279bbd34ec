#pragma once

// JSON encodings of experiment configurations and fitted estimators.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "riesz/experiment.hpp"
#include "riesz/linear_solvers.hpp"
#include "riesz/neural.hpp"

namespace riesz {

using nlohmann::json;

namespace detail {

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items())
    if (!known.contains(item.key())) throw ConfigError("unknown field '" + item.key() + "' in " + where);
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline json to_json(const AteDgpConfig& c) {
  return {{"kind", "ate"},
          {"n", c.n},
          {"p", c.p},
          {"tau", c.tau},
          {"propensity_coefs", c.propensity_coefs},
          {"propensity_clip", c.propensity_clip},
          {"outcome_coefs", c.outcome_coefs},
          {"noise_sd", c.noise_sd},
          {"seed", c.seed}};
}

inline json to_json(const ShiftDgpConfig& c) {
  return {{"kind", "shift"},          {"n_source", c.n_source}, {"n_target", c.n_target},
          {"mean_shift", c.mean_shift}, {"noise_sd", c.noise_sd}, {"seed", c.seed}};
}

inline DgpConfig dgp_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("dgp needs a 'kind' of ate or shift");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ate") {
    detail::reject_unknown_keys(
        j, {"kind", "n", "p", "tau", "propensity_coefs", "propensity_clip", "outcome_coefs", "noise_sd", "seed"},
        "dgp");
    std::size_t p = 3;
    detail::read_if(j, "p", p);
    AteDgpConfig c = default_ate_config(p);
    detail::read_if(j, "n", c.n);
    detail::read_if(j, "tau", c.tau);
    detail::read_if(j, "propensity_coefs", c.propensity_coefs);
    detail::read_if(j, "propensity_clip", c.propensity_clip);
    detail::read_if(j, "outcome_coefs", c.outcome_coefs);
    detail::read_if(j, "noise_sd", c.noise_sd);
    detail::read_if(j, "seed", c.seed);
    return c;
  }
  if (kind == "shift") {
    detail::reject_unknown_keys(j, {"kind", "n_source", "n_target", "mean_shift", "noise_sd", "seed"}, "dgp");
    ShiftDgpConfig c;
    detail::read_if(j, "n_source", c.n_source);
    detail::read_if(j, "n_target", c.n_target);
    detail::read_if(j, "mean_shift", c.mean_shift);
    detail::read_if(j, "noise_sd", c.noise_sd);
    detail::read_if(j, "seed", c.seed);
    return c;
  }
  throw ConfigError("unknown dgp kind '" + kind + "'");
}

inline json to_json(const EstimatorSpec& e) {
  json j = {{"name", to_string(e.kind)}, {"l2", e.l2}, {"l1", e.l1}};
  if (!e.label.empty()) j["label"] = e.label;
  if (e.is_neural()) {
    j["hidden"] = e.hidden;
    j["learning_rate"] = e.train.learning_rate;
    j["max_epochs"] = e.train.max_epochs;
    j["tol"] = e.train.tol;
    j["norm_epsilon"] = e.train.norm_epsilon;
    j["init_seed"] = e.init_seed;
  }
  return j;
}

inline EstimatorSpec estimator_from_json(const json& j) {
  detail::reject_unknown_keys(j,
                              {"name", "label", "l2", "l1", "hidden", "learning_rate", "max_epochs", "tol",
                               "norm_epsilon", "init_seed"},
                              "estimator");
  if (!j.contains("name")) throw ConfigError("estimator needs a 'name'");
  EstimatorSpec e;
  e.kind = parse_estimator_kind(j.at("name").get<std::string>());
  detail::read_if(j, "label", e.label);
  detail::read_if(j, "l2", e.l2);
  detail::read_if(j, "l1", e.l1);
  detail::read_if(j, "hidden", e.hidden);
  detail::read_if(j, "learning_rate", e.train.learning_rate);
  detail::read_if(j, "max_epochs", e.train.max_epochs);
  detail::read_if(j, "tol", e.train.tol);
  detail::read_if(j, "norm_epsilon", e.train.norm_epsilon);
  detail::read_if(j, "init_seed", e.init_seed);
  return e;
}

inline json to_json(const ExperimentConfig& c) {
  json estimators = json::array();
  for (const auto& e : c.estimators) estimators.push_back(to_json(e));
  return {{"dgp", std::visit([](const auto& d) { return to_json(d); }, c.dgp)},
          {"basis", c.basis},
          {"standardize", c.standardize},
          {"estimators", estimators},
          {"sample_sizes", c.sample_sizes},
          {"replications", c.replications},
          {"master_seed", c.master_seed},
          {"output_path", c.output_path},
          {"outcome_l2", c.outcome_l2},
          {"record_timing", c.record_timing},
          {"threads", c.threads}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  detail::reject_unknown_keys(j,
                              {"dgp", "basis", "standardize", "estimators", "sample_sizes", "replications",
                               "master_seed", "output_path", "outcome_l2", "record_timing", "threads"},
                              "experiment config");
  ExperimentConfig c;
  if (j.contains("dgp")) c.dgp = dgp_from_json(j.at("dgp"));
  detail::read_if(j, "basis", c.basis);
  detail::read_if(j, "standardize", c.standardize);
  if (j.contains("estimators")) {
    if (!j.at("estimators").is_array()) throw ConfigError("'estimators' must be an array");
    for (const auto& e : j.at("estimators")) c.estimators.push_back(estimator_from_json(e));
  }
  detail::read_if(j, "sample_sizes", c.sample_sizes);
  detail::read_if(j, "replications", c.replications);
  detail::read_if(j, "master_seed", c.master_seed);
  detail::read_if(j, "output_path", c.output_path);
  detail::read_if(j, "outcome_l2", c.outcome_l2);
  detail::read_if(j, "record_timing", c.record_timing);
  detail::read_if(j, "threads", c.threads);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return experiment_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

inline json to_json(const LinearRieszFit& f) {
  json j = {{"theta", detail::to_std(f.theta)},
            {"l2_penalty", f.l2_penalty},
            {"l1_penalty", f.l1_penalty},
            {"objective_kind", to_string(f.objective_kind)},
            {"objective_value", f.objective_value},
            {"gnorm_sq", f.gnorm_sq},
            {"used_min_norm", f.used_min_norm},
            {"iterations", f.iterations}};
  if (f.direction) j["direction"] = detail::to_std(*f.direction);
  return j;
}

inline json to_json(const NeuralRieszFit& f) {
  json layers = json::array();
  for (const auto& l : f.network.layers()) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) rows.push_back(detail::to_std(l.weight.row(i).transpose()));
    layers.push_back({{"weight", rows}, {"bias", detail::to_std(l.bias)}});
  }
  return {{"trainer", to_string(f.trainer)},
          {"functional", FunctionalSpec{f.functional}.name()},
          {"config",
           {{"input_dim", f.mlp.input_dim},
            {"hidden_widths", f.mlp.hidden_widths},
            {"activation", "tanh"},
            {"init_seed", f.mlp.init_seed},
            {"learning_rate", f.train.learning_rate},
            {"max_epochs", f.train.max_epochs},
            {"tol", f.train.tol},
            {"norm_epsilon", f.train.norm_epsilon}}},
          {"scale_c", f.scale_c},
          {"norm_scale", f.norm_scale},
          {"initial_objective", f.initial_objective},
          {"final_objective", f.final_objective},
          {"epochs_run", f.epochs_run},
          {"layers", layers}};
}

inline json to_json(const MetricsReport& m) {
  json j = {{"weighting_estimate", m.weighting_estimate}, {"n_eval", m.n_eval}};
  j["rr_mse"] = m.rr_mse ? json(*m.rr_mse) : json(nullptr);
  j["dr_estimate"] = m.dr_estimate ? json(*m.dr_estimate) : json(nullptr);
  j["estimand_truth"] = m.estimand_truth ? json(*m.estimand_truth) : json(nullptr);
  return j;
}

inline json to_json(const EquivalenceReport& r) {
  return {{"max_abs_diff", r.max_abs_diff}, {"max_rel_diff", r.max_rel_diff}, {"settings", r.settings}};
}

}  // namespace riesz
