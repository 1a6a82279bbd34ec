// riesz: generate synthetic data, fit representer estimators, run replicated
// experiments and equivalence sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riesz/riesz.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

std::vector<Eigen::Index> parse_widths(const std::string& s) {
  std::vector<Eigen::Index> out;
  for (const auto& cell : riesz::detail::split_csv_line(s)) {
    const auto v = riesz::detail::parse_double(cell);
    if (!v || *v < 1 || *v != static_cast<double>(static_cast<Eigen::Index>(*v)))
      throw riesz::ConfigError("bad hidden width '" + cell + "'");
    out.push_back(static_cast<Eigen::Index>(*v));
  }
  if (out.empty()) throw riesz::ConfigError("--hidden needs at least one width");
  return out;
}

std::string aux_path_for(const std::string& out) {
  const auto dot = out.rfind(".csv");
  return (dot != std::string::npos && dot + 4 == out.size() ? out.substr(0, dot) : out) + "_aux.csv";
}

void emit(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw riesz::IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string dgp = "ate";
  std::size_t n = 1000;
  std::size_t p = 3;
  double tau = 1.0;
  double clip = 0.05;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
  double mu = 1.0;
  std::size_t n_target = 1000;
  std::string out;
  std::string aux_out;
};

void run_generate(const GenerateArgs& a) {
  if (a.dgp == "ate") {
    auto cfg = riesz::default_ate_config(a.p);
    cfg.n = a.n;
    cfg.tau = a.tau;
    cfg.propensity_clip = a.clip;
    cfg.noise_sd = a.noise_sd;
    cfg.seed = a.seed;
    riesz::write_dataset_csv(a.out, riesz::generate_ate_dgp(cfg));
    std::cout << "wrote " << a.n << " rows to " << a.out << '\n';
    return;
  }
  riesz::ShiftDgpConfig cfg;
  cfg.n_source = a.n;
  cfg.n_target = a.n_target;
  cfg.mean_shift = a.mu;
  cfg.noise_sd = a.noise_sd;
  cfg.seed = a.seed;
  const auto data = riesz::generate_shift_dgp(cfg);
  const auto aux = a.aux_out.empty() ? aux_path_for(a.out) : a.aux_out;
  riesz::write_dataset_csv(a.out, data);
  riesz::write_matrix_csv(aux, riesz::default_covariate_names(data.p()), *data.aux_sample);
  std::cout << "wrote " << a.n << " source rows to " << a.out << " and " << a.n_target << " target rows to " << aux
            << '\n';
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string aux;
  std::string functional;
  std::string basis;
  bool standardize = false;
  std::string estimator = "riesz-loss";
  double l2 = 0.0;
  double l1 = 0.0;
  std::string hidden = "32,32";
  double lr = 1e-2;
  std::size_t epochs = 2000;
  std::uint64_t seed = 0;
  double outcome_l2 = 0.0;
  std::string out;
};

void run_fit(const FitArgs& a) {
  auto data = riesz::load_dataset_csv(a.data);
  if (!a.aux.empty()) {
    data.aux_sample = riesz::load_aux_sample_csv(a.aux, riesz::CsvSchema::infer(
                                                            riesz::detail::read_csv_table(a.data).header)
                                                            .covariates);
  }
  data.validate();
  const auto functional = riesz::FunctionalSpec::parse(
      !a.functional.empty() ? a.functional : (data.treatment ? "ate" : "shift-mean"));
  auto builder = riesz::FeatureBuilder::parse(
      !a.basis.empty() ? a.basis : (functional.kind == riesz::FunctionalKind::AteDifference ? "poly-t:1" : "poly:2"));
  if (a.standardize) builder = builder.standardized_on(data);

  riesz::EstimatorSpec spec;
  spec.kind = riesz::parse_estimator_kind(a.estimator);
  spec.l2 = a.l2;
  spec.l1 = a.l1;
  spec.hidden = parse_widths(a.hidden);
  spec.train.learning_rate = a.lr;
  spec.train.max_epochs = a.epochs;
  spec.init_seed = a.seed;
  spec.validate();

  const auto features = builder.build(data);
  const auto g = riesz::gram(features);
  const auto moments = riesz::basis_moments(data, functional, builder);
  auto outcome = riesz::run_estimator(spec, data, functional, features, g, moments);

  nlohmann::json j = {{"estimator", spec.display_name()},
                      {"functional", functional.name()},
                      {"basis", builder.to_string()},
                      {"standardize", a.standardize},
                      {"n", data.n()}};
  if (outcome.linear) j["fit"] = riesz::to_json(*outcome.linear);
  if (outcome.neural) j["fit"] = riesz::to_json(*outcome.neural);
  if (data.outcome) {
    std::optional<riesz::OutcomeFit> h;
    try {
      h = riesz::fit_outcome_model(data, features, a.outcome_l2);
    } catch (const riesz::Error&) {
    }
    j["metrics"] = riesz::to_json(riesz::plug_in_estimates(data, functional, outcome.alpha_hat, h, builder));
  } else if (data.oracle_alpha) {
    j["metrics"] = {{"rr_mse", riesz::rr_mse(outcome.alpha_hat, *data.oracle_alpha)}};
  }
  emit(j, a.out);
}

// ---------------------------------------------------------------------------

struct ExperimentArgs {
  std::string config;
  std::string output;
  std::optional<std::size_t> replications;
  std::optional<std::uint64_t> master_seed;
  std::optional<std::size_t> threads;
  bool no_timing = false;
};

void run_experiment_cmd(const ExperimentArgs& a) {
  auto cfg = riesz::load_experiment_config(a.config);
  if (!a.output.empty()) cfg.output_path = a.output;
  if (a.replications) cfg.replications = *a.replications;
  if (a.master_seed) cfg.master_seed = *a.master_seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.no_timing) cfg.record_timing = false;
  if (cfg.output_path.empty()) throw riesz::ConfigError("no output_path in config and no --output given");
  const auto rows = riesz::run_experiment(cfg);
  std::size_t failures = 0;
  for (const auto& r : rows) failures += r.error.empty() ? 0 : 1;
  std::cout << "wrote " << rows.size() << " rows (" << failures << " failed) to " << cfg.output_path << '\n';
}

// ---------------------------------------------------------------------------

struct EquivalenceArgs {
  std::size_t instances = 100;
  std::size_t n = 200;
  std::size_t d = 10;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  std::string data;
  std::string aux;
  std::string basis;
  std::string out;
};

void run_equivalence(const EquivalenceArgs& a) {
  if (!a.data.empty()) {
    auto data = riesz::load_dataset_csv(a.data);
    if (!a.aux.empty())
      data.aux_sample = riesz::load_aux_sample_csv(
          a.aux, riesz::CsvSchema::infer(riesz::detail::read_csv_table(a.data).header).covariates);
    const auto functional = riesz::FunctionalSpec{data.treatment ? riesz::FunctionalKind::AteDifference
                                                                 : riesz::FunctionalKind::ShiftMean};
    const auto builder = riesz::FeatureBuilder::parse(
        !a.basis.empty() ? a.basis : (data.treatment ? "poly-t:1" : "poly:2"));
    const auto g = riesz::gram(builder.build(data));
    const auto moments = riesz::basis_moments(data, functional, builder);
    const auto report = riesz::equivalence_report(riesz::solve_riesz_loss(g, moments, a.l2),
                                                  riesz::solve_rayleigh(g, moments, 0.0, a.l2),
                                                  "riesz-loss vs rayleigh, basis " + builder.to_string() +
                                                      ", l2 " + riesz::detail::format_number(a.l2));
    emit(riesz::to_json(report), a.out);
    return;
  }
  const auto s = riesz::run_equivalence_sweep(a.seed, a.instances, static_cast<Eigen::Index>(a.n),
                                              static_cast<Eigen::Index>(a.d), a.l2);
  emit({{"instances", s.instances},
        {"n", a.n},
        {"d", a.d},
        {"l2", s.l2},
        {"max_rel_diff", s.max_rel_diff},
        {"max_closed_form_rel_diff", s.max_closed_form_rel_diff},
        {"max_min_value_rel_err", s.max_min_value_rel_err},
        {"max_norm_identity_rel_err", s.max_norm_identity_rel_err},
        {"max_condition", s.max_condition},
        {"seconds", s.seconds}},
       a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riesz representer estimation: Riesz-loss and Rayleigh-quotient estimators"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  generate->add_option("--dgp", gen.dgp, "Data-generating process")->check(CLI::IsMember({"ate", "shift"}));
  generate->add_option("--n", gen.n, "Rows (source rows for shift)");
  generate->add_option("--p", gen.p, "Covariates (ate)");
  generate->add_option("--tau", gen.tau, "True treatment effect (ate)");
  generate->add_option("--clip", gen.clip, "Propensity clip (ate)");
  generate->add_option("--noise-sd", gen.noise_sd, "Outcome noise standard deviation");
  generate->add_option("--mu", gen.mu, "Target mean shift (shift)");
  generate->add_option("--n-target", gen.n_target, "Target rows (shift)");
  generate->add_option("--seed", gen.seed, "RNG seed");
  generate->add_option("--out", gen.out, "Output CSV")->required();
  generate->add_option("--aux-out", gen.aux_out, "Target-sample CSV (shift; default <out>_aux.csv)");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one estimator to a CSV dataset and print JSON");
  fit_cmd->add_option("--data", fit.data, "Dataset CSV (columns w*, optional t, y, alpha0)")->required();
  fit_cmd->add_option("--aux", fit.aux, "Target-sample CSV for shift-mean");
  fit_cmd->add_option("--functional", fit.functional, "Functional")->check(CLI::IsMember({"ate", "shift-mean"}));
  fit_cmd->add_option("--basis", fit.basis, "poly-t:K, poly:K or rff:count,bw[,seed]");
  fit_cmd->add_flag("--standardize", fit.standardize, "z-score basis columns");
  fit_cmd->add_option("--estimator", fit.estimator, "Estimator")
      ->check(CLI::IsMember({"riesz-loss", "rayleigh", "lasso", "rayleigh-l1", "nn-riesz", "nn-rayleigh"}));
  fit_cmd->add_option("--l2", fit.l2, "Ridge penalty");
  fit_cmd->add_option("--l1", fit.l1, "Lasso penalty");
  fit_cmd->add_option("--hidden", fit.hidden, "Hidden widths, comma separated");
  fit_cmd->add_option("--lr", fit.lr, "Learning rate");
  fit_cmd->add_option("--epochs", fit.epochs, "Maximum epochs");
  fit_cmd->add_option("--seed", fit.seed, "Network init seed");
  fit_cmd->add_option("--outcome-l2", fit.outcome_l2, "Ridge penalty of the outcome model");
  fit_cmd->add_option("--out", fit.out, "Output JSON (default stdout)");

  ExperimentArgs exp;
  auto* experiment = app.add_subcommand("experiment", "Run a replicated experiment from a JSON config");
  experiment->add_option("--config", exp.config, "Experiment JSON")->required();
  experiment->add_option("--output", exp.output, "Results CSV (overrides output_path)");
  experiment->add_option("--replications", exp.replications, "Override replications");
  experiment->add_option("--master-seed", exp.master_seed, "Override master_seed");
  experiment->add_option("--threads", exp.threads, "Worker threads");
  experiment->add_flag("--no-timing", exp.no_timing, "Write runtime_ms as 0 for byte-stable output");

  EquivalenceArgs eq;
  auto* equivalence =
      app.add_subcommand("equivalence", "Compare riesz-loss and rayleigh fits on random instances or a dataset");
  equivalence->add_option("--instances", eq.instances, "Random instances");
  equivalence->add_option("--n", eq.n, "Rows per instance");
  equivalence->add_option("--d", eq.d, "Basis dimension");
  equivalence->add_option("--l2", eq.l2, "Ridge penalty");
  equivalence->add_option("--seed", eq.seed, "RNG seed");
  equivalence->add_option("--data", eq.data, "Use this dataset CSV instead of random instances");
  equivalence->add_option("--aux", eq.aux, "Target-sample CSV for shift-mean");
  equivalence->add_option("--basis", eq.basis, "Basis for --data");
  equivalence->add_option("--out", eq.out, "Output JSON (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) run_generate(gen);
    if (*fit_cmd) run_fit(fit);
    if (*experiment) run_experiment_cmd(exp);
    if (*equivalence) run_equivalence(eq);
  } catch (const riesz::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const riesz::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const riesz::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const riesz::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const riesz::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
