#pragma once

// Replicated Monte Carlo comparison of representer estimators.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "riesz/data.hpp"
#include "riesz/errors.hpp"
#include "riesz/evaluation.hpp"
#include "riesz/functional.hpp"
#include "riesz/linear_solvers.hpp"
#include "riesz/neural.hpp"
#include "riesz/sieve_basis.hpp"

namespace riesz {

enum class EstimatorKind { RieszLoss, Rayleigh, Lasso, RayleighL1, NnRiesz, NnRayleigh };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::RieszLoss: return "riesz-loss";
    case EstimatorKind::Rayleigh: return "rayleigh";
    case EstimatorKind::Lasso: return "lasso";
    case EstimatorKind::RayleighL1: return "rayleigh-l1";
    case EstimatorKind::NnRiesz: return "nn-riesz";
    case EstimatorKind::NnRayleigh: return "nn-rayleigh";
  }
  return "?";
}

inline EstimatorKind parse_estimator_kind(const std::string& name) {
  for (auto k : {EstimatorKind::RieszLoss, EstimatorKind::Rayleigh, EstimatorKind::Lasso, EstimatorKind::RayleighL1,
                 EstimatorKind::NnRiesz, EstimatorKind::NnRayleigh})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown estimator '" + name + "'");
}

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::RieszLoss;
  double l2 = 0.0;
  double l1 = 0.0;
  std::vector<Eigen::Index> hidden = {32, 32};
  TrainConfig train;
  std::uint64_t init_seed = 0;
  std::string label;  // defaults to the estimator name plus nonzero penalties

  bool is_neural() const { return kind == EstimatorKind::NnRiesz || kind == EstimatorKind::NnRayleigh; }

  std::string display_name() const {
    if (!label.empty()) return label;
    std::string out = to_string(kind);
    std::string params;
    if (l2 != 0.0) params += "l2=" + detail::format_number(l2);
    if (l1 != 0.0) params += std::string(params.empty() ? "" : ",") + "l1=" + detail::format_number(l1);
    return params.empty() ? out : out + "[" + params + "]";
  }

  void validate() const {
    detail::check_penalty(l2, "l2");
    detail::check_penalty(l1, "l1");
    if ((kind == EstimatorKind::Lasso || kind == EstimatorKind::RayleighL1) && !(l1 > 0.0))
      throw ConfigError(std::string(to_string(kind)) + " requires l1 > 0");
    if (kind == EstimatorKind::Rayleigh && l1 != 0.0)
      throw ConfigError("rayleigh takes no l1 penalty; use rayleigh-l1");
    if ((kind == EstimatorKind::RieszLoss || kind == EstimatorKind::Lasso) && l1 != 0.0 && l2 != 0.0)
      throw ConfigError("elastic-net penalties are not supported");
    if (kind == EstimatorKind::RieszLoss && l1 != 0.0) throw ConfigError("riesz-loss takes no l1 penalty; use lasso");
    if (kind == EstimatorKind::Lasso && l2 != 0.0) throw ConfigError("lasso takes no l2 penalty");
    if (is_neural()) {
      train.validate();
      MlpConfig{1, hidden, init_seed}.validate();
    }
  }
};

using DgpConfig = std::variant<AteDgpConfig, ShiftDgpConfig>;

struct ExperimentConfig {
  DgpConfig dgp = AteDgpConfig{};
  std::string basis = "poly-t:2";
  bool standardize = false;
  std::vector<EstimatorSpec> estimators;
  std::vector<std::size_t> sample_sizes = {1000};
  std::size_t replications = 1;
  std::uint64_t master_seed = 0;
  std::string output_path;
  double outcome_l2 = 0.0;  // ridge penalty of the outcome model used by the DR estimate
  bool record_timing = true;
  std::size_t threads = 1;

  FunctionalSpec functional() const {
    return {std::holds_alternative<AteDgpConfig>(dgp) ? FunctionalKind::AteDifference : FunctionalKind::ShiftMean};
  }

  void validate() const {
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (estimators.empty()) throw ConfigError("estimator list is empty");
    if (sample_sizes.empty()) throw ConfigError("sample_sizes is empty");
    for (auto n : sample_sizes)
      if (n < 1) throw ConfigError("sample sizes must be >= 1");
    for (const auto& e : estimators) e.validate();
    FeatureBuilder::parse(basis);
    std::visit([](const auto& c) { c.validate(); }, dgp);
    detail::check_penalty(outcome_l2, "outcome_l2");
  }

  /// The DGP configuration for sample size `n` and replication `r`.
  DgpConfig dgp_for(std::size_t n, std::size_t r) const {
    DgpConfig out = dgp;
    std::visit(
        [&](auto& c) {
          using C = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<C, AteDgpConfig>)
            c.n = n;
          else
            c.n_source = n;
          c.seed = master_seed + r;
        },
        out);
    return out;
  }
};

struct ResultRow {
  std::string estimator;
  std::size_t n = 0;
  std::size_t replication = 0;
  double rr_mse = std::numeric_limits<double>::quiet_NaN();
  double weighting_estimate = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> dr_estimate;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> equivalence_max_rel_diff;
  double runtime_ms = 0.0;
  std::string error;  // empty on success

  bool operator==(const ResultRow&) const = default;
};

inline Dataset generate(const DgpConfig& cfg) {
  return std::visit(
      [](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, AteDgpConfig>)
          return generate_ate_dgp(c);
        else
          return generate_shift_dgp(c);
      },
      cfg);
}

/// Fitted representer for one estimator on one dataset.
struct EstimatorOutcome {
  Eigen::VectorXd alpha_hat;
  double objective_value = 0.0;
  std::optional<LinearRieszFit> linear;
  std::optional<NeuralRieszFit> neural;
};

inline EstimatorOutcome run_estimator(const EstimatorSpec& spec, const Dataset& data, const FunctionalSpec& functional,
                                      const FeatureMatrix& features, const GramMatrix& g, const MomentVector& moments) {
  EstimatorOutcome out;
  if (!spec.is_neural()) {
    LinearRieszFit fit;
    switch (spec.kind) {
      case EstimatorKind::RieszLoss: fit = solve_riesz_loss(g, moments, spec.l2); break;
      case EstimatorKind::Rayleigh: fit = solve_rayleigh(g, moments, 0.0, spec.l2); break;
      case EstimatorKind::Lasso: fit = solve_lasso(g, moments, spec.l1); break;
      case EstimatorKind::RayleighL1: fit = solve_rayleigh(g, moments, spec.l1, spec.l2); break;
      default: break;
    }
    out.alpha_hat = predict_linear(fit, features);
    out.objective_value = fit.objective_value;
    out.linear = std::move(fit);
    return out;
  }

  MlpConfig mlp{network_inputs(data, functional).cols(), spec.hidden, spec.init_seed};
  constexpr int kReseedAttempts = 3;
  for (int attempt = 0;; ++attempt) {
    try {
      auto fit = spec.kind == EstimatorKind::NnRiesz ? train_riesz_loss(data, functional, mlp, spec.train)
                                                     : train_rayleigh_constrained(data, functional, mlp, spec.train);
      out.alpha_hat = predict_alpha(fit, data);
      out.objective_value = fit.final_objective;
      out.neural = std::move(fit);
      return out;
    } catch (const DegenerateNetworkError&) {
      if (attempt + 1 >= kReseedAttempts) throw;
      ++mlp.init_seed;
    }
  }
}

/// Rows for every estimator on the dataset of (n, replication r).
inline std::vector<ResultRow> run_replication(const ExperimentConfig& cfg, std::size_t n, std::size_t r) {
  using clock = std::chrono::steady_clock;
  const auto functional = cfg.functional();
  std::vector<ResultRow> rows(cfg.estimators.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].estimator = cfg.estimators[k].display_name();
    rows[k].n = n;
    rows[k].replication = r;
  }
  auto fail_all = [&](const std::string& what) {
    for (auto& row : rows) row.error = what;
    return rows;
  };

  Dataset data;
  FeatureBuilder builder;
  FeatureMatrix features;
  GramMatrix g;
  MomentVector moments;
  try {
    data = generate(cfg.dgp_for(n, r));
    builder = FeatureBuilder::parse(cfg.basis);
    if (cfg.standardize) builder = builder.standardized_on(data);
    features = builder.build(data);
    g = gram(features);
    moments = basis_moments(data, functional, builder);
  } catch (const Error& e) {
    return fail_all(e.what());
  }

  std::optional<OutcomeFit> h_fit;
  try {
    h_fit = fit_outcome_model(data, features, cfg.outcome_l2);
  } catch (const Error&) {
    h_fit.reset();
  }

  std::vector<std::optional<LinearRieszFit>> linear_fits(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& spec = cfg.estimators[k];
    auto& row = rows[k];
    const auto start = clock::now();
    try {
      auto outcome = run_estimator(spec, data, functional, features, g, moments);
      const auto metrics = plug_in_estimates(data, functional, outcome.alpha_hat, h_fit, builder);
      row.rr_mse = metrics.rr_mse.value_or(std::numeric_limits<double>::quiet_NaN());
      row.weighting_estimate = metrics.weighting_estimate;
      row.dr_estimate = metrics.dr_estimate;
      row.objective_value = outcome.objective_value;
      linear_fits[k] = std::move(outcome.linear);
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (cfg.record_timing)
      row.runtime_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
  }

  // Riesz-loss and Rayleigh fits sharing a ridge penalty solve the same problem.
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const auto& sa = cfg.estimators[a];
      const auto& sb = cfg.estimators[b];
      if (sa.kind != EstimatorKind::RieszLoss || sb.kind != EstimatorKind::Rayleigh || sa.l2 != sb.l2) continue;
      if (!linear_fits[a] || !linear_fits[b]) continue;
      const double diff = equivalence_report(*linear_fits[a], *linear_fits[b]).max_rel_diff;
      for (auto idx : {a, b})
        rows[idx].equivalence_max_rel_diff = std::max(rows[idx].equivalence_max_rel_diff.value_or(0.0), diff);
    }
  }
  return rows;
}

inline const char* kResultsHeader =
    "estimator,n,replication,rr_mse,weighting_estimate,dr_estimate,objective_value,equivalence_max_rel_diff,"
    "runtime_ms,error";

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_quoted_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

inline double parse_field(const std::string& s, std::size_t row) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  const auto v = parse_double(s);
  if (!v) throw ParseError(row, "cannot parse '" + s + "' as a number");
  return *v;
}

}  // namespace detail

/// CSV with the fixed column order of kResultsHeader.
inline void write_results(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << detail::csv_escape(r.estimator) << ',' << r.n << ',' << r.replication << ','
        << detail::format_number(r.rr_mse) << ',' << detail::format_number(r.weighting_estimate) << ','
        << detail::format_optional(r.dr_estimate) << ',' << detail::format_number(r.objective_value) << ','
        << detail::format_optional(r.equivalence_max_rel_diff) << ',' << detail::format_number(r.runtime_ms)
        << ',' << detail::csv_escape(r.error) << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw ParseError(0, "unexpected results header");
  std::vector<ResultRow> rows;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    const auto f = detail::split_quoted_csv_line(line);
    if (f.size() != 10) throw ParseError(row_index, "expected 10 fields, found " + std::to_string(f.size()));
    ResultRow r;
    r.estimator = f[0];
    r.n = static_cast<std::size_t>(detail::parse_field(f[1], row_index));
    r.replication = static_cast<std::size_t>(detail::parse_field(f[2], row_index));
    r.rr_mse = detail::parse_field(f[3], row_index);
    r.weighting_estimate = detail::parse_field(f[4], row_index);
    if (!f[5].empty()) r.dr_estimate = detail::parse_field(f[5], row_index);
    r.objective_value = detail::parse_field(f[6], row_index);
    if (!f[7].empty()) r.equivalence_max_rel_diff = detail::parse_field(f[7], row_index);
    r.runtime_ms = detail::parse_field(f[8], row_index);
    r.error = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Runs every (sample size, replication) cell, orders rows by sample size,
/// estimator, then replication, and writes them to cfg.output_path when set.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.output_path.empty()) {
    std::ofstream probe(cfg.output_path, std::ios::app);
    if (!probe) throw IoError("cannot open '" + cfg.output_path + "' for writing");
  }

  struct Cell {
    std::size_t size_index;
    std::size_t replication;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < cfg.sample_sizes.size(); ++s)
    for (std::size_t r = 0; r < cfg.replications; ++r) cells.push_back({s, r});

  std::vector<std::vector<ResultRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_replication(cfg, cfg.sample_sizes[cells[i].size_index], cells[i].replication);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, cells.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ResultRow> rows;
  rows.reserve(cells.size() * cfg.estimators.size());
  for (std::size_t s = 0; s < cfg.sample_sizes.size(); ++s)
    for (std::size_t k = 0; k < cfg.estimators.size(); ++k)
      for (std::size_t r = 0; r < cfg.replications; ++r) rows.push_back(results[s * cfg.replications + r][k]);

  if (!cfg.output_path.empty()) write_results(rows, cfg.output_path);
  return rows;
}

}  // namespace riesz
