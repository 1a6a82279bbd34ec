#pragma once

// Datasets, synthetic data-generating processes with known representers, and
// CSV ingestion.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "riesz/errors.hpp"

namespace riesz {

/// Observations X (covariates, optional binary treatment), an optional
/// outcome, an optional sample from the target distribution, and, for
/// synthetic data, the true representer evaluated at each row.
struct Dataset {
  Eigen::MatrixXd covariates;  // n x p
  std::optional<Eigen::VectorXd> treatment;
  std::optional<Eigen::VectorXd> outcome;
  std::optional<Eigen::MatrixXd> aux_sample;  // m x p, draws from Q
  std::optional<Eigen::VectorXd> oracle_alpha;
  std::optional<double> estimand_truth;

  Eigen::Index n() const { return covariates.rows(); }
  Eigen::Index p() const { return covariates.cols(); }

  void validate() const {
    const auto rows = n();
    if (rows < 1) throw ShapeError("dataset must have at least one row");
    auto check_len = [rows](const std::optional<Eigen::VectorXd>& v, const char* name) {
      if (v && v->size() != rows)
        throw ShapeError(std::string(name) + " has length " + std::to_string(v->size()) +
                         ", expected " + std::to_string(rows));
    };
    check_len(treatment, "treatment");
    check_len(outcome, "outcome");
    check_len(oracle_alpha, "oracle_alpha");
    if (treatment) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double t = (*treatment)(i);
        if (t != 0.0 && t != 1.0)
          throw ConfigError("treatment entry " + std::to_string(i) + " is not in {0,1}");
      }
    }
    if (aux_sample && aux_sample->cols() != p())
      throw ShapeError("aux_sample has " + std::to_string(aux_sample->cols()) +
                       " columns, expected " + std::to_string(p()));
  }
};

inline bool operator==(const Dataset& a, const Dataset& b) {
  auto eq_opt = [](const auto& x, const auto& y) {
    if (x.has_value() != y.has_value()) return false;
    if (!x) return true;
    return x->rows() == y->rows() && x->cols() == y->cols() && *x == *y;
  };
  return a.covariates.rows() == b.covariates.rows() && a.covariates.cols() == b.covariates.cols() &&
         a.covariates == b.covariates && eq_opt(a.treatment, b.treatment) &&
         eq_opt(a.outcome, b.outcome) && eq_opt(a.aux_sample, b.aux_sample) &&
         eq_opt(a.oracle_alpha, b.oracle_alpha) && a.estimand_truth == b.estimand_truth;
}

/// Engine used for every random draw in the library.
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Treatment-effect DGP
// ---------------------------------------------------------------------------

struct AteDgpConfig {
  std::size_t n = 1000;
  std::size_t p = 3;
  double tau = 1.0;
  std::vector<double> propensity_coefs = {0.8, -0.6, 0.4};
  double propensity_clip = 0.05;
  std::vector<double> outcome_coefs = {1.0, 0.5, -0.5};
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw ConfigError("ate dgp: n must be >= 1");
    if (p < 1) throw ConfigError("ate dgp: p must be >= 1");
    if (propensity_coefs.size() != p)
      throw ConfigError("ate dgp: propensity_coefs has length " +
                        std::to_string(propensity_coefs.size()) + ", expected p = " +
                        std::to_string(p));
    if (outcome_coefs.size() != p)
      throw ConfigError("ate dgp: outcome_coefs has length " + std::to_string(outcome_coefs.size()) +
                        ", expected p = " + std::to_string(p));
    if (!(propensity_clip > 0.0 && propensity_clip < 0.5))
      throw ConfigError("ate dgp: propensity_clip must lie in (0, 0.5)");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
      throw ConfigError("ate dgp: noise_sd must be finite and >= 0");
    if (!std::isfinite(tau)) throw ConfigError("ate dgp: tau must be finite");
  }
};

/// Default treatment-effect configuration in `p` covariates; the coefficient
/// patterns cycle when p exceeds their length.
inline AteDgpConfig default_ate_config(std::size_t p) {
  AteDgpConfig cfg;
  const std::vector<double> prop = cfg.propensity_coefs, out = cfg.outcome_coefs;
  cfg.p = p;
  cfg.propensity_coefs.resize(p);
  cfg.outcome_coefs.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    cfg.propensity_coefs[j] = prop[j % prop.size()];
    cfg.outcome_coefs[j] = out[j % out.size()];
  }
  return cfg;
}

/// Clipped logistic propensity pi(w).
inline double ate_propensity(const AteDgpConfig& cfg, const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  double index = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) index += cfg.propensity_coefs[j] * w(j);
  const double pi = 1.0 / (1.0 + std::exp(-index));
  return std::clamp(pi, cfg.propensity_clip, 1.0 - cfg.propensity_clip);
}

/// Inverse-probability-weight representer for the treatment contrast.
inline double ipw_representer(double t, double pi) { return t / pi - (1.0 - t) / (1.0 - pi); }

/// W ~ U(-1,1)^p, T ~ Bernoulli(pi(W)), Y = tau*T + outcome_coefs'W + noise.
inline Dataset generate_ate_dgp(const AteDgpConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto p = static_cast<Eigen::Index>(cfg.p);

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.covariates.resize(n, p);
  Eigen::VectorXd t(n), y(n), alpha(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) d.covariates(i, j) = unif(rng);
    const double pi = ate_propensity(cfg, d.covariates.row(i));
    t(i) = std::bernoulli_distribution(pi)(rng) ? 1.0 : 0.0;
    double mean = cfg.tau * t(i);
    for (Eigen::Index j = 0; j < p; ++j) mean += cfg.outcome_coefs[j] * d.covariates(i, j);
    const double eps = normal(rng);
    y(i) = mean + cfg.noise_sd * eps;
    alpha(i) = ipw_representer(t(i), pi);
  }
  d.treatment = std::move(t);
  d.outcome = std::move(y);
  d.oracle_alpha = std::move(alpha);
  d.estimand_truth = cfg.tau;
  return d;
}

// ---------------------------------------------------------------------------
// Covariate-shift DGP
// ---------------------------------------------------------------------------

struct ShiftDgpConfig {
  std::size_t n_source = 1000;
  std::size_t n_target = 1000;
  double mean_shift = 1.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_source < 1) throw ConfigError("shift dgp: n_source must be >= 1");
    if (n_target < 1) throw ConfigError("shift dgp: n_target must be >= 1");
    if (!std::isfinite(mean_shift)) throw ConfigError("shift dgp: mean_shift must be finite");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
      throw ConfigError("shift dgp: noise_sd must be finite and >= 0");
  }
};

/// dQ/dP for P = N(0,1), Q = N(mu,1).
inline double gaussian_shift_ratio(double mu, double x) { return std::exp(mu * x - 0.5 * mu * mu); }

/// Source X ~ N(0,1) with Y = X^2 + noise, target sample from N(mu,1).
/// The estimand E_Q[Y] equals mu^2 + 1.
inline Dataset generate_shift_dgp(const ShiftDgpConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n_source);
  const auto m = static_cast<Eigen::Index>(cfg.n_target);
  const double mu = cfg.mean_shift;

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.covariates.resize(n, 1);
  Eigen::VectorXd y(n), alpha(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = normal(rng);
    d.covariates(i, 0) = x;
    y(i) = x * x + cfg.noise_sd * normal(rng);
    alpha(i) = gaussian_shift_ratio(mu, x);
  }
  Eigen::MatrixXd aux(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) aux(i, 0) = mu + normal(rng);

  d.outcome = std::move(y);
  d.oracle_alpha = std::move(alpha);
  d.aux_sample = std::move(aux);
  d.estimand_truth = mu * mu + 1.0;
  return d;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Maps CSV columns onto Dataset fields.
struct CsvSchema {
  std::vector<std::string> covariates;
  std::optional<std::string> treatment;
  std::optional<std::string> outcome;
  std::optional<std::string> alpha0;

  /// `t`, `y` and `alpha0` go to their fields when present; every other
  /// column is a covariate.
  static CsvSchema infer(const std::vector<std::string>& header) {
    CsvSchema s;
    for (const auto& name : header) {
      if (name == "t")
        s.treatment = name;
      else if (name == "y")
        s.outcome = name;
      else if (name == "alpha0")
        s.alpha0 = name;
      else
        s.covariates.push_back(name);
    }
    return s;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "missing header row in '" + path + "'");
  table.header = split_csv_line(line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size())
      throw ParseError(row, "expected " + std::to_string(table.header.size()) + " cells, found " +
                                std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

inline Eigen::VectorXd numeric_column(const CsvTable& table, const std::string& name) {
  const auto c = table.column(name);
  Eigen::VectorXd v(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto value = parse_double(table.rows[r][c]);
    if (!value)
      throw ParseError(r + 1, "column '" + name + "': cannot parse '" + table.rows[r][c] + "' as a number");
    v(static_cast<Eigen::Index>(r)) = *value;
  }
  return v;
}

inline Eigen::MatrixXd numeric_columns(const CsvTable& table, const std::vector<std::string>& names) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = numeric_column(table, names[j]);
  return m;
}

/// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_number(std::ostream& os, double v) { os << format_number(v); }

}  // namespace detail

inline Dataset load_dataset_csv(const std::string& path, const CsvSchema& schema) {
  const auto table = detail::read_csv_table(path);
  if (schema.covariates.empty()) throw ConfigError("schema maps no covariate columns");
  // Resolve every mapped column before parsing so schema errors win over parse errors.
  for (const auto& c : schema.covariates) table.column(c);
  for (const auto* opt : {&schema.treatment, &schema.outcome, &schema.alpha0})
    if (*opt) table.column(**opt);

  Dataset d;
  d.covariates = detail::numeric_columns(table, schema.covariates);
  if (schema.treatment) d.treatment = detail::numeric_column(table, *schema.treatment);
  if (schema.outcome) d.outcome = detail::numeric_column(table, *schema.outcome);
  if (schema.alpha0) d.oracle_alpha = detail::numeric_column(table, *schema.alpha0);
  d.validate();
  return d;
}

inline Dataset load_dataset_csv(const std::string& path) {
  const auto table = detail::read_csv_table(path);
  return load_dataset_csv(path, CsvSchema::infer(table.header));
}

/// Reads the named columns of a target-distribution sample.
inline Eigen::MatrixXd load_aux_sample_csv(const std::string& path, const std::vector<std::string>& columns) {
  return detail::numeric_columns(detail::read_csv_table(path), columns);
}

/// Default covariate column names w1..wp.
inline std::vector<std::string> default_covariate_names(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("w" + std::to_string(j + 1));
  return names;
}

inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                             const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      detail::write_number(out, values(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

/// Writes covariates as w1..wp followed by whichever of t, y, alpha0 exist.
inline void write_dataset_csv(const std::string& path, const Dataset& d) {
  auto header = default_covariate_names(d.p());
  std::vector<const Eigen::VectorXd*> extra;
  if (d.treatment) header.push_back("t"), extra.push_back(&*d.treatment);
  if (d.outcome) header.push_back("y"), extra.push_back(&*d.outcome);
  if (d.oracle_alpha) header.push_back("alpha0"), extra.push_back(&*d.oracle_alpha);
  Eigen::MatrixXd values(d.n(), d.p() + static_cast<Eigen::Index>(extra.size()));
  values.leftCols(d.p()) = d.covariates;
  for (std::size_t k = 0; k < extra.size(); ++k) values.col(d.p() + static_cast<Eigen::Index>(k)) = *extra[k];
  write_matrix_csv(path, header, values);
}

}  // namespace riesz
