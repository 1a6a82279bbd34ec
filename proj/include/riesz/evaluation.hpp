#pragma once

// Accuracy against an oracle representer and downstream estimates of the
// functional: the weighting form E_n[alpha Y] and the doubly robust form
// E_n[m(h; X)] + E_n[alpha (Y - h)].

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "riesz/data.hpp"
#include "riesz/errors.hpp"
#include "riesz/functional.hpp"
#include "riesz/linear_solvers.hpp"
#include "riesz/sieve_basis.hpp"

namespace riesz {

struct MetricsReport {
  std::optional<double> rr_mse;
  double weighting_estimate = 0.0;
  std::optional<double> dr_estimate;
  std::optional<double> estimand_truth;
  Eigen::Index n_eval = 0;
};

/// Ridge regression of Y on the sieve.
struct OutcomeFit {
  Eigen::VectorXd theta_h;
  double l2 = 0.0;
};

inline double rr_mse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& oracle) {
  if (predicted.size() != oracle.size())
    throw ShapeError("rr_mse: lengths " + std::to_string(predicted.size()) + " and " +
                     std::to_string(oracle.size()) + " differ");
  if (predicted.size() < 1) throw ShapeError("rr_mse: empty input");
  return (predicted - oracle).squaredNorm() / static_cast<double>(predicted.size());
}

/// theta_h = (G + l2 I)^{-1} Phi'Y / n.
inline OutcomeFit fit_outcome_model(const Dataset& data, const FeatureMatrix& features, double l2 = 0.0) {
  if (!data.outcome) throw ConfigError("outcome model requires an outcome column");
  if (features.values.rows() != data.n()) throw ShapeError("feature rows do not match the dataset");
  detail::check_penalty(l2, "l2");
  const auto g = gram(features);
  const Eigen::VectorXd rhs =
      features.values.transpose() * *data.outcome / static_cast<double>(features.values.rows());
  auto sol = detail::spd_solve(detail::ridge_metric(g, l2), rhs);
  return OutcomeFit{std::move(sol.x), l2};
}

inline Eigen::VectorXd predict_outcome(const OutcomeFit& fit, const FeatureMatrix& features) {
  if (features.values.cols() != fit.theta_h.size()) throw ShapeError("outcome fit dimension mismatch");
  return features.values * fit.theta_h;
}

inline MetricsReport plug_in_estimates(const Dataset& data, const FunctionalSpec& spec,
                                       const Eigen::VectorXd& alpha_hat, const std::optional<OutcomeFit>& h_fit,
                                       const FeatureBuilder& features) {
  if (!data.outcome) throw ConfigError("plug-in estimates require an outcome column");
  if (alpha_hat.size() != data.n())
    throw ShapeError("alpha_hat has length " + std::to_string(alpha_hat.size()) + ", expected " +
                     std::to_string(data.n()));
  const auto& y = *data.outcome;
  const double n = static_cast<double>(data.n());

  MetricsReport r;
  r.n_eval = data.n();
  r.estimand_truth = data.estimand_truth;
  r.weighting_estimate = alpha_hat.dot(y) / n;
  if (data.oracle_alpha) r.rr_mse = rr_mse(alpha_hat, *data.oracle_alpha);
  if (h_fit) {
    const Eigen::VectorXd h = predict_outcome(*h_fit, features.build(data));
    // m is linear, so E_n[m(theta_h' phi)] = theta_h' L_hat.
    const double plug_in = h_fit->theta_h.dot(basis_moments(data, spec, features).values);
    r.dr_estimate = plug_in + alpha_hat.dot(y - h) / n;
  }
  return r;
}

}  // namespace riesz
