#pragma once

// Riesz-loss and Rayleigh-quotient solvers over a linear sieve.
//
// Both problems are posed on the empirical Gram matrix G = Phi'Phi/n and the
// moment vector L = E_n[m(phi; X)]:
//
//   Riesz loss:  min_theta  theta'G theta - 2 theta'L  (+ penalties)
//   Rayleigh:    max_{u'Gu = 1} (u'L)^2               (+ penalties)
//
// A Rayleigh maximiser u is only a direction; the representer is recovered as
// theta = (u'L) u, which coincides with G^{-1} L when unpenalised.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "riesz/errors.hpp"
#include "riesz/functional.hpp"
#include "riesz/sieve_basis.hpp"

namespace riesz {

enum class ObjectiveKind { RieszLoss, Rayleigh };

inline const char* to_string(ObjectiveKind k) { return k == ObjectiveKind::RieszLoss ? "riesz_loss" : "rayleigh"; }

struct LinearRieszFit {
  Eigen::VectorXd theta;
  double l2_penalty = 0.0;
  double l1_penalty = 0.0;
  ObjectiveKind objective_kind = ObjectiveKind::RieszLoss;
  double objective_value = 0.0;
  double gnorm_sq = 0.0;  // theta' G theta
  bool used_min_norm = false;
  std::size_t iterations = 0;
  /// Unit-metric maximiser u (u'(G + l2 I)u = 1) for Rayleigh fits.
  std::optional<Eigen::VectorXd> direction;
};

struct EquivalenceReport {
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::string settings;
};

struct LassoOptions {
  double tol = 1e-10;
  std::size_t max_sweeps = 10'000;
};

struct RayleighAscentOptions {
  double step_size = 1e-2;
  std::size_t max_iterations = 5'000;
  double tol = 1e-10;
};

namespace detail {

/// Below this reciprocal condition estimate the Cholesky path is abandoned
/// for the SVD pseudoinverse.
inline constexpr double kCholeskyRcondFloor = 1e-12;

inline void check_problem(const GramMatrix& gram, const MomentVector& moments) {
  const auto& g = gram.values;
  if (g.rows() != g.cols()) throw ShapeError("Gram matrix is not square");
  if (g.rows() != moments.values.size())
    throw ShapeError("Gram matrix is " + std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                     " but moment vector has length " + std::to_string(moments.values.size()));
  if (g.rows() == 0) throw ShapeError("empty basis");
  if (!g.allFinite() || !moments.values.allFinite()) throw NumericError("non-finite Gram or moment entries");
}

inline void check_penalty(double lambda, const char* name) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError(std::string(name) + " penalty must be finite and >= 0");
}

struct PinvSolution {
  Eigen::VectorXd x;
  bool truncated = false;
};

/// x = A^+ b, discarding singular values <= d * eps * sigma_max.
inline PinvSolution pinv_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();
  const double cutoff =
      static_cast<double>(a.rows()) * std::numeric_limits<double>::epsilon() * (sigma.size() ? sigma(0) : 0.0);
  PinvSolution out;
  out.x = Eigen::VectorXd::Zero(a.cols());
  const Eigen::VectorXd ub = svd.matrixU().transpose() * b;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (sigma(k) > cutoff)
      out.x += svd.matrixV().col(k) * (ub(k) / sigma(k));
    else
      out.truncated = true;
  }
  return out;
}

/// Residual b - A x accumulated in extended precision.
inline Eigen::VectorXd extended_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& b) {
  Eigen::VectorXd r(b.size());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    long double acc = b(i);
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      acc -= static_cast<long double>(a(i, j)) * static_cast<long double>(x(j));
    r(i) = static_cast<double>(acc);
  }
  return r;
}

/// Solves A x = b for symmetric PSD A: Cholesky with one refinement step
/// when well conditioned, pseudoinverse otherwise.
inline PinvSolution spd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success && llt.rcond() > kCholeskyRcondFloor) {
    Eigen::VectorXd x = llt.solve(b);
    x += llt.solve(extended_residual(a, x, b));
    return {std::move(x), false};
  }
  return pinv_solve(a, b);
}

inline Eigen::MatrixXd ridge_metric(const GramMatrix& gram, double l2) {
  Eigen::MatrixXd a = gram.values;
  a.diagonal().array() += l2;
  return a;
}

inline double riesz_loss_value(const Eigen::MatrixXd& g, const Eigen::VectorXd& l, const Eigen::VectorXd& theta,
                               double l2, double l1) {
  return theta.dot(g * theta) - 2.0 * theta.dot(l) + l2 * theta.squaredNorm() + l1 * theta.lpNorm<1>();
}

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

inline double sign(double v) { return static_cast<double>((0.0 < v) - (v < 0.0)); }

/// Unit-metric direction maximising (u'L)^2 / u'Au, with flag for the
/// pseudoinverse fallback.
inline PinvSolution rayleigh_direction(const Eigen::MatrixXd& a, const Eigen::VectorXd& l) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success && llt.rcond() > kCholeskyRcondFloor) {
    // Rank-one generalized eigenproblem L L' u = lambda A u; eigenvectors come
    // back A-normalised and sorted by ascending eigenvalue.
    const Eigen::MatrixXd numerator = l * l.transpose();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(numerator, a,
                                                                  Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (ges.info() == Eigen::Success) return {ges.eigenvectors().col(a.cols() - 1), false};
  }
  auto sol = pinv_solve(a, l);
  const double norm_sq = sol.x.dot(a * sol.x);
  if (!(norm_sq > 0.0)) throw DegenerateFunctionalError("moment vector lies in the null space of the Gram matrix");
  sol.x /= std::sqrt(norm_sq);
  return sol;
}

}  // namespace detail

/// Minimises theta'G theta - 2 theta'L + l2 |theta|^2, i.e. solves
/// (G + l2 I) theta = L. A singular unpenalised G falls back to the
/// minimum-norm pseudoinverse solution.
inline LinearRieszFit solve_riesz_loss(const GramMatrix& gram, const MomentVector& moments, double l2 = 0.0) {
  detail::check_problem(gram, moments);
  detail::check_penalty(l2, "l2");
  const auto& g = gram.values;
  const auto& l = moments.values;
  auto sol = detail::spd_solve(detail::ridge_metric(gram, l2), l);

  LinearRieszFit fit;
  fit.theta = std::move(sol.x);
  fit.l2_penalty = l2;
  fit.objective_kind = ObjectiveKind::RieszLoss;
  fit.gnorm_sq = fit.theta.dot(g * fit.theta);
  fit.objective_value = detail::riesz_loss_value(g, l, fit.theta, l2, 0.0);
  fit.used_min_norm = sol.truncated;
  fit.iterations = 1;
  return fit;
}

/// theta = G^+ L through the SVD.
inline LinearRieszFit minnorm_pinv_solve(const GramMatrix& gram, const MomentVector& moments) {
  detail::check_problem(gram, moments);
  const auto& g = gram.values;
  auto sol = detail::pinv_solve(g, moments.values);
  LinearRieszFit fit;
  fit.theta = std::move(sol.x);
  fit.objective_kind = ObjectiveKind::RieszLoss;
  fit.gnorm_sq = fit.theta.dot(g * fit.theta);
  fit.objective_value = detail::riesz_loss_value(g, moments.values, fit.theta, 0.0, 0.0);
  fit.used_min_norm = true;
  fit.iterations = 1;
  return fit;
}

/// Lasso-penalised Riesz loss theta'G theta - 2 theta'L + l1 |theta|_1 by
/// cyclic coordinate descent.
inline LinearRieszFit solve_lasso(const GramMatrix& gram, const MomentVector& moments, double l1,
                                  const LassoOptions& opts = {}) {
  detail::check_problem(gram, moments);
  if (!(l1 > 0.0) || !std::isfinite(l1)) throw ConfigError("lasso requires a finite l1 penalty > 0");
  const auto& g = gram.values;
  const auto& l = moments.values;
  const auto d = g.rows();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(g(j, j) > 0.0)) throw DegenerateColumnError(static_cast<std::size_t>(j));

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  std::size_t sweep = 0;
  while (sweep < opts.max_sweeps) {
    ++sweep;
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double partial = l(j) - (g.col(j).dot(theta) - g(j, j) * theta(j));
      const double updated = detail::soft_threshold(partial, 0.5 * l1) / g(j, j);
      max_change = std::max(max_change, std::abs(updated - theta(j)));
      theta(j) = updated;
    }
    if (max_change < opts.tol) break;
  }

  LinearRieszFit fit;
  fit.theta = std::move(theta);
  fit.l1_penalty = l1;
  fit.objective_kind = ObjectiveKind::RieszLoss;
  fit.gnorm_sq = fit.theta.dot(g * fit.theta);
  fit.objective_value = detail::riesz_loss_value(g, l, fit.theta, 0.0, l1);
  fit.iterations = sweep;
  return fit;
}

/// Maximises (u'L)^2 - l1 |u|_1 subject to u'(G + l2 I)u = 1 and returns the
/// representer-scaled solution theta = (u'L) u.
///
/// Without an l1 penalty the maximiser is the top generalized eigenvector of
/// (L L', G + l2 I). With one, projected (sub)gradient ascent starts from that
/// direction and projects back onto the ellipsoid along the ray after every
/// step; the best iterate is kept.
inline LinearRieszFit solve_rayleigh(const GramMatrix& gram, const MomentVector& moments, double l1 = 0.0,
                                     double l2 = 0.0, const RayleighAscentOptions& opts = {}) {
  detail::check_problem(gram, moments);
  detail::check_penalty(l1, "l1");
  detail::check_penalty(l2, "l2");
  const auto& l = moments.values;
  if (l.isZero(0.0))
    throw DegenerateFunctionalError("moment vector is zero: every direction attains quotient 0");
  const Eigen::MatrixXd metric = detail::ridge_metric(gram, l2);

  auto start = detail::rayleigh_direction(metric, l);
  Eigen::VectorXd u = std::move(start.x);
  std::size_t iterations = 1;

  auto objective = [&](const Eigen::VectorXd& v) {
    const double lu = v.dot(l);
    return lu * lu - l1 * v.lpNorm<1>();
  };

  if (l1 > 0.0) {
    Eigen::VectorXd best = u;
    double best_value = objective(u);
    double previous = best_value;
    iterations = 0;
    while (iterations < opts.max_iterations) {
      ++iterations;
      Eigen::VectorXd grad = 2.0 * u.dot(l) * l;
      for (Eigen::Index j = 0; j < u.size(); ++j) grad(j) -= l1 * detail::sign(u(j));
      u += opts.step_size * grad;
      const double norm_sq = u.dot(metric * u);
      if (!(norm_sq > 0.0) || !std::isfinite(norm_sq))
        throw NumericError("rayleigh ascent left the feasible ray at iteration " + std::to_string(iterations));
      u /= std::sqrt(norm_sq);
      const double value = objective(u);
      if (value > best_value) {
        best_value = value;
        best = u;
      }
      if (std::abs(value - previous) < opts.tol) break;
      previous = value;
    }
    u = std::move(best);
  }

  LinearRieszFit fit;
  fit.theta = u.dot(l) * u;
  fit.l1_penalty = l1;
  fit.l2_penalty = l2;
  fit.objective_kind = ObjectiveKind::Rayleigh;
  fit.objective_value = objective(u);
  fit.gnorm_sq = fit.theta.dot(gram.values * fit.theta);
  fit.used_min_norm = start.truncated;
  fit.iterations = iterations;
  fit.direction = std::move(u);
  return fit;
}

inline EquivalenceReport equivalence_report(const LinearRieszFit& a, const LinearRieszFit& b,
                                            std::string settings = {}) {
  if (a.theta.size() != b.theta.size())
    throw ShapeError("cannot compare fits of dimension " + std::to_string(a.theta.size()) + " and " +
                     std::to_string(b.theta.size()));
  EquivalenceReport r;
  r.settings = std::move(settings);
  if (a.theta.size() == 0) return r;
  r.max_abs_diff = (a.theta - b.theta).lpNorm<Eigen::Infinity>();
  const double scale =
      std::max({a.theta.lpNorm<Eigen::Infinity>(), b.theta.lpNorm<Eigen::Infinity>(), 1e-300});
  r.max_rel_diff = r.max_abs_diff / scale;
  return r;
}

/// Fitted representer values Phi theta.
inline Eigen::VectorXd predict_linear(const LinearRieszFit& fit, const FeatureMatrix& features) {
  if (features.values.cols() != fit.theta.size())
    throw ShapeError("feature matrix has " + std::to_string(features.values.cols()) + " columns, fit has " +
                     std::to_string(fit.theta.size()));
  return features.values * fit.theta;
}

}  // namespace riesz
