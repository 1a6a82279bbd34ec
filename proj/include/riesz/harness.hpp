#pragma once

// Random (Gram, moment) instances and the unregularised / ridge equivalence
// sweep over them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "riesz/data.hpp"
#include "riesz/functional.hpp"
#include "riesz/linear_solvers.hpp"
#include "riesz/sieve_basis.hpp"

namespace riesz {

struct RandomInstance {
  FeatureMatrix features;
  GramMatrix gram;
  MomentVector moments;
  double condition_number = 1.0;
};

/// Spectral condition number of a symmetric PSD matrix (infinite when singular).
inline double condition_number(const Eigen::MatrixXd& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (!(ev(0) > 0.0)) return std::numeric_limits<double>::infinity();
  return ev(ev.size() - 1) / ev(0);
}

/// Phi = Z diag(s) Q' with Z standard normal, Q Haar-orthogonal and s
/// log-spaced over [10^-k, 1], k ~ U(0, max_log10_spread); L ~ N(0, I).
/// Instances whose Gram condition number exceeds `max_condition` are redrawn.
inline RandomInstance random_instance(Rng& rng, Eigen::Index n, Eigen::Index d, double max_log10_spread = 2.5,
                                      double max_condition = 1e6) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> spread(0.0, max_log10_spread);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
  };
  for (;;) {
    const double k = spread(rng);
    Eigen::VectorXd s(d);
    for (Eigen::Index j = 0; j < d; ++j)
      s(j) = std::pow(10.0, d > 1 ? -k * static_cast<double>(j) / static_cast<double>(d - 1) : 0.0);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(d, d)).householderQ();
    RandomInstance inst;
    inst.features.values = gaussian(n, d) * s.asDiagonal() * q.transpose();
    inst.gram = gram(inst.features);
    inst.moments.values = gaussian(d, 1).col(0);
    inst.moments.sample_size = n;
    inst.condition_number = condition_number(inst.gram.values);
    if (inst.condition_number <= max_condition) return inst;
  }
}

struct EquivalenceSummary {
  std::size_t instances = 0;
  double l2 = 0.0;
  double max_rel_diff = 0.0;              // riesz-loss vs rayleigh
  double max_closed_form_rel_diff = 0.0;  // both vs (G + l2 I)^{-1} L via LU
  double max_min_value_rel_err = 0.0;     // objective + theta'G theta (l2 = 0)
  double max_norm_identity_rel_err = 0.0; // theta'G theta vs L'G^{-1}L (l2 = 0)
  double max_condition = 0.0;
  double seconds = 0.0;
};

inline EquivalenceSummary run_equivalence_sweep(std::uint64_t seed, std::size_t instances, Eigen::Index n,
                                                Eigen::Index d, double l2 = 0.0) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  EquivalenceSummary out;
  out.instances = instances;
  out.l2 = l2;
  for (std::size_t k = 0; k < instances; ++k) {
    const auto inst = random_instance(rng, n, d);
    const auto loss = solve_riesz_loss(inst.gram, inst.moments, l2);
    const auto ray = solve_rayleigh(inst.gram, inst.moments, 0.0, l2);
    out.max_rel_diff = std::max(out.max_rel_diff, equivalence_report(loss, ray).max_rel_diff);

    Eigen::MatrixXd metric = inst.gram.values;
    metric.diagonal().array() += l2;
    LinearRieszFit closed;
    closed.theta = Eigen::FullPivLU<Eigen::MatrixXd>(metric).solve(inst.moments.values);
    out.max_closed_form_rel_diff =
        std::max({out.max_closed_form_rel_diff, equivalence_report(loss, closed).max_rel_diff,
                  equivalence_report(ray, closed).max_rel_diff});
    if (l2 == 0.0) {
      out.max_min_value_rel_err = std::max(
          out.max_min_value_rel_err, std::abs(loss.objective_value + loss.gnorm_sq) / std::abs(loss.gnorm_sq));
      const double quad = inst.moments.values.dot(closed.theta);
      out.max_norm_identity_rel_err =
          std::max(out.max_norm_identity_rel_err, std::abs(ray.gnorm_sq - quad) / std::abs(quad));
    }
    out.max_condition = std::max(out.max_condition, inst.condition_number);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace riesz
