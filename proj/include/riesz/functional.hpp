#pragma once

// The linear functional L(h) = E[m(h; X)] and its empirical moments.

#include <concepts>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "riesz/data.hpp"
#include "riesz/errors.hpp"
#include "riesz/sieve_basis.hpp"

namespace riesz {

enum class FunctionalKind {
  AteDifference,  // m(h; t, w) = h(1, w) - h(0, w), averaged over the sample
  ShiftMean,      // m(h; x) averaged over the target-distribution sample
};

struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::AteDifference;

  static FunctionalSpec parse(std::string_view name) {
    if (name == "ate") return {FunctionalKind::AteDifference};
    if (name == "shift-mean") return {FunctionalKind::ShiftMean};
    throw ConfigError("unknown functional '" + std::string(name) + "' (expected ate or shift-mean)");
  }

  std::string name() const { return kind == FunctionalKind::AteDifference ? "ate" : "shift-mean"; }

  void check_compatible(const Dataset& data) const {
    if (kind == FunctionalKind::AteDifference && !data.treatment)
      throw FunctionalMismatchError("ate functional requires a treatment column");
    if (kind == FunctionalKind::ShiftMean && !data.aux_sample)
      throw FunctionalMismatchError("shift-mean functional requires an aux_sample");
  }
};

/// Empirical moment vector L_hat(Phi), one entry per basis column.
struct MomentVector {
  Eigen::VectorXd values;
  Eigen::Index sample_size = 0;
};

/// Copy of `data` with every treatment entry set to `value`.
inline Dataset with_treatment(const Dataset& data, double value) {
  Dataset out;
  out.covariates = data.covariates;
  out.treatment = Eigen::VectorXd::Constant(data.n(), value);
  return out;
}

/// The target-distribution sample as a covariate-only dataset.
inline Dataset aux_as_dataset(const Dataset& data) {
  Dataset out;
  out.covariates = *data.aux_sample;
  return out;
}

inline MomentVector basis_moments(const Dataset& data, const FunctionalSpec& spec,
                                  const FeatureBuilder& features) {
  spec.check_compatible(data);
  MomentVector m;
  if (spec.kind == FunctionalKind::AteDifference) {
    const auto treated = features.build(with_treatment(data, 1.0)).values;
    const auto control = features.build(with_treatment(data, 0.0)).values;
    m.values = (treated - control).colwise().mean().transpose();
    m.sample_size = data.n();
  } else {
    const auto target = features.build(aux_as_dataset(data)).values;
    m.values = target.colwise().mean().transpose();
    m.sample_size = target.rows();
  }
  if (!m.values.allFinite()) throw NumericError("basis moments contain non-finite entries");
  return m;
}

/// One observation handed to a black-box function.
struct Observation {
  std::optional<double> treatment;
  Eigen::RowVectorXd covariates;
};

template <class F>
concept ObservationFunction = std::invocable<F&, const Observation&> &&
                              std::convertible_to<std::invoke_result_t<F&, const Observation&>, double>;

/// Empirical E[m(f; X)] for an arbitrary function of one observation.
template <ObservationFunction F>
double function_moment(const Dataset& data, const FunctionalSpec& spec, F&& f) {
  spec.check_compatible(data);
  double sum = 0.0;
  if (spec.kind == FunctionalKind::AteDifference) {
    Observation obs;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      obs.covariates = data.covariates.row(i);
      obs.treatment = 1.0;
      const double treated = f(obs);
      obs.treatment = 0.0;
      sum += treated - f(obs);
    }
    return sum / static_cast<double>(data.n());
  }
  const auto& aux = *data.aux_sample;
  Observation obs;
  for (Eigen::Index i = 0; i < aux.rows(); ++i) {
    obs.covariates = aux.row(i);
    sum += f(obs);
  }
  return sum / static_cast<double>(aux.rows());
}

}  // namespace riesz
