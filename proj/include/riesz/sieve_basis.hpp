#pragma once

// Sieve feature maps phi(x) and the empirical Gram matrix.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "riesz/data.hpp"
#include "riesz/errors.hpp"

namespace riesz {

struct FeatureMatrix {
  Eigen::MatrixXd values;  // n x d, row i = phi(x_i)
};

struct GramMatrix {
  Eigen::MatrixXd values;  // d x d, Phi' Phi / n
  Eigen::Index n_used = 0;
};

namespace basis {

/// Monomials of total degree <= K in the covariates, crossed with (1, t).
struct PolynomialWithTreatment {
  int degree = 1;
};
/// Monomials of total degree <= K in the covariates.
struct Polynomial {
  int degree = 1;
};
/// sqrt(2/count) * cos(z' omega + b) with omega ~ N(0, I / bandwidth^2),
/// b ~ U(0, 2 pi). z is (t, x) when the dataset carries a treatment.
struct RandomFourier {
  std::size_t count = 100;
  double bandwidth = 1.0;
  std::uint64_t seed = 0;
};

using Kind = std::variant<PolynomialWithTreatment, Polynomial, RandomFourier>;

/// Exponent vectors of all monomials in `p` variables with total degree
/// <= `degree`. Ordered by total degree, then by descending exponent of the
/// first variable, then the second, and so on: for p = 2, degree 2 that is
/// 1, x1, x2, x1^2, x1 x2, x2^2.
inline std::vector<std::vector<int>> monomial_exponents(Eigen::Index p, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(static_cast<std::size_t>(p), 0);
  // Fill positions [pos, p) with exponents summing to `remaining`.
  auto fill = [&](auto&& self, std::size_t pos, int remaining) -> void {
    if (pos + 1 == current.size()) {
      current[pos] = remaining;
      out.push_back(current);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current[pos] = e;
      self(self, pos + 1, remaining - e);
    }
  };
  for (int k = 0; k <= degree; ++k) fill(fill, 0, k);
  return out;
}

inline Eigen::MatrixXd monomials(const Eigen::MatrixXd& x, int degree) {
  const auto exps = monomial_exponents(x.cols(), degree);
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(exps.size()));
  for (std::size_t c = 0; c < exps.size(); ++c) {
    auto col = out.col(static_cast<Eigen::Index>(c));
    col.setOnes();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (int e = 0; e < exps[c][static_cast<std::size_t>(j)]; ++e) col.array() *= x.col(j).array();
  }
  return out;
}

}  // namespace basis

/// Column-wise z-scoring fitted on a training design. Constant columns are
/// passed through unchanged.
struct Standardization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardization fit(const Eigen::MatrixXd& phi) {
    Standardization s;
    const double n = static_cast<double>(phi.rows());
    s.mean = phi.colwise().mean();
    s.scale.resize(phi.cols());
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      const double var = (phi.col(j).array() - s.mean(j)).square().sum() / n;
      if (var > 0.0) {
        s.scale(j) = std::sqrt(var);
      } else {
        s.mean(j) = 0.0;
        s.scale(j) = 1.0;
      }
    }
    return s;
  }

  void apply(Eigen::MatrixXd& phi) const {
    phi.rowwise() -= mean;
    phi.array().rowwise() /= scale.array();
  }
};

/// A feature map phi with a stable column ordering.
class FeatureBuilder {
 public:
  FeatureBuilder() = default;
  explicit FeatureBuilder(basis::Kind kind) : kind_(std::move(kind)) { validate(); }

  static FeatureBuilder polynomial_with_treatment(int degree) {
    return FeatureBuilder(basis::PolynomialWithTreatment{degree});
  }
  static FeatureBuilder polynomial(int degree) { return FeatureBuilder(basis::Polynomial{degree}); }
  static FeatureBuilder random_fourier(std::size_t count, double bandwidth, std::uint64_t seed = 0) {
    return FeatureBuilder(basis::RandomFourier{count, bandwidth, seed});
  }

  /// Parses `poly-t:K`, `poly:K` or `rff:count,bw[,seed]`.
  static FeatureBuilder parse(std::string_view spec) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) throw ConfigError("basis spec '" + std::string(spec) + "' lacks ':'");
    const auto name = spec.substr(0, colon);
    const auto args = detail::split_csv_line(spec.substr(colon + 1));
    auto number = [&](std::size_t i) {
      const auto v = i < args.size() ? detail::parse_double(args[i]) : std::nullopt;
      if (!v) throw ConfigError("basis spec '" + std::string(spec) + "': bad argument " + std::to_string(i + 1));
      return *v;
    };
    auto as_int = [&](std::size_t i) {
      const double v = number(i);
      if (v != std::floor(v)) throw ConfigError("basis spec '" + std::string(spec) + "': expected an integer");
      return static_cast<long long>(v);
    };
    if (name == "poly-t" && args.size() == 1) return polynomial_with_treatment(static_cast<int>(as_int(0)));
    if (name == "poly" && args.size() == 1) return polynomial(static_cast<int>(as_int(0)));
    if (name == "rff" && (args.size() == 2 || args.size() == 3)) {
      const auto count = as_int(0);
      if (count < 1) throw ConfigError("rff count must be >= 1");
      const auto seed = args.size() == 3 ? as_int(2) : 0;
      return random_fourier(static_cast<std::size_t>(count), number(1), static_cast<std::uint64_t>(seed));
    }
    throw ConfigError("unrecognised basis spec '" + std::string(spec) + "'");
  }

  std::string to_string() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, basis::PolynomialWithTreatment>)
            return "poly-t:" + std::to_string(k.degree);
          else if constexpr (std::is_same_v<K, basis::Polynomial>)
            return "poly:" + std::to_string(k.degree);
          else
            return "rff:" + std::to_string(k.count) + "," + detail::format_number(k.bandwidth) + "," +
                   std::to_string(k.seed);
        },
        kind_);
  }

  const basis::Kind& kind() const { return kind_; }
  const std::optional<Standardization>& standardization() const { return standardization_; }

  bool requires_treatment() const { return std::holds_alternative<basis::PolynomialWithTreatment>(kind_); }

  /// Returns a copy that z-scores columns using statistics of `data`'s design.
  FeatureBuilder standardized_on(const Dataset& data) const {
    FeatureBuilder out = *this;
    out.standardization_.reset();
    out.standardization_ = Standardization::fit(out.build(data).values);
    return out;
  }

  FeatureMatrix build(const Dataset& data) const {
    const Eigen::MatrixXd& x = data.covariates;
    Eigen::MatrixXd phi = std::visit(
        [&](const auto& k) -> Eigen::MatrixXd {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, basis::PolynomialWithTreatment>) {
            if (!data.treatment) throw ConfigError("basis poly-t requires a treatment column");
            const Eigen::MatrixXd mono = basis::monomials(x, k.degree);
            Eigen::MatrixXd out(x.rows(), 2 * mono.cols());
            for (Eigen::Index c = 0; c < mono.cols(); ++c) {
              out.col(2 * c) = mono.col(c);
              out.col(2 * c + 1) = mono.col(c).cwiseProduct(*data.treatment);
            }
            return out;
          } else if constexpr (std::is_same_v<K, basis::Polynomial>) {
            return basis::monomials(x, k.degree);
          } else {
            Eigen::MatrixXd z(x.rows(), x.cols() + (data.treatment ? 1 : 0));
            if (data.treatment) z << *data.treatment, x;
            else z = x;
            Rng rng(k.seed);
            std::normal_distribution<double> normal(0.0, 1.0 / k.bandwidth);
            std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
            const auto count = static_cast<Eigen::Index>(k.count);
            Eigen::MatrixXd omega(z.cols(), count);
            Eigen::RowVectorXd offset(count);
            for (Eigen::Index c = 0; c < count; ++c) {
              for (Eigen::Index j = 0; j < z.cols(); ++j) omega(j, c) = normal(rng);
              offset(c) = phase(rng);
            }
            Eigen::MatrixXd proj = z * omega;
            proj.rowwise() += offset;
            return std::sqrt(2.0 / static_cast<double>(count)) * proj.array().cos().matrix();
          }
        },
        kind_);
    if (standardization_) {
      if (standardization_->mean.size() != phi.cols())
        throw ShapeError("standardization was fitted on a different number of columns");
      standardization_->apply(phi);
    }
    return FeatureMatrix{std::move(phi)};
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, basis::RandomFourier>) {
            if (k.count < 1) throw ConfigError("rff count must be >= 1");
            if (!(k.bandwidth > 0.0)) throw ConfigError("rff bandwidth must be > 0");
          } else {
            if (k.degree < 0) throw ConfigError("polynomial degree must be >= 0");
          }
        },
        kind_);
  }

  basis::Kind kind_ = basis::PolynomialWithTreatment{1};
  std::optional<Standardization> standardization_;
};

inline FeatureMatrix build_features(const Dataset& data, const FeatureBuilder& builder) {
  return builder.build(data);
}

/// G = Phi' Phi / n, symmetrised.
inline GramMatrix gram(const FeatureMatrix& features) {
  const auto& phi = features.values;
  if (phi.rows() < 1) throw ShapeError("gram: feature matrix has no rows");
  GramMatrix g;
  g.n_used = phi.rows();
  g.values.setZero(phi.cols(), phi.cols());
  g.values.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), 1.0 / static_cast<double>(phi.rows()));
  g.values.triangularView<Eigen::StrictlyUpper>() = g.values.transpose();
  return g;
}

}  // namespace riesz
