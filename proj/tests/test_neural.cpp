#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "riesz/neural.hpp"

namespace riesz {
namespace {

Dataset ate_data(std::size_t n, std::size_t p = 1, std::uint64_t seed = 0) {
  AteDgpConfig cfg = default_ate_config(p);
  cfg.n = n;
  cfg.seed = seed;
  return generate_ate_dgp(cfg);
}

Dataset shift_data(std::size_t n, std::uint64_t seed = 0) {
  ShiftDgpConfig cfg;
  cfg.n_source = n;
  cfg.n_target = n;
  cfg.seed = seed;
  return generate_shift_dgp(cfg);
}

/// Central finite differences of `value(params)`.
template <class F>
Eigen::VectorXd numeric_gradient(Mlp net, F value, double step = 1e-5) {
  const Eigen::VectorXd p0 = net.parameters();
  Eigen::VectorXd g(p0.size());
  for (Eigen::Index k = 0; k < p0.size(); ++k) {
    Eigen::VectorXd p = p0;
    p(k) += step;
    net.set_parameters(p);
    const double up = value(net);
    p(k) = p0(k) - step;
    net.set_parameters(p);
    const double down = value(net);
    g(k) = (up - down) / (2.0 * step);
  }
  return g;
}

void expect_gradient_matches(const Mlp& net, const RieszBatch& batch, bool rayleigh) {
  auto value = [&](const Mlp& m) {
    return rayleigh ? rayleigh_objective(m, batch, 1e-8, false).value : riesz_loss_objective(m, batch, false).value;
  };
  const Eigen::VectorXd analytic =
      rayleigh ? rayleigh_objective(net, batch, 1e-8).gradient : riesz_loss_objective(net, batch).gradient;
  const Eigen::VectorXd numeric = numeric_gradient(net, value);
  const auto offsets = net.layer_offsets();
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const auto len = offsets[k + 1] - offsets[k];
    const Eigen::VectorXd a = analytic.segment(offsets[k], len);
    const Eigen::VectorXd b = numeric.segment(offsets[k], len);
    EXPECT_LE((a - b).norm(), 1e-4 * std::max(1.0, b.norm())) << "layer " << k << (rayleigh ? " rayleigh" : " loss");
  }
}

TEST(Mlp, ForwardMatchesManualComputation) {
  MlpConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_widths = {3};
  Mlp net(cfg);
  EXPECT_EQ(net.parameter_count(), 2 * 3 + 3 + 3 + 1);
  const Eigen::RowVector2d x(0.3, -0.8);
  const auto& l0 = net.layers()[0];
  const auto& l1 = net.layers()[1];
  const Eigen::VectorXd h = (l0.weight * x.transpose() + l0.bias).array().tanh();
  const double expected = (l1.weight * h)(0) + l1.bias(0);
  EXPECT_NEAR(net.forward(x)(0), expected, 1e-15);
  EXPECT_TRUE(l0.bias.isZero(0.0));
  const double limit = std::sqrt(6.0 / 5.0);
  EXPECT_LE(l0.weight.cwiseAbs().maxCoeff(), limit);
}

TEST(Mlp, ParameterRoundTrip) {
  MlpConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_widths = {4, 2};
  Mlp net(cfg);
  const Eigen::VectorXd p = net.parameters();
  Mlp other(MlpConfig{3, {4, 2}, 99});
  other.set_parameters(p);
  EXPECT_EQ(other.parameters(), p);
  EXPECT_THROW(other.set_parameters(Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST(Objectives, SharedPassMatchesDirectEvaluation) {
  const auto data = ate_data(30);
  const FunctionalSpec spec{FunctionalKind::AteDifference};
  const auto batch = make_batch(data, spec);
  Mlp net(MlpConfig{2, {3}, 4});
  const Eigen::VectorXd f = net.forward(network_inputs(data, spec));
  const double moment = (net.forward(network_inputs(with_treatment(data, 1.0), spec)) -
                         net.forward(network_inputs(with_treatment(data, 0.0), spec)))
                            .mean();
  const auto e = riesz_loss_objective(net, batch, false);
  EXPECT_NEAR(e.second_moment, f.squaredNorm() / 30.0, 1e-14);
  EXPECT_NEAR(e.moment, moment, 1e-14);
  EXPECT_NEAR(e.value, f.squaredNorm() / 30.0 - 2.0 * moment, 1e-14);
}

TEST(Gradients, MatchFiniteDifferencesAte) {
  const auto data = ate_data(40);
  const auto batch = make_batch(data, FunctionalSpec{FunctionalKind::AteDifference});
  for (const auto& widths : {std::vector<Eigen::Index>{3}, std::vector<Eigen::Index>{2}, std::vector<Eigen::Index>{4, 3}}) {
    Mlp net(MlpConfig{2, widths, 5});
    // Move away from zero biases so every parameter is exercised.
    std::mt19937_64 rng(1);
    net.set_parameters(net.parameters() + 0.3 * test::random_vector(rng, net.parameter_count()));
    expect_gradient_matches(net, batch, false);
    expect_gradient_matches(net, batch, true);
  }
}

TEST(Gradients, MatchFiniteDifferencesShift) {
  const auto data = shift_data(30);
  const auto batch = make_batch(data, FunctionalSpec{FunctionalKind::ShiftMean});
  Mlp net(MlpConfig{1, {3}, 2});
  std::mt19937_64 rng(2);
  net.set_parameters(net.parameters() + 0.3 * test::random_vector(rng, net.parameter_count()));
  expect_gradient_matches(net, batch, false);
  expect_gradient_matches(net, batch, true);
}

TEST(RieszLossTraining, ImprovesOnInitialObjective) {
  const auto data = ate_data(200);
  TrainConfig train;
  train.max_epochs = 300;
  const auto fit = train_riesz_loss(data, FunctionalSpec{FunctionalKind::AteDifference}, MlpConfig{2, {8}, 0}, train);
  EXPECT_LE(fit.final_objective, fit.initial_objective);
  EXPECT_LE(fit.final_objective, 0.0);
  EXPECT_GE(fit.epochs_run, 1u);
  const auto batch = make_batch(data, FunctionalSpec{FunctionalKind::AteDifference});
  EXPECT_NEAR(riesz_loss_objective(fit.network, batch, false).value, fit.final_objective, 1e-12);
  // The loss fit predicts the raw network output.
  const Eigen::VectorXd f = fit.network.forward(network_inputs(data, FunctionalSpec{FunctionalKind::AteDifference}));
  EXPECT_LE((predict_alpha(fit, data) - f).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RayleighTraining, UnitSecondMomentAndAscent) {
  for (bool ate : {true, false}) {
    const auto data = ate ? ate_data(200) : shift_data(200);
    const FunctionalSpec spec{ate ? FunctionalKind::AteDifference : FunctionalKind::ShiftMean};
    TrainConfig train;
    train.max_epochs = 300;
    const auto fit = train_rayleigh_constrained(data, spec, MlpConfig{ate ? 2 : 1, {8}, 1}, train);
    EXPECT_GE(fit.final_objective, fit.initial_objective);
    const Eigen::VectorXd normalised = fit.network.forward(network_inputs(data, spec)) / fit.norm_scale;
    EXPECT_NEAR(normalised.squaredNorm() / static_cast<double>(normalised.size()), 1.0, 1e-6);
    // Predictions are c times the normalised network, c the moment of that network.
    const auto batch = make_batch(data, spec);
    Mlp unit = fit.network;
    unit.scale_output(1.0 / fit.norm_scale);
    EXPECT_NEAR(fit.scale_c, detail::functional_moment(unit, batch), 1e-12);
    EXPECT_LE((predict_alpha(fit, data) - fit.scale_c * normalised).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RayleighTraining, InvariantToScalingTheNetwork) {
  const auto data = ate_data(100);
  const FunctionalSpec spec{FunctionalKind::AteDifference};
  auto fit = train_rayleigh_constrained(data, spec, MlpConfig{2, {4}, 3}, TrainConfig{1e-2, 50});
  const Eigen::VectorXd before = predict_alpha(fit, data);
  fit.network.scale_output(2.0);
  freeze_rayleigh_scale(fit, make_batch(data, spec));
  EXPECT_LE((predict_alpha(fit, data) - before).cwiseAbs().maxCoeff(), 1e-12 * before.cwiseAbs().maxCoeff());
}

TEST(RayleighTraining, ZeroScaleAndZeroNetwork) {
  const auto data = ate_data(50);
  const FunctionalSpec spec{FunctionalKind::AteDifference};
  auto fit = train_rayleigh_constrained(data, spec, MlpConfig{2, {4}, 3}, TrainConfig{1e-2, 5});
  fit.scale_c = 0.0;
  EXPECT_TRUE(predict_alpha(fit, data).isZero(0.0));

  Mlp zero(MlpConfig{2, {4}, 3});
  zero.set_parameters(Eigen::VectorXd::Zero(zero.parameter_count()));
  const auto e = rayleigh_objective(zero, make_batch(data, spec), 1e-8);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_TRUE(e.gradient.allFinite());
}

TEST(Training, DeterministicGivenSeed) {
  const auto data = ate_data(80);
  const FunctionalSpec spec{FunctionalKind::AteDifference};
  const TrainConfig train{1e-2, 40};
  const auto a = train_riesz_loss(data, spec, MlpConfig{2, {5}, 7}, train);
  const auto b = train_riesz_loss(data, spec, MlpConfig{2, {5}, 7}, train);
  EXPECT_EQ(a.network.parameters(), b.network.parameters());
  const auto c = train_rayleigh_constrained(data, spec, MlpConfig{2, {5}, 7}, train);
  const auto d = train_rayleigh_constrained(data, spec, MlpConfig{2, {5}, 7}, train);
  EXPECT_EQ(predict_alpha(c, data), predict_alpha(d, data));
}

TEST(Training, DegenerateNetworkRaises) {
  // Zero inputs with zero biases give an identically zero initial network.
  auto data = shift_data(20);
  data.covariates.setZero();
  EXPECT_THROW(train_rayleigh_constrained(data, FunctionalSpec{FunctionalKind::ShiftMean}, MlpConfig{1, {4}, 0}),
               DegenerateNetworkError);
}

TEST(Training, DivergenceRaisesWithEpoch) {
  const auto data = ate_data(50);
  try {
    train_riesz_loss(data, FunctionalSpec{FunctionalKind::AteDifference}, MlpConfig{2, {4}, 0},
                     TrainConfig{1e308, 100});
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1u);
  }
}

TEST(Training, InputDimensionMismatch) {
  const auto data = ate_data(20, 2);
  EXPECT_THROW(train_riesz_loss(data, FunctionalSpec{FunctionalKind::AteDifference}, MlpConfig{2, {4}, 0}),
               ShapeError);
  EXPECT_THROW(train_riesz_loss(data, FunctionalSpec{FunctionalKind::AteDifference}, MlpConfig{3, {4}, 0},
                                TrainConfig{-1.0}),
               ConfigError);
}

}  // namespace
}  // namespace riesz
