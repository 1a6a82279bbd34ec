#pragma once

// A small tanh multilayer perceptron and two trainers for the representer:
//
//   RieszLoss:            min_f  E_n[f(X)^2] - 2 E_n[m(f; X)]
//   ConstrainedRayleigh:  max_f  E_n[m(f~; X)]^2,  f~ = f / sqrt(E_n[f^2] + eps)
//
// The second trainer backpropagates through the normalisation, so every
// iterate satisfies the unit second-moment constraint. Its prediction is
// c * f~ with c = E_n[m(f~; X)].

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "riesz/data.hpp"
#include "riesz/errors.hpp"
#include "riesz/functional.hpp"

namespace riesz {

struct MlpConfig {
  Eigen::Index input_dim = 1;
  std::vector<Eigen::Index> hidden_widths = {32, 32};
  std::uint64_t init_seed = 0;

  void validate() const {
    if (input_dim < 1) throw ConfigError("mlp input_dim must be >= 1");
    for (auto w : hidden_widths)
      if (w < 1) throw ConfigError("mlp hidden widths must be >= 1");
  }
};

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t max_epochs = 2000;
  double tol = 1e-9;             // objective change over `tol_window` epochs
  std::size_t tol_window = 20;
  double norm_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
    if (tol_window < 1) throw ConfigError("tol_window must be >= 1");
    if (!(norm_epsilon > 0.0)) throw ConfigError("norm_epsilon must be > 0");
  }
};

/// Fully connected network: tanh hidden layers, one linear output.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  Mlp() = default;

  /// Glorot-uniform weights, zero biases.
  explicit Mlp(const MlpConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.init_seed);
    Eigen::Index fan_in = cfg.input_dim;
    auto add_layer = [&](Eigen::Index fan_out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> unif(-limit, limit);
      Layer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
      for (Eigen::Index j = 0; j < fan_in; ++j)
        for (Eigen::Index i = 0; i < fan_out; ++i) layer.weight(i, j) = unif(rng);
      layers_.push_back(std::move(layer));
      fan_in = fan_out;
    };
    for (auto w : cfg.hidden_widths) add_layer(w);
    add_layer(1);
  }

  Eigen::Index input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Eigen::Index parameter_count() const {
    Eigen::Index count = 0;
    for (const auto& l : layers_) count += l.weight.size() + l.bias.size();
    return count;
  }

  /// Offsets of each layer's block in the flat parameter vector (weights
  /// column-major, then bias); size is layers + 1.
  std::vector<Eigen::Index> layer_offsets() const {
    std::vector<Eigen::Index> out{0};
    for (const auto& l : layers_) out.push_back(out.back() + l.weight.size() + l.bias.size());
    return out;
  }

  Eigen::VectorXd parameters() const {
    Eigen::VectorXd out(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
      out.segment(k, l.weight.size()) = l.weight.reshaped();
      k += l.weight.size();
      out.segment(k, l.bias.size()) = l.bias;
      k += l.bias.size();
    }
    return out;
  }

  void set_parameters(const Eigen::VectorXd& params) {
    if (params.size() != parameter_count()) throw ShapeError("parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = params.segment(k, l.weight.size());
      k += l.weight.size();
      l.bias = params.segment(k, l.bias.size());
      k += l.bias.size();
    }
  }

  /// Multiplies the network output by `factor`.
  void scale_output(double factor) {
    layers_.back().weight *= factor;
    layers_.back().bias *= factor;
  }

  /// Activations of one forward pass, kept for backpropagation.
  struct Tape {
    std::vector<Eigen::MatrixXd> acts;  // input and hidden activations, width x n
    Eigen::VectorXd output;
  };

  Tape forward_tape(const Eigen::MatrixXd& inputs) const {
    check_inputs(inputs);
    Tape tape;
    tape.acts.reserve(layers_.size());
    tape.acts.push_back(inputs.transpose());
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
      Eigen::MatrixXd z = layers_[k].weight * tape.acts.back();
      z.colwise() += layers_[k].bias;
      tape.acts.push_back(z.array().tanh().matrix());
    }
    const auto& last = layers_.back();
    tape.output = (last.weight * tape.acts.back()).row(0).transpose();
    tape.output.array() += last.bias(0);
    return tape;
  }

  /// Outputs for each row of `inputs` (n x input_dim).
  Eigen::VectorXd forward(const Eigen::MatrixXd& inputs) const { return forward_tape(inputs).output; }

  /// Gradient of sum_i output_grad(i) * f(x_i) with respect to the flat
  /// parameter vector, for the rows recorded in `tape`.
  Eigen::VectorXd backward(const Tape& tape, const Eigen::VectorXd& output_grad) const {
    if (output_grad.size() != tape.output.size()) throw ShapeError("output gradient length mismatch");
    Eigen::VectorXd grad(parameter_count());
    const auto offsets = layer_offsets();
    Eigen::MatrixXd delta = output_grad.transpose();  // 1 x n
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& layer = layers_[k];
      const Eigen::MatrixXd gw = delta * tape.acts[k].transpose();
      grad.segment(offsets[k], gw.size()) = gw.reshaped();
      grad.segment(offsets[k] + gw.size(), layer.bias.size()) = delta.rowwise().sum();
      if (k > 0) {
        delta = (layer.weight.transpose() * delta).cwiseProduct((1.0 - tape.acts[k].array().square()).matrix());
      }
    }
    return grad;
  }

  Eigen::VectorXd backward(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& output_grad) const {
    if (output_grad.size() != inputs.rows()) throw ShapeError("output gradient length mismatch");
    return backward(forward_tape(inputs), output_grad);
  }

 private:
  void check_inputs(const Eigen::MatrixXd& inputs) const {
    if (layers_.empty()) throw ConfigError("network has no layers");
    if (inputs.cols() != input_dim())
      throw ShapeError("network expects " + std::to_string(input_dim()) + " inputs, got " +
                       std::to_string(inputs.cols()));
  }

  std::vector<Layer> layers_;
};

/// Network input rows: (t, w) for the treatment contrast, x otherwise.
inline Eigen::MatrixXd network_inputs(const Dataset& data, const FunctionalSpec& spec) {
  if (spec.kind == FunctionalKind::AteDifference) {
    if (!data.treatment) throw FunctionalMismatchError("ate functional requires a treatment column");
    Eigen::MatrixXd z(data.n(), data.p() + 1);
    z << *data.treatment, data.covariates;
    return z;
  }
  return data.covariates;
}

/// Evaluation points for one training sample: the observed rows plus the
/// points where m(f; X) evaluates f. For the treatment contrast each observed
/// row coincides with its treated or control copy, so `contrast` stacks
/// [treated; control] and one pass over it yields both f(X) and m(f; X).
struct RieszBatch {
  FunctionalKind kind = FunctionalKind::AteDifference;
  Eigen::MatrixXd observed;
  Eigen::MatrixXd contrast;   // AteDifference: treated rows, then control rows
  Eigen::VectorXd treatment;  // AteDifference
  Eigen::MatrixXd target;     // ShiftMean
};

inline RieszBatch make_batch(const Dataset& data, const FunctionalSpec& spec) {
  spec.check_compatible(data);
  data.validate();
  RieszBatch b;
  b.kind = spec.kind;
  b.observed = network_inputs(data, spec);
  if (spec.kind == FunctionalKind::AteDifference) {
    b.contrast.resize(2 * data.n(), b.observed.cols());
    b.contrast << network_inputs(with_treatment(data, 1.0), spec), network_inputs(with_treatment(data, 0.0), spec);
    b.treatment = *data.treatment;
  } else {
    b.target = *data.aux_sample;
  }
  return b;
}

/// Objective value and, optionally, its gradient in the flat parameters.
struct ObjectiveEval {
  double value = 0.0;
  double second_moment = 0.0;  // E_n[f^2]
  double moment = 0.0;         // E_n[m(f; X)]
  Eigen::VectorXd gradient;
};

namespace detail {

/// One forward pass over a batch: f on the observed rows and E_n[m(f; X)].
/// gradient(w, a) is d/dparams of sum_i w_i f(X_i) + a E_n[m(f; X)].
class BatchPass {
 public:
  BatchPass(const Mlp& net, const RieszBatch& batch) : net_(net), batch_(batch) {
    if (batch.kind == FunctionalKind::AteDifference) {
      main_ = net.forward_tape(batch.contrast);
      const auto n = batch.treatment.size();
      const auto ft = main_.output.head(n);
      const auto fc = main_.output.tail(n);
      observed_ = batch.treatment.cwiseProduct(ft) + (1.0 - batch.treatment.array()).matrix().cwiseProduct(fc);
      moment_ = (ft - fc).mean();
    } else {
      main_ = net.forward_tape(batch.observed);
      target_ = net.forward_tape(batch.target);
      observed_ = main_.output;
      moment_ = target_.output.mean();
    }
  }

  const Eigen::VectorXd& observed() const { return observed_; }
  double moment() const { return moment_; }

  Eigen::VectorXd gradient(const Eigen::VectorXd& observed_weights, double moment_weight) const {
    if (batch_.kind == FunctionalKind::AteDifference) {
      const auto n = batch_.treatment.size();
      const double per_row = moment_weight / static_cast<double>(n);
      Eigen::VectorXd w(2 * n);
      w.head(n) = batch_.treatment.cwiseProduct(observed_weights).array() + per_row;
      w.tail(n) = (1.0 - batch_.treatment.array()).matrix().cwiseProduct(observed_weights).array() - per_row;
      return net_.backward(main_, w);
    }
    const auto m = batch_.target.rows();
    return net_.backward(main_, observed_weights) +
           net_.backward(target_, Eigen::VectorXd::Constant(m, moment_weight / static_cast<double>(m)));
  }

 private:
  const Mlp& net_;
  const RieszBatch& batch_;
  Mlp::Tape main_;
  Mlp::Tape target_;
  Eigen::VectorXd observed_;
  double moment_ = 0.0;
};

inline double functional_moment(const Mlp& net, const RieszBatch& batch) { return BatchPass(net, batch).moment(); }

}  // namespace detail

/// E_n[f^2] - 2 E_n[m(f; X)].
inline ObjectiveEval riesz_loss_objective(const Mlp& net, const RieszBatch& batch, bool with_gradient = true) {
  ObjectiveEval e;
  const detail::BatchPass pass(net, batch);
  const Eigen::VectorXd& f = pass.observed();
  const double n = static_cast<double>(f.size());
  e.second_moment = f.squaredNorm() / n;
  e.moment = pass.moment();
  e.value = e.second_moment - 2.0 * e.moment;
  if (with_gradient) e.gradient = pass.gradient((2.0 / n) * f, -2.0);
  return e;
}

/// E_n[m(f; X)]^2 / (E_n[f^2] + eps), the squared moment of the normalised
/// network; to be maximised.
inline ObjectiveEval rayleigh_objective(const Mlp& net, const RieszBatch& batch, double norm_epsilon,
                                        bool with_gradient = true) {
  ObjectiveEval e;
  const detail::BatchPass pass(net, batch);
  const Eigen::VectorXd& f = pass.observed();
  const double n = static_cast<double>(f.size());
  e.second_moment = f.squaredNorm() / n;
  e.moment = pass.moment();
  const double s = e.second_moment + norm_epsilon;
  e.value = e.moment * e.moment / s;
  // d/dS = -M^2/S^2 with dS/df_i = 2 f_i / n;  d/dM = 2M/S.
  if (with_gradient) e.gradient = pass.gradient((-2.0 * e.value / (s * n)) * f, 2.0 * e.moment / s);
  return e;
}

enum class NeuralTrainer { RieszLoss, ConstrainedRayleigh };

inline const char* to_string(NeuralTrainer t) {
  return t == NeuralTrainer::RieszLoss ? "riesz_loss" : "constrained_rayleigh";
}

struct NeuralRieszFit {
  Mlp network;
  MlpConfig mlp;
  TrainConfig train;
  NeuralTrainer trainer = NeuralTrainer::RieszLoss;
  FunctionalKind functional = FunctionalKind::AteDifference;
  /// 1 for RieszLoss; E_n[m(f~; X)] for ConstrainedRayleigh.
  double scale_c = 1.0;
  /// sqrt(E_n[f^2]) on the training sample, frozen at the end of training.
  double norm_scale = 1.0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::size_t epochs_run = 0;
};

namespace detail {

/// Full-batch gradient descent on `sign * objective`, keeping the best iterate.
template <class Objective>
std::pair<Eigen::VectorXd, std::size_t> gradient_descent(Mlp& net, const TrainConfig& train, double sign,
                                                         Objective&& objective, double& initial, double& best) {
  ObjectiveEval e = objective(net);
  if (!std::isfinite(e.value)) throw DivergenceError(0);
  initial = e.value;
  best = e.value;
  Eigen::VectorXd params = net.parameters();
  Eigen::VectorXd best_params = params;
  std::vector<double> history{sign * e.value};
  std::size_t epoch = 0;
  while (epoch < train.max_epochs) {
    ++epoch;
    params -= (sign * train.learning_rate) * e.gradient;
    net.set_parameters(params);
    e = objective(net);
    if (!std::isfinite(e.value) || !e.gradient.allFinite()) throw DivergenceError(epoch);
    if (sign * e.value < sign * best) {
      best = e.value;
      best_params = params;
    }
    history.push_back(sign * e.value);
    if (epoch >= train.tol_window && std::abs(history[epoch] - history[epoch - train.tol_window]) < train.tol) break;
  }
  net.set_parameters(best_params);
  return {std::move(best_params), epoch};
}

}  // namespace detail

/// Minimises the empirical Riesz loss over the network class.
inline NeuralRieszFit train_riesz_loss(const Dataset& data, const FunctionalSpec& spec, const MlpConfig& mlp,
                                       const TrainConfig& train = {}) {
  train.validate();
  const RieszBatch batch = make_batch(data, spec);
  if (batch.observed.cols() != mlp.input_dim)
    throw ShapeError("mlp input_dim " + std::to_string(mlp.input_dim) + " does not match data width " +
                     std::to_string(batch.observed.cols()));
  NeuralRieszFit fit;
  fit.network = Mlp(mlp);
  fit.mlp = mlp;
  fit.train = train;
  fit.trainer = NeuralTrainer::RieszLoss;
  fit.functional = spec.kind;
  auto objective = [&](const Mlp& net) { return riesz_loss_objective(net, batch); };
  fit.epochs_run = detail::gradient_descent(fit.network, train, 1.0, objective, fit.initial_objective,
                                            fit.final_objective)
                       .second;
  return fit;
}

/// Freezes the normalisation of a network as a ConstrainedRayleigh fit:
/// norm_scale = sqrt(E_n[f^2]) and c = E_n[m(f; X)] / norm_scale.
inline void freeze_rayleigh_scale(NeuralRieszFit& fit, const RieszBatch& batch) {
  const Eigen::VectorXd f = fit.network.forward(batch.observed);
  const double second_moment = f.squaredNorm() / static_cast<double>(f.size());
  if (!(second_moment > 0.0)) throw DegenerateNetworkError("network output is identically zero");
  fit.norm_scale = std::sqrt(second_moment);
  fit.scale_c = detail::functional_moment(fit.network, batch) / fit.norm_scale;
}

/// Maximises the squared moment of the normalised network, with gradients
/// through the normalisation.
inline NeuralRieszFit train_rayleigh_constrained(const Dataset& data, const FunctionalSpec& spec,
                                                 const MlpConfig& mlp, const TrainConfig& train = {}) {
  train.validate();
  const RieszBatch batch = make_batch(data, spec);
  if (batch.observed.cols() != mlp.input_dim)
    throw ShapeError("mlp input_dim " + std::to_string(mlp.input_dim) + " does not match data width " +
                     std::to_string(batch.observed.cols()));
  NeuralRieszFit fit;
  fit.network = Mlp(mlp);
  fit.mlp = mlp;
  fit.train = train;
  fit.trainer = NeuralTrainer::ConstrainedRayleigh;
  fit.functional = spec.kind;

  const Eigen::VectorXd f0 = fit.network.forward(batch.observed);
  if (f0.squaredNorm() / static_cast<double>(f0.size()) < train.norm_epsilon)
    throw DegenerateNetworkError("initial network output has second moment below norm_epsilon; reinitialise "
                                 "with a different seed");

  auto objective = [&](const Mlp& net) { return rayleigh_objective(net, batch, train.norm_epsilon); };
  fit.epochs_run = detail::gradient_descent(fit.network, train, -1.0, objective, fit.initial_objective,
                                            fit.final_objective)
                       .second;
  freeze_rayleigh_scale(fit, batch);
  return fit;
}

/// Representer predictions on the rows of `data`.
inline Eigen::VectorXd predict_alpha(const NeuralRieszFit& fit, const Dataset& data) {
  const Eigen::VectorXd f = fit.network.forward(network_inputs(data, FunctionalSpec{fit.functional}));
  if (fit.trainer == NeuralTrainer::RieszLoss) return f;
  return (fit.scale_c / fit.norm_scale) * f;
}

}  // namespace riesz
