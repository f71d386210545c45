#include "vru/neuralnet.hpp"

#include "vru/trajdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace vru
{

namespace
{

Eigen::MatrixXd apply_activation(Activation a, const Eigen::MatrixXd & z)
{
  switch (a) {
    case Activation::Sigmoid:
      return (1.0 + (-z.array()).exp()).inverse().matrix();
    case Activation::Gaussian:
      return (-z.array().square()).exp().matrix();
    case Activation::Identity:
      return z;
  }
  return z;
}

// Derivative expressed through pre-activation z and activation a.
Eigen::ArrayXXd activation_slope(Activation act, const Eigen::MatrixXd & z, const Eigen::MatrixXd & a)
{
  switch (act) {
    case Activation::Sigmoid:
      return a.array() * (1.0 - a.array());
    case Activation::Gaussian:
      return -2.0 * z.array() * a.array();
    case Activation::Identity:
      return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
  }
  return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd & m, const std::vector<Eigen::Index> & cols)
{
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  }
  return out;
}

}  // namespace

std::string_view to_string(Activation a)
{
  switch (a) {
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      return "identity";
    case Activation::Gaussian:
      return "gaussian";
  }
  return "?";
}

Activation parse_activation(std::string_view text)
{
  for (auto a : {Activation::Sigmoid, Activation::Identity, Activation::Gaussian}) {
    if (text == to_string(a)) {
      return a;
    }
  }
  throw ParameterError("unknown activation '" + std::string(text) + "'");
}

Normalizer Normalizer::identity(Eigen::Index size)
{
  return {Eigen::VectorXd::Zero(size), Eigen::VectorXd::Ones(size)};
}

Normalizer Normalizer::fit(const Eigen::MatrixXd & data)
{
  Normalizer n;
  const double count = static_cast<double>(data.cols());
  n.mean = data.rowwise().sum() / count;
  n.stddev = ((data.colwise() - n.mean).array().square().rowwise().sum() / count).sqrt().matrix();
  for (Eigen::Index i = 0; i < n.stddev.size(); ++i) {
    if (!(n.stddev[i] > 0.0)) {
      n.stddev[i] = 1.0;
    }
  }
  return n;
}

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd & x) const
{
  return ((x.colwise() - mean).array().colwise() / stddev.array()).matrix();
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd & z) const
{
  return ((z.array().colwise() * stddev.array()).matrix().colwise() + mean);
}

MlpModel::MlpModel(std::vector<int> layer_sizes, Activation hidden) : layer_sizes_(std::move(layer_sizes))
{
  if (layer_sizes_.size() < 2) {
    throw ParameterError("an MLP needs at least input and output layers");
  }
  for (int s : layer_sizes_) {
    if (s < 1) {
      throw ParameterError("layer sizes must be positive");
    }
  }
  for (std::size_t l = 1; l < layer_sizes_.size(); ++l) {
    DenseLayer layer;
    layer.weights = Eigen::MatrixXd::Zero(layer_sizes_[l], layer_sizes_[l - 1]);
    layer.bias = Eigen::VectorXd::Zero(layer_sizes_[l]);
    layer.activation = l + 1 == layer_sizes_.size() ? Activation::Identity : hidden;
    layers_.push_back(std::move(layer));
  }
  input_norm_ = Normalizer::identity(layer_sizes_.front());
  output_norm_ = Normalizer::identity(layer_sizes_.back());
}

std::size_t MlpModel::parameter_count() const
{
  std::size_t n = 0;
  for (const auto & l : layers_) {
    n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  }
  return n;
}

void MlpModel::initialize(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  for (auto & layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights(r, c) = dist(rng);
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      layer.bias[r] = dist(rng);
    }
  }
}

void MlpModel::validate() const
{
  if (layers_.size() + 1 != layer_sizes_.size()) {
    throw ParameterError("layer count does not match topology");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weights.rows() != layer_sizes_[l + 1] || layers_[l].weights.cols() != layer_sizes_[l] ||
        layers_[l].bias.size() != layer_sizes_[l + 1]) {
      throw ParameterError("weight shape of layer " + std::to_string(l) + " does not match topology");
    }
  }
  if (input_norm_.mean.size() != layer_sizes_.front() || input_norm_.stddev.size() != layer_sizes_.front() ||
      output_norm_.mean.size() != layer_sizes_.back() || output_norm_.stddev.size() != layer_sizes_.back()) {
    throw ParameterError("normalization size does not match topology");
  }
  if ((input_norm_.stddev.array() <= 0.0).any() || (output_norm_.stddev.array() <= 0.0).any()) {
    throw ParameterError("normalization standard deviations must be positive");
  }
}

Eigen::MatrixXd MlpModel::forward_normalized(const Eigen::MatrixXd & z_inputs) const
{
  Eigen::MatrixXd a = z_inputs;
  for (const auto & layer : layers_) {
    Eigen::MatrixXd z = layer.weights * a;
    z.colwise() += layer.bias;
    a = apply_activation(layer.activation, z);
  }
  return a;
}

Eigen::VectorXd MlpModel::forward(const Eigen::VectorXd & input) const
{
  if (static_cast<std::size_t>(input.size()) != input_size()) {
    throw ParameterError(
      "input has " + std::to_string(input.size()) + " components, model expects " + std::to_string(input_size()));
  }
  const Eigen::VectorXd z = (input - input_norm_.mean).cwiseQuotient(input_norm_.stddev);
  Eigen::VectorXd a = z;
  for (const auto & layer : layers_) {
    a = apply_activation(layer.activation, layer.weights * a + layer.bias);
  }
  return a.cwiseProduct(output_norm_.stddev) + output_norm_.mean;
}

bool MlpModel::operator==(const MlpModel & other) const
{
  if (layer_sizes_ != other.layer_sizes_ || layers_.size() != other.layers_.size()) {
    return false;
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].activation != other.layers_[l].activation || layers_[l].weights != other.layers_[l].weights ||
        layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return input_norm_.mean == other.input_norm_.mean && input_norm_.stddev == other.input_norm_.stddev &&
         output_norm_.mean == other.output_norm_.mean && output_norm_.stddev == other.output_norm_.stddev;
}

Gradients gradient_normalized(const MlpModel & model, const Eigen::MatrixXd & z_inputs, const Eigen::MatrixXd & z_targets)
{
  const auto & layers = model.layers();
  if (z_inputs.cols() == 0) {
    throw ParameterError("gradient of an empty batch");
  }
  if (z_inputs.rows() != model.layer_sizes().front() || z_targets.rows() != model.layer_sizes().back() ||
      z_inputs.cols() != z_targets.cols()) {
    throw ParameterError("batch dimensions do not match the model");
  }
  std::vector<Eigen::MatrixXd> pre(layers.size());
  std::vector<Eigen::MatrixXd> act(layers.size() + 1);
  act[0] = z_inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    pre[l] = layers[l].weights * act[l];
    pre[l].colwise() += layers[l].bias;
    act[l + 1] = apply_activation(layers[l].activation, pre[l]);
  }
  const double scale = 1.0 / static_cast<double>(z_targets.size());
  Eigen::MatrixXd residual = act.back() - z_targets;

  Gradients g;
  g.loss = residual.squaredNorm() * scale;
  g.weights.resize(layers.size());
  g.bias.resize(layers.size());
  Eigen::MatrixXd delta =
    ((2.0 * scale) * residual.array() * activation_slope(layers.back().activation, pre.back(), act.back())).matrix();
  for (std::size_t l = layers.size(); l-- > 0;) {
    g.weights[l] = delta * act[l].transpose();
    g.bias[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = ((layers[l].weights.transpose() * delta).array() *
               activation_slope(layers[l - 1].activation, pre[l - 1], act[l]))
                .matrix();
    }
  }
  return g;
}

double mse_normalized(const MlpModel & model, const Eigen::MatrixXd & z_inputs, const Eigen::MatrixXd & z_targets)
{
  if (z_inputs.cols() == 0) {
    return 0.0;
  }
  return (model.forward_normalized(z_inputs) - z_targets).squaredNorm() / static_cast<double>(z_targets.size());
}

Gradients gradient(const MlpModel & model, std::span<const TrainingPair> batch)
{
  if (batch.empty()) {
    throw ParameterError("gradient of an empty batch");
  }
  const auto n_in = static_cast<Eigen::Index>(model.input_size());
  const auto n_out = static_cast<Eigen::Index>(model.output_size());
  Eigen::MatrixXd x(n_in, static_cast<Eigen::Index>(batch.size()));
  Eigen::MatrixXd y(n_out, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].input.size() != n_in || batch[i].target.size() != n_out) {
      throw ParameterError("training pair " + std::to_string(i) + " does not match the model dimensions");
    }
    x.col(static_cast<Eigen::Index>(i)) = batch[i].input;
    y.col(static_cast<Eigen::Index>(i)) = batch[i].target;
  }
  return gradient_normalized(model, model.input_norm().normalize(x), model.output_norm().normalize(y));
}

void RpropConfig::validate() const
{
  if (!(eta_minus > 0.0 && eta_minus < 1.0 && eta_plus > 1.0)) {
    throw ParameterError("RPROP requires 0 < eta_minus < 1 < eta_plus");
  }
  if (!(delta_min > 0.0 && delta_min <= delta0 && delta0 <= delta_max)) {
    throw ParameterError("RPROP requires 0 < delta_min <= delta0 <= delta_max");
  }
  if (max_epochs < 0) {
    throw ParameterError("max_epochs must be non-negative");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ParameterError("validation_fraction must lie in [0, 1)");
  }
}

TrainResult train_rprop(
  const std::vector<int> & layer_sizes, Activation hidden, const Dataset & data, const RpropConfig & config)
{
  config.validate();
  if (data.size() == 0) {
    throw std::invalid_argument("no training patterns");
  }
  if (data.targets.cols() != data.size() || (!data.group.empty() && data.group.size() != static_cast<std::size_t>(data.size()))) {
    throw std::invalid_argument("inconsistent dataset dimensions");
  }

  // Split by group id so correlated patterns of one scene stay together.
  std::vector<int> groups = data.group;
  if (groups.empty()) {
    groups.resize(static_cast<std::size_t>(data.size()));
    std::iota(groups.begin(), groups.end(), 0);
  }
  std::vector<int> unique_groups = groups;
  std::sort(unique_groups.begin(), unique_groups.end());
  unique_groups.erase(std::unique(unique_groups.begin(), unique_groups.end()), unique_groups.end());
  std::mt19937_64 rng(config.seed);
  std::shuffle(unique_groups.begin(), unique_groups.end(), rng);
  auto n_val = static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(unique_groups.size())));
  if (config.validation_fraction > 0.0 && unique_groups.size() >= 2) {
    n_val = std::clamp<std::size_t>(n_val, 1, unique_groups.size() - 1);
  } else {
    n_val = 0;
  }
  std::vector<char> is_val_group;
  const int max_group = *std::max_element(groups.begin(), groups.end());
  const int min_group = *std::min_element(groups.begin(), groups.end());
  is_val_group.assign(static_cast<std::size_t>(max_group - min_group + 1), 0);
  for (std::size_t i = 0; i < n_val; ++i) {
    is_val_group[static_cast<std::size_t>(unique_groups[i] - min_group)] = 1;
  }
  std::vector<Eigen::Index> train_cols, val_cols;
  for (Eigen::Index c = 0; c < data.size(); ++c) {
    (is_val_group[static_cast<std::size_t>(groups[static_cast<std::size_t>(c)] - min_group)] ? val_cols : train_cols)
      .push_back(c);
  }
  if (train_cols.empty()) {
    throw std::invalid_argument("validation split left no training patterns");
  }

  MlpModel model(layer_sizes, hidden);
  if (static_cast<Eigen::Index>(model.input_size()) != data.inputs.rows() ||
      static_cast<Eigen::Index>(model.output_size()) != data.targets.rows()) {
    throw std::invalid_argument("topology does not match pattern dimensions");
  }
  const Eigen::MatrixXd x_train_raw = select_columns(data.inputs, train_cols);
  const Eigen::MatrixXd y_train_raw = select_columns(data.targets, train_cols);
  model.input_norm() = Normalizer::fit(x_train_raw);
  model.output_norm() = Normalizer::fit(y_train_raw);
  model.initialize(config.seed);

  const Eigen::MatrixXd x_train = model.input_norm().normalize(x_train_raw);
  const Eigen::MatrixXd y_train = model.output_norm().normalize(y_train_raw);
  const bool has_val = !val_cols.empty();
  const Eigen::MatrixXd x_val = has_val ? model.input_norm().normalize(select_columns(data.inputs, val_cols)) : Eigen::MatrixXd();
  const Eigen::MatrixXd y_val = has_val ? model.output_norm().normalize(select_columns(data.targets, val_cols)) : Eigen::MatrixXd();

  const std::size_t n_layers = model.layers().size();
  std::vector<Eigen::ArrayXXd> step_w(n_layers), prev_w(n_layers);
  std::vector<Eigen::ArrayXd> step_b(n_layers), prev_b(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto & layer = model.layers()[l];
    step_w[l] = Eigen::ArrayXXd::Constant(layer.weights.rows(), layer.weights.cols(), config.delta0);
    prev_w[l] = Eigen::ArrayXXd::Zero(layer.weights.rows(), layer.weights.cols());
    step_b[l] = Eigen::ArrayXd::Constant(layer.bias.size(), config.delta0);
    prev_b[l] = Eigen::ArrayXd::Zero(layer.bias.size());
  }

  TrainResult result;
  result.best_validation_mse = std::numeric_limits<double>::infinity();
  result.min_step = config.delta0;
  result.max_step = config.delta0;

  auto rprop_update = [&](auto & param, auto & step, auto & prev, auto grad) {
    const auto prod = grad * prev;
    step = (prod > 0.0).select((step * config.eta_plus).min(config.delta_max),
                               (prod < 0.0).select((step * config.eta_minus).max(config.delta_min), step));
    grad = (prod < 0.0).select(0.0, grad);
    param.array() -= grad.sign() * step;
    prev = grad;
    result.min_step = std::min(result.min_step, step.minCoeff());
    result.max_step = std::max(result.max_step, step.maxCoeff());
  };

  for (int epoch = 0; epoch <= config.max_epochs; ++epoch) {
    Gradients g = gradient_normalized(model, x_train, y_train);
    const double val_mse = has_val ? mse_normalized(model, x_val, y_val) : g.loss;
    if (!std::isfinite(g.loss) || !std::isfinite(val_mse)) {
      throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch));
    }
    result.curve.push_back({epoch, g.loss, val_mse});
    if (val_mse < result.best_validation_mse) {
      result.best_validation_mse = val_mse;
      result.best_epoch = epoch;
      result.model = model;
    }
    if (epoch == config.max_epochs) {
      break;
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      auto & layer = model.layers()[l];
      rprop_update(layer.weights, step_w[l], prev_w[l], Eigen::ArrayXXd(g.weights[l].array()));
      rprop_update(layer.bias, step_b[l], prev_b[l], Eigen::ArrayXd(g.bias[l].array()));
    }
  }
  return result;
}

}  // namespace vru
