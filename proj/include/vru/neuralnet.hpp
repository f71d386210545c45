#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vru
{

enum class Activation { Sigmoid, Identity, Gaussian };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

/// Per-component z-transformation with training statistics.
struct Normalizer
{
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // zero-variance components are stored as 1

  static Normalizer identity(Eigen::Index size);
  /// Columns of `data` are samples.
  static Normalizer fit(const Eigen::MatrixXd & data);

  Eigen::MatrixXd normalize(const Eigen::MatrixXd & x) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd & z) const;
};

struct DenseLayer
{
  Eigen::MatrixXd weights;  // outputs x inputs
  Eigen::VectorXd bias;
  Activation activation = Activation::Sigmoid;
};

class MlpModel
{
public:
  MlpModel() = default;

  /// Hidden layers use `hidden`, the output layer is always identity. Weights start at zero.
  MlpModel(std::vector<int> layer_sizes, Activation hidden);

  const std::vector<int> & layer_sizes() const { return layer_sizes_; }
  std::size_t input_size() const { return static_cast<std::size_t>(layer_sizes_.front()); }
  std::size_t output_size() const { return static_cast<std::size_t>(layer_sizes_.back()); }

  std::vector<DenseLayer> & layers() { return layers_; }
  const std::vector<DenseLayer> & layers() const { return layers_; }

  Normalizer & input_norm() { return input_norm_; }
  const Normalizer & input_norm() const { return input_norm_; }
  Normalizer & output_norm() { return output_norm_; }
  const Normalizer & output_norm() const { return output_norm_; }

  std::size_t parameter_count() const;

  /// Uniform in +-1/sqrt(fan_in), biases included.
  void initialize(std::uint64_t seed);

  /// Raw features in, de-normalized outputs out. Throws ParameterError on size mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd & input) const;

  /// Batch forward in z-space: columns are samples, no (de)normalization.
  Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd & z_inputs) const;

  /// Throws ParameterError if shapes disagree with layer_sizes.
  void validate() const;

  bool operator==(const MlpModel & other) const;

private:
  std::vector<int> layer_sizes_;
  std::vector<DenseLayer> layers_;
  Normalizer input_norm_;
  Normalizer output_norm_;
};

struct Gradients
{
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
  double loss = 0.0;
};

/// Exact backpropagation of the mean squared error over all z-normalized output
/// elements, L = 1/(N*M) * sum (yhat - y)^2. Columns of the matrices are samples.
Gradients gradient_normalized(const MlpModel & model, const Eigen::MatrixXd & z_inputs, const Eigen::MatrixXd & z_targets);

struct TrainingPair
{
  Eigen::VectorXd input;
  Eigen::VectorXd target;
};

/// Same as gradient_normalized for raw (input, target) pairs, normalized with the model's statistics.
Gradients gradient(const MlpModel & model, std::span<const TrainingPair> batch);

/// Loss only.
double mse_normalized(const MlpModel & model, const Eigen::MatrixXd & z_inputs, const Eigen::MatrixXd & z_targets);

struct RpropConfig
{
  double eta_plus = 1.2;
  double eta_minus = 0.5;
  double delta0 = 0.1;
  double delta_min = 1e-6;
  double delta_max = 50.0;
  int max_epochs = 500;
  std::uint64_t seed = 1;
  double validation_fraction = 0.3;

  void validate() const;
};

/// Patterns as columns. `group` (optional, one id per column) keeps a scene's
/// patterns on the same side of the train/validation split.
struct Dataset
{
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<int> group;

  Eigen::Index size() const { return inputs.cols(); }
};

struct EpochRecord
{
  int epoch = 0;
  double train_mse = 0.0;
  double validation_mse = 0.0;
};

struct TrainResult
{
  MlpModel model;
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  double best_validation_mse = 0.0;
  double min_step = 0.0;  // smallest / largest per-weight step seen, for diagnostics
  double max_step = 0.0;
};

/// Batch RPROP training. Returns the snapshot with the lowest validation MSE.
/// Throws std::invalid_argument on empty data and std::runtime_error on a non-finite loss.
TrainResult train_rprop(
  const std::vector<int> & layer_sizes, Activation hidden, const Dataset & data, const RpropConfig & config);

}  // namespace vru
