#pragma once

#include "vru/neuralnet.hpp"
#include "vru/polyfeat.hpp"
#include "vru/trajdata.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace vru
{

enum class ClassifierMode { FourClass, TwoClassStart, TwoClassStop };

std::string_view to_string(ClassifierMode mode);
ClassifierMode parse_classifier_mode(std::string_view text);

/// Pseudo class posterior over (Waiting, Starting, Moving, Stopping).
struct StatePosterior
{
  std::array<double, kNumStates> p{};
  bool normalized = false;

  double operator[](MotionState s) const { return p[index_of(s)]; }

  MotionState argmax() const;

  /// Rescaled to sum 1; an all-zero posterior becomes uniform.
  StatePosterior normalized_copy() const;

  /// P(Start) + P(Move) + P(Stop)
  double p_sum_start() const;
  /// P(Stop) + P(Wait)
  double p_sum_stop() const;
};

/// Raw MLP outputs -> clamped posterior. The single output P of a two-class model
/// becomes (1-P, 0, P, 0) for the start split and (0, 0, 1-P, P) for the stop split.
StatePosterior posterior_from_outputs(ClassifierMode mode, const Eigen::VectorXd & outputs);

/// Positive (moving or beyond) iff P_Sum >= threshold.
bool binarize_start(const StatePosterior & posterior, double threshold);
/// Positive (stopping or stopped) iff P(Stop) + P(Wait) >= threshold.
bool binarize_stop(const StatePosterior & posterior, double threshold);

/// Grid search over [0, 1] maximizing frame accuracy of (score >= threshold) against truth.
/// Ties go to the larger threshold. Throws std::invalid_argument on empty input.
double select_threshold(std::span<const double> scores, std::span<const char> truth, double step = 0.001);

/// Frame accuracy of (score >= threshold).
double threshold_accuracy(std::span<const double> scores, std::span<const char> truth, double threshold);

/// Binary ground truth for the two-class splits: for start, positive from the transition
/// start (heel-off) on; for stop, positive from the start of the stopping phase on.
/// Scenes without events fall back to their per-step labels.
bool binary_truth(const Scene & scene, std::size_t index, ClassifierMode mode);

struct ClassifierTrainConfig
{
  PolyConfig input = PolyConfig::default_input();
  EgoOptions ego{};
  std::vector<int> hidden{20};
  Activation activation = Activation::Sigmoid;
  RpropConfig rprop{};
};

struct StateClassifier
{
  ClassifierMode mode = ClassifierMode::FourClass;
  PolyConfig input_config = PolyConfig::default_input();
  EgoOptions ego{};
  MlpModel mlp;

  /// Raw outputs clamped to [0, 1]; nullopt when the input window is incomplete.
  std::optional<StatePosterior> classify(const VelocitySeries & velocity, std::size_t now_index, double dt) const;
};

std::optional<StatePosterior> classify(
  const StateClassifier & classifier, const VelocitySeries & velocity, std::size_t now_index, double dt);

/// One pattern per step with a complete input window.
Dataset build_classification_patterns(
  std::span<const Scene> scenes, const PolyConfig & input, const EgoOptions & ego, ClassifierMode mode);

struct ClassifierTraining
{
  StateClassifier classifier;
  TrainResult training;
  std::array<std::size_t, kNumStates> class_counts{};  // two-class modes: [negative, positive, 0, 0]
};

/// Throws std::runtime_error when a class is absent from the patterns.
ClassifierTraining train_classifier(
  std::span<const Scene> scenes, const ClassifierTrainConfig & config, ClassifierMode mode);

void save_classifier(const std::filesystem::path & path, const StateClassifier & classifier);
StateClassifier load_classifier(const std::filesystem::path & path);

}  // namespace vru
