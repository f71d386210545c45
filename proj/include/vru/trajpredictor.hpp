#pragma once

#include "vru/neuralnet.hpp"
#include "vru/polyfeat.hpp"
#include "vru/trajdata.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace vru
{

inline constexpr std::size_t kHorizonSteps = 125;
inline constexpr double kHorizonStep = 0.02;  // s

/// 0.02, 0.04, ..., 2.50 s
std::vector<double> horizon_grid();

struct PredictedTrajectory
{
  std::vector<double> t_pred;              // s after now
  std::vector<Eigen::Vector2d> positions;  // global frame
  EgoFrame frame;                          // frame used for the back-transformation
};

/// Ego-frame offsets -> global positions using `frame`.
PredictedTrajectory to_global_trajectory(
  const Eigen::MatrixXd & ego_positions, std::span<const double> t_pred, const EgoFrame & frame);

/// Output coefficients -> reconstructed ego positions at the grid times -> global frame.
PredictedTrajectory trajectory_from_coefficients(
  const Eigen::VectorXd & coefficients, const PolyConfig & output, const EgoFrame & frame, double dt,
  std::span<const double> t_pred);

/// Straight-line extrapolation at the current smoothed ego velocity.
PredictedTrajectory kinematic_baseline_predict(
  double v_lon, double v_lat, const EgoFrame & frame, std::span<const double> t_pred);

/// Future positions relative to the ego frame at `now`, fitted on the output windows.
/// nullopt when the output windows leave the scene.
std::optional<Eigen::VectorXd> output_targets(
  const Trajectory & trajectory, const EgoFrame & frame_now, const PolyConfig & output, std::size_t now,
  double dt);

struct PredictorTrainConfig
{
  PolyConfig input = PolyConfig::default_input();
  PolyConfig output = PolyConfig::default_output();
  EgoOptions ego{};
  std::vector<int> hidden{40};
  Activation activation = Activation::Sigmoid;
  RpropConfig rprop{};
};

class TrajectoryPredictor
{
public:
  PolyConfig input_config = PolyConfig::default_input();
  PolyConfig output_config = PolyConfig::default_output();
  EgoOptions ego{};
  MlpModel mlp;

  /// De-normalized output coefficients; nullopt when the input window is incomplete.
  std::optional<Eigen::VectorXd> predict_coefficients(
    const VelocitySeries & velocity, std::size_t now_index, double dt) const;

  std::optional<PredictedTrajectory> predict(
    const VelocitySeries & velocity, const EgoFrame & frame_now, std::size_t now_index, double dt) const;
};

/// Patterns need a complete input window and a complete output window.
Dataset build_prediction_patterns(
  std::span<const Scene> scenes, const PolyConfig & input, const PolyConfig & output, const EgoOptions & ego);

struct PredictorTraining
{
  TrajectoryPredictor predictor;
  TrainResult training;
  std::size_t patterns = 0;
};

/// Throws std::runtime_error when no pattern can be generated.
PredictorTraining train_predictor(std::span<const Scene> scenes, const PredictorTrainConfig & config);

void save_predictor(const std::filesystem::path & path, const TrajectoryPredictor & predictor);
TrajectoryPredictor load_predictor(const std::filesystem::path & path);

}  // namespace vru
