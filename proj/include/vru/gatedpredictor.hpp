#pragma once

#include "vru/stateclassifier.hpp"
#include "vru/trajpredictor.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>

namespace vru
{

/// Gate weights: clamped posterior rescaled to sum 1. An all-zero posterior gives
/// uniform weights and sets `fell_back`.
std::array<double, kNumStates> gate_weights(const StatePosterior & posterior, bool * fell_back = nullptr);

/// Convex combination of the per-state coefficient vectors with the gate weights.
Eigen::VectorXd fuse_coefficients(
  const std::array<double, kNumStates> & weights, const std::array<Eigen::VectorXd, kNumStates> & coefficients);

/// Fusion followed by reconstruction and back-transformation.
PredictedTrajectory gated_predict(
  const StatePosterior & posterior, const std::array<Eigen::VectorXd, kNumStates> & coefficients,
  const PolyConfig & output, const EgoFrame & frame, double dt);

struct SpecificPredictors
{
  std::array<TrajectoryPredictor, kNumStates> by_state;
  std::array<std::size_t, kNumStates> patterns{};
  std::array<std::size_t, kNumStates> scenes{};
};

/// One predictor per scene class, all with the same input/output layouts.
/// Throws std::runtime_error when a class has no scenes or no patterns.
SpecificPredictors train_specific_predictors(std::span<const Scene> scenes, const PredictorTrainConfig & config);

/// Logistic longitudinal speed profile fitted to the recent past, used as a physical
/// stand-in for the Starting and Stopping experts.
struct PhysModParams
{
  double fit_window = 1.0;  // s of past positions used for the fit
  double tau_min = 0.1;
  double tau_max = 1.0;
  double t0_before = 3.0;  // earliest midpoint relative to now, s
  double t0_after = 0.5;   // latest midpoint relative to now, s
  double v_max = 3.0;      // upper bound of the fitted steady-state speed, m/s
  double coarse_step = 0.1;
  double fine_step = 0.025;

  void validate() const;
};

struct LogisticFit
{
  double p0 = 0.0;    // displacement offset, m
  double v_ss = 0.0;  // steady-state speed, m/s
  double tau = 0.0;   // s
  double t0 = 0.0;    // s relative to now
  double rss = 0.0;
};

/// Longitudinal displacement of the logistic profile (up to p0) at time t relative to now.
double logistic_displacement(MotionState state, const LogisticFit & fit, double t);

/// Least-squares fit of the integrated profile to (times, lon positions). nullopt on failure.
std::optional<LogisticFit> fit_logistic_profile(
  MotionState state, std::span<const double> times, std::span<const double> lon, const PhysModParams & params);

/// Ego-frame output coefficients of the physical model. Falls back to a constant-velocity
/// extrapolation at the current smoothed speed when the fit fails.
Eigen::VectorXd physical_model_coefficients(
  MotionState state, const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
  const PolyConfig & output, const PhysModParams & params, bool * fell_back = nullptr);

PredictedTrajectory physical_model_predict(
  MotionState state, const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
  const PolyConfig & output, const PhysModParams & params);

enum class TransitionExperts { PolyMlp, PhysMod };

std::string_view to_string(TransitionExperts t);

/// Classifier + four experts. With PhysMod the Starting and Stopping experts are the
/// physical models; Waiting and Moving stay learned.
struct TwoStagePipeline
{
  StateClassifier classifier;
  SpecificPredictors experts;
  TransitionExperts transition = TransitionExperts::PolyMlp;
  PhysModParams physmod{};
  double skip_weight = 0.0;  // experts with a gate weight <= this are not evaluated

  /// Expert outputs for one cycle. Entries for skipped experts are zero vectors.
  std::array<Eigen::VectorXd, kNumStates> expert_coefficients(
    const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
    const std::array<double, kNumStates> & weights) const;

  /// `kinematics` must come from ego_velocity with the experts' EgoOptions.
  /// Uses the classifier unless `posterior` is given (ground-truth or forced gating).
  std::optional<PredictedTrajectory> predict(
    const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
    const std::optional<StatePosterior> & posterior = std::nullopt) const;
};

/// One-hot posterior for a known state.
StatePosterior one_hot(MotionState state);

/// JSON manifest naming the classifier and the four expert model files.
struct PipelineManifest
{
  std::filesystem::path classifier;
  std::array<std::filesystem::path, kNumStates> predictors;
  TransitionExperts transition = TransitionExperts::PolyMlp;
};

void save_manifest(const std::filesystem::path & path, const PipelineManifest & manifest);
PipelineManifest load_manifest(const std::filesystem::path & path);

/// Loads every referenced model; relative paths resolve against the manifest directory.
/// Throws FingerprintMismatch when the experts disagree on their layouts.
TwoStagePipeline load_pipeline(const std::filesystem::path & manifest_path);

}  // namespace vru
