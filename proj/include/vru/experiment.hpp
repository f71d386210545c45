#pragma once

#include "vru/baselines.hpp"
#include "vru/evalharness.hpp"
#include "vru/gatedpredictor.hpp"
#include "vru/stateclassifier.hpp"
#include "vru/trajpredictor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace vru
{

struct CorpusSplit
{
  std::vector<Scene> train;
  std::vector<Scene> test;
};

/// Scene-level split, stratified by scene class and shuffled with `seed`.
CorpusSplit split_corpus(std::span<const Scene> scenes, double train_fraction, std::uint64_t seed);

/// Steps with a complete input window and a complete 2.5 s horizon, every `stride`-th.
std::vector<std::size_t> evaluation_steps(const Scene & scene, const PolyConfig & input, std::size_t stride = 1);

/// Produces one prediction per requested step of a scene.
using SceneRunner = std::function<std::vector<PredictedTrajectory>(
  std::size_t scene_index, const Scene & scene, std::span<const std::size_t> steps)>;

/// ASAEE per scene class and overall. Scenes are processed in parallel and reduced in scene order.
ClassAsaee evaluate_asaee(
  std::span<const Scene> scenes, const PolyConfig & input, std::size_t stride, const SceneRunner & runner);

SceneRunner polymlp_runner(const TrajectoryPredictor & predictor);
SceneRunner cv_kf_runner(const CvKfParams & params);
SceneRunner kinematic_runner(const EgoOptions & ego);

enum class GateSource { Classifier, GroundTruth, ForcedStop };

/// Two-stage prediction. GroundTruth gates one-hot on the scene class. ForcedStop replaces the
/// classifier posterior by a one-hot Stopping gate on a pseudo-random `forced_rate` share of the
/// frames of Moving scenes (fixed by `seed`, scene id and step).
SceneRunner two_stage_runner(
  const TwoStagePipeline & pipeline, GateSource gate, double forced_rate = 0.0, std::uint64_t seed = 0);

/// True iff the frame is selected for a forced gate.
bool forced_frame(const std::string & scene_id, std::size_t step, double rate, std::uint64_t seed);

struct KfTuning
{
  double best_q = 0.0;
  std::vector<std::pair<double, double>> table;  // (q, overall ASAEE)
};

KfTuning tune_cv_kf(
  std::span<const Scene> scenes, const CvKfParams & base, std::span<const double> q_grid, const PolyConfig & input,
  std::size_t stride);

/// Classifier posteriors of every step with a complete input window.
struct SceneScores
{
  std::vector<std::size_t> steps;
  std::vector<StatePosterior> posterior;
};

std::vector<SceneScores> classify_scenes(const StateClassifier & classifier, std::span<const Scene> scenes);

/// Start-binarization score of one posterior: P_Sum of the normalized posterior.
double start_score(const StatePosterior & posterior);
double stop_score(const StatePosterior & posterior);

/// Frame scores and binary ground truth of all scored frames.
void collect_binary(
  std::span<const SceneScores> scores, std::span<const Scene> scenes, ClassifierMode split, std::vector<double> & score,
  std::vector<char> & truth);

struct ClassificationEval
{
  ConfusionMatrix confusion;
  FrameMetrics start_binary;
  double start_threshold = 0.5;
};

/// Threshold selected on `train`, metrics on `test`.
ClassificationEval evaluate_classifier(
  const StateClassifier & classifier, std::span<const Scene> train, std::span<const Scene> test, double threshold_step);

/// Starting scenes: detection and false-positive reference at heel-off.
std::vector<SweepScene> start_sweep_scenes(std::span<const SceneScores> scores, std::span<const Scene> scenes);
/// Stopping scenes: detection time against heel-down; a positive before the start of the
/// stopping phase is a false positive.
std::vector<SweepScene> stop_sweep_scenes(std::span<const SceneScores> scores, std::span<const Scene> scenes);

struct ImmClassification
{
  double threshold = 0.0;
  FrameMetrics train;
  FrameMetrics test;
};

/// P_CV threshold selected on `train` by accuracy, applied to `test`, start split ground truth.
ImmClassification evaluate_imm(
  std::span<const Scene> train, std::span<const Scene> test, const ImmParams & params, const PolyConfig & input,
  double threshold_step);

/// Runs fn(i) for i in [0, n) on the available hardware threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> & fn);

}  // namespace vru
