#pragma once

#include "vru/trajdata.hpp"
#include "vru/trajpredictor.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vru
{

/// Running sums of Euclidean errors per horizon step.
class AsaeeAccumulator
{
public:
  explicit AsaeeAccumulator(std::vector<double> t_pred = horizon_grid());

  /// Adds one prediction made at `now`; the ground truth at now + t_pred[i] is the
  /// trajectory sample nearest to that time. Returns false (and adds nothing) when the
  /// horizon leaves the scene.
  bool add(const PredictedTrajectory & prediction, const Trajectory & truth, std::size_t now);
  /// Adds explicit per-step errors (meters).
  void add_errors(std::span<const double> errors);
  void merge(const AsaeeAccumulator & other);

  std::size_t count() const { return count_; }
  const std::vector<double> & t_pred() const { return t_pred_; }
  /// Mean Euclidean error at horizon step i, meters.
  double aee(std::size_t i) const;
  /// cm/s. Throws std::runtime_error when nothing was added.
  double value() const;

private:
  std::vector<double> t_pred_;
  std::vector<double> sum_;
  std::size_t count_ = 0;
};

/// ASAEE = 1/N sum_i AEE(t_i) / t_i, in cm/s when AEE is in meters.
double asaee_from_aee(std::span<const double> aee, std::span<const double> t_pred);

struct PredictionRecord
{
  std::size_t scene = 0;
  std::size_t now = 0;
  PredictedTrajectory trajectory;
};

/// Throws std::runtime_error when no record has complete ground truth.
double asaee(std::span<const PredictionRecord> predictions, std::span<const Scene> scenes);

struct FrameMetrics
{
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;  // 0 when undefined
};

FrameMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

/// Binary frame metrics; entries are 0/1. Throws std::invalid_argument on empty or unequal input.
FrameMetrics frame_metrics(std::span<const char> predicted, std::span<const char> truth);
FrameMetrics frame_metrics(
  std::span<const MotionState> predicted, std::span<const MotionState> truth, MotionState positive);

struct ConfusionMatrix
{
  std::array<std::array<std::size_t, kNumStates>, kNumStates> counts{};  // [truth][predicted]

  std::size_t row_total(std::size_t row) const;
  bool row_defined(std::size_t row) const { return row_total(row) > 0; }
  /// Percent of the row's frames; NaN for an empty row.
  double percent(std::size_t row, std::size_t col) const;
  double accuracy() const;
  std::size_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const MotionState> predicted, std::span<const MotionState> truth);

/// Per-scene classifier scores for the early-detection sweep.
struct SweepScene
{
  std::vector<double> t;
  std::vector<double> score;
  double event_time = 0.0;     // detection time reference (heel-off, heel-down)
  double fp_boundary = 0.0;    // a positive frame before this time makes the scene a false positive
};

struct SweepRow
{
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> mean_detection_time;  // s, over TP scenes
};

/// Throws std::invalid_argument on an empty threshold grid.
std::vector<SweepRow> early_detection_sweep(std::span<const SweepScene> scenes, std::span<const double> thresholds);

/// 0, step, 2*step, ..., 1.
std::vector<double> threshold_grid(double step);

struct LatencyStats
{
  std::size_t samples = 0;
  double median_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
};

/// Times `repetitions` calls after `warmup` untimed ones. Throws std::invalid_argument for 0 repetitions.
LatencyStats time_calls(const std::function<void()> & call, std::size_t repetitions, std::size_t warmup = 10);

/// Times `cycle(i)` for i in [0, cycles) once each.
LatencyStats time_cycles(const std::function<void(std::size_t)> & cycle, std::size_t cycles);

struct ClassAsaee
{
  std::array<std::optional<double>, kNumStates> by_class;
  std::optional<double> overall;
  std::array<std::size_t, kNumStates> predictions{};
};

struct EvalReport
{
  std::string method;
  std::optional<ClassAsaee> asaee;
  std::optional<ConfusionMatrix> confusion;
  std::optional<FrameMetrics> start_binary;  // P_Sum start binarization
  std::optional<double> start_threshold;
  std::vector<SweepRow> sweep;
  std::optional<LatencyStats> latency;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// CSV with header threshold,tp,fp,fn,precision,recall,f1,mean_detection_time.
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace vru
