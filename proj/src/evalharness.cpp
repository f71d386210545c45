#include "vru/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vru
{

AsaeeAccumulator::AsaeeAccumulator(std::vector<double> t_pred) : t_pred_(std::move(t_pred)), sum_(t_pred_.size(), 0.0)
{
  for (double t : t_pred_) {
    if (!(t > 0.0)) {
      throw ParameterError("horizon times must be positive");
    }
  }
}

bool AsaeeAccumulator::add(const PredictedTrajectory & prediction, const Trajectory & truth, std::size_t now)
{
  if (prediction.positions.size() != t_pred_.size() || truth.size() < 2) {
    throw ParameterError("prediction does not match the accumulator's horizon grid");
  }
  const double dt = (truth.t.back() - truth.t.front()) / static_cast<double>(truth.size() - 1);
  std::vector<std::size_t> idx(t_pred_.size());
  for (std::size_t i = 0; i < t_pred_.size(); ++i) {
    idx[i] = now + static_cast<std::size_t>(std::lround(t_pred_[i] / dt));
    if (idx[i] >= truth.size()) {
      return false;
    }
  }
  for (std::size_t i = 0; i < t_pred_.size(); ++i) {
    sum_[i] += (prediction.positions[i] - truth.position[idx[i]]).norm();
  }
  ++count_;
  return true;
}

void AsaeeAccumulator::add_errors(std::span<const double> errors)
{
  if (errors.size() != t_pred_.size()) {
    throw ParameterError("error vector does not match the horizon grid");
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    sum_[i] += errors[i];
  }
  ++count_;
}

void AsaeeAccumulator::merge(const AsaeeAccumulator & other)
{
  if (other.t_pred_ != t_pred_) {
    throw ParameterError("cannot merge accumulators with different horizon grids");
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
  }
  count_ += other.count_;
}

double AsaeeAccumulator::aee(std::size_t i) const
{
  if (count_ == 0) {
    throw std::runtime_error("no complete prediction/ground-truth pairs");
  }
  return sum_.at(i) / static_cast<double>(count_);
}

double AsaeeAccumulator::value() const
{
  std::vector<double> a(t_pred_.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = aee(i);
  }
  return asaee_from_aee(a, t_pred_);
}

double asaee_from_aee(std::span<const double> aee, std::span<const double> t_pred)
{
  if (aee.empty() || aee.size() != t_pred.size()) {
    throw ParameterError("AEE and horizon grid must be non-empty and of equal length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < aee.size(); ++i) {
    sum += aee[i] / t_pred[i];
  }
  return 100.0 * sum / static_cast<double>(aee.size());
}

double asaee(std::span<const PredictionRecord> predictions, std::span<const Scene> scenes)
{
  if (predictions.empty()) {
    throw std::runtime_error("no predictions to evaluate");
  }
  AsaeeAccumulator acc(predictions.front().trajectory.t_pred);
  for (const auto & p : predictions) {
    acc.add(p.trajectory, scenes[p.scene].trajectory, p.now);
  }
  return acc.value();
}

FrameMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn)
{
  FrameMetrics m{tp, fp, fn, tn};
  const auto total = static_cast<double>(tp + fp + fn + tn);
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

FrameMetrics frame_metrics(std::span<const char> predicted, std::span<const char> truth)
{
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw std::invalid_argument("frame metrics need non-empty label sequences of equal length");
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
    tn += !p && !t;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

FrameMetrics frame_metrics(
  std::span<const MotionState> predicted, std::span<const MotionState> truth, MotionState positive)
{
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("frame metrics need label sequences of equal length");
  }
  std::vector<char> p(predicted.size());
  std::vector<char> t(truth.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = predicted[i] == positive;
    t[i] = truth[i] == positive;
  }
  return frame_metrics(p, t);
}

std::size_t ConfusionMatrix::row_total(std::size_t row) const
{
  std::size_t n = 0;
  for (auto c : counts.at(row)) {
    n += c;
  }
  return n;
}

double ConfusionMatrix::percent(std::size_t row, std::size_t col) const
{
  const auto n = row_total(row);
  if (n == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return 100.0 * static_cast<double>(counts[row].at(col)) / static_cast<double>(n);
}

std::size_t ConfusionMatrix::total() const
{
  std::size_t n = 0;
  for (std::size_t r = 0; r < kNumStates; ++r) {
    n += row_total(r);
  }
  return n;
}

double ConfusionMatrix::accuracy() const
{
  const auto n = total();
  if (n == 0) {
    return 0.0;
  }
  std::size_t diag = 0;
  for (std::size_t r = 0; r < kNumStates; ++r) {
    diag += counts[r][r];
  }
  return static_cast<double>(diag) / static_cast<double>(n);
}

ConfusionMatrix confusion_matrix(std::span<const MotionState> predicted, std::span<const MotionState> truth)
{
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw std::invalid_argument("confusion matrix needs non-empty label sequences of equal length");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++m.counts[index_of(truth[i])][index_of(predicted[i])];
  }
  return m;
}

std::vector<SweepRow> early_detection_sweep(std::span<const SweepScene> scenes, std::span<const double> thresholds)
{
  if (thresholds.empty()) {
    throw std::invalid_argument("early-detection sweep needs a threshold grid");
  }
  std::vector<SweepRow> rows;
  rows.reserve(thresholds.size());
  for (double thr : thresholds) {
    SweepRow row;
    row.threshold = thr;
    double delay_sum = 0.0;
    for (const auto & s : scenes) {
      if (s.t.size() != s.score.size()) {
        throw std::invalid_argument("sweep scene has mismatched time and score lengths");
      }
      std::optional<double> first;
      for (std::size_t k = 0; k < s.t.size(); ++k) {
        if (s.score[k] >= thr) {
          first = s.t[k];
          break;
        }
      }
      if (!first) {
        ++row.fn;
      } else if (*first < s.fp_boundary) {
        ++row.fp;
      } else {
        ++row.tp;
        delay_sum += *first - s.event_time;
      }
    }
    const auto m = metrics_from_counts(row.tp, row.fp, row.fn, 0);
    row.precision = m.precision;
    row.recall = m.recall;
    row.f1 = m.f1;
    if (row.tp > 0) {
      row.mean_detection_time = delay_sum / static_cast<double>(row.tp);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> threshold_grid(double step)
{
  if (!(step > 0.0) || step > 1.0) {
    throw ParameterError("threshold step must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> grid(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    grid[i] = std::min(1.0, static_cast<double>(i) * step);
  }
  return grid;
}

namespace
{

LatencyStats summarize(std::vector<double> us)
{
  LatencyStats s;
  s.samples = us.size();
  std::sort(us.begin(), us.end());
  s.median_us = us[us.size() / 2];
  s.p99_us = us[std::min(us.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(us.size()))) - 1)];
  double sum = 0.0;
  for (double v : us) {
    sum += v;
  }
  s.mean_us = sum / static_cast<double>(us.size());
  return s;
}

}  // namespace

LatencyStats time_calls(const std::function<void()> & call, std::size_t repetitions, std::size_t warmup)
{
  if (repetitions == 0) {
    throw std::invalid_argument("timing needs at least one repetition");
  }
  for (std::size_t i = 0; i < warmup; ++i) {
    call();
  }
  std::vector<double> us;
  us.reserve(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) {
    const auto a = std::chrono::steady_clock::now();
    call();
    const auto b = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(b - a).count());
  }
  return summarize(std::move(us));
}

LatencyStats time_cycles(const std::function<void(std::size_t)> & cycle, std::size_t cycles)
{
  if (cycles == 0) {
    throw std::invalid_argument("timing needs at least one cycle");
  }
  std::vector<double> us;
  us.reserve(cycles);
  for (std::size_t i = 0; i < cycles; ++i) {
    const auto a = std::chrono::steady_clock::now();
    cycle(i);
    const auto b = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(b - a).count());
  }
  return summarize(std::move(us));
}

namespace
{

nlohmann::json optional_number(const std::optional<double> & v)
{
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt(const char * format, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

nlohmann::json EvalReport::to_json() const
{
  nlohmann::json j;
  j["method"] = method;
  if (asaee) {
    nlohmann::json a;
    for (MotionState s : kAllStates) {
      a[std::string(to_string(s))] = {
        {"asaee_cm_s", optional_number(asaee->by_class[index_of(s)])},
        {"predictions", asaee->predictions[index_of(s)]}};
    }
    a["overall_cm_s"] = optional_number(asaee->overall);
    j["asaee"] = a;
  }
  if (confusion) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < kNumStates; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t c = 0; c < kNumStates; ++c) {
        row.push_back(confusion->row_defined(r) ? nlohmann::json(confusion->percent(r, c)) : nlohmann::json(nullptr));
      }
      rows.push_back(row);
    }
    j["confusion_percent"] = rows;
    j["four_class_accuracy"] = confusion->accuracy();
  }
  if (start_binary) {
    j["start_binary"] = {{"accuracy", start_binary->accuracy}, {"f1", start_binary->f1},
                         {"precision", start_binary->precision}, {"recall", start_binary->recall}};
  }
  if (start_threshold) {
    j["start_threshold"] = *start_threshold;
  }
  if (!sweep.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto & r : sweep) {
      rows.push_back({{"threshold", r.threshold}, {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn},
                      {"precision", r.precision}, {"f1", r.f1},
                      {"mean_detection_time_s", optional_number(r.mean_detection_time)}});
    }
    j["sweep"] = rows;
  }
  if (latency) {
    j["latency_us"] = {{"median", latency->median_us}, {"p99", latency->p99_us}, {"mean", latency->mean_us},
                       {"samples", latency->samples}};
  }
  return j;
}

std::string EvalReport::to_text() const
{
  std::ostringstream out;
  out << "method: " << method << '\n';
  if (asaee) {
    out << "\nASAEE [cm/s]\n";
    out << "  class      asaee    predictions\n";
    for (MotionState s : kAllStates) {
      const auto & v = asaee->by_class[index_of(s)];
      char line[96];
      std::snprintf(line, sizeof line, "  %-9s %7s %10zu\n", std::string(to_string(s)).c_str(),
                    v ? fmt("%.2f", *v).c_str() : "-", asaee->predictions[index_of(s)]);
      out << line;
    }
    out << "  overall   " << (asaee->overall ? fmt("%7.2f", *asaee->overall) : std::string("      -")) << '\n';
  }
  if (confusion) {
    out << "\nconfusion [% of ground-truth row]\n  truth\\pred  Waiting Starting   Moving Stopping\n";
    for (std::size_t r = 0; r < kNumStates; ++r) {
      char line[128];
      std::snprintf(line, sizeof line, "  %-10s", std::string(to_string(kAllStates[r])).c_str());
      out << line;
      for (std::size_t c = 0; c < kNumStates; ++c) {
        out << (confusion->row_defined(r) ? fmt(" %8.1f", confusion->percent(r, c)) : std::string("        -"));
      }
      out << '\n';
    }
    out << "  accuracy " << fmt("%.4f", confusion->accuracy()) << '\n';
  }
  if (start_binary) {
    out << "\nstart binarization";
    if (start_threshold) {
      out << " (threshold " << fmt("%.3f", *start_threshold) << ")";
    }
    out << ": accuracy " << fmt("%.4f", start_binary->accuracy) << ", F1 " << fmt("%.4f", start_binary->f1) << '\n';
  }
  if (!sweep.empty()) {
    out << "\nearly-detection sweep\n  threshold  precision     F1   mean detection [s]   tp  fp  fn\n";
    for (const auto & r : sweep) {
      char line[160];
      std::snprintf(line, sizeof line, "  %9.3f  %9.3f  %5.3f  %18s  %3zu %3zu %3zu\n", r.threshold, r.precision, r.f1,
                    r.mean_detection_time ? fmt("%.3f", *r.mean_detection_time).c_str() : "-", r.tp, r.fp, r.fn);
      out << line;
    }
  }
  if (latency) {
    out << "\nlatency per cycle: median " << fmt("%.1f", latency->median_us) << " us, p99 "
        << fmt("%.1f", latency->p99_us) << " us (" << latency->samples << " samples)\n";
  }
  return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows)
{
  std::ostringstream out;
  out << "threshold,tp,fp,fn,precision,recall,f1,mean_detection_time\n";
  for (const auto & r : rows) {
    out << fmt("%.3f", r.threshold) << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << fmt("%.9g", r.precision)
        << ',' << fmt("%.9g", r.recall) << ',' << fmt("%.9g", r.f1) << ','
        << (r.mean_detection_time ? fmt("%.9g", *r.mean_detection_time) : std::string()) << '\n';
  }
  return out.str();
}

}  // namespace vru
