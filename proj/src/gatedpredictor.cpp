#include "vru/gatedpredictor.hpp"

#include "vru/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace vru
{

std::array<double, kNumStates> gate_weights(const StatePosterior & posterior, bool * fell_back)
{
  std::array<double, kNumStates> w{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumStates; ++i) {
    w[i] = std::clamp(posterior.p[i], 0.0, 1.0);
    sum += w[i];
  }
  const bool degenerate = !(sum > 0.0);
  if (fell_back != nullptr) {
    *fell_back = degenerate;
  }
  if (degenerate) {
    w.fill(1.0 / static_cast<double>(kNumStates));
    return w;
  }
  for (double & v : w) {
    v /= sum;
  }
  return w;
}

Eigen::VectorXd fuse_coefficients(
  const std::array<double, kNumStates> & weights, const std::array<Eigen::VectorXd, kNumStates> & coefficients)
{
  Eigen::Index size = 0;
  for (std::size_t i = 0; i < kNumStates; ++i) {
    if (weights[i] != 0.0) {
      size = coefficients[i].size();
      break;
    }
  }
  Eigen::VectorXd fused = Eigen::VectorXd::Zero(size);
  for (std::size_t i = 0; i < kNumStates; ++i) {
    if (weights[i] == 0.0) {
      continue;  // a skipped expert may carry no coefficients at all
    }
    if (coefficients[i].size() != size) {
      throw ParameterError("expert coefficient vectors differ in length");
    }
    fused += weights[i] * coefficients[i];
  }
  return fused;
}

PredictedTrajectory gated_predict(
  const StatePosterior & posterior, const std::array<Eigen::VectorXd, kNumStates> & coefficients,
  const PolyConfig & output, const EgoFrame & frame, double dt)
{
  bool fell_back = false;
  const auto w = gate_weights(posterior, &fell_back);
  if (fell_back) {
    std::clog << "gate: all-zero posterior, using uniform weights\n";
  }
  const auto grid = horizon_grid();
  return trajectory_from_coefficients(fuse_coefficients(w, coefficients), output, frame, dt, grid);
}

SpecificPredictors train_specific_predictors(std::span<const Scene> scenes, const PredictorTrainConfig & config)
{
  SpecificPredictors out;
  for (MotionState state : kAllStates) {
    std::vector<Scene> subset;
    for (const auto & s : scenes) {
      if (s.scene_class == state) {
        subset.push_back(s);
      }
    }
    const auto i = index_of(state);
    if (subset.empty()) {
      throw std::runtime_error("no training scenes of class '" + std::string(to_string(state)) + "'");
    }
    auto trained = train_predictor(subset, config);
    out.by_state[i] = std::move(trained.predictor);
    out.patterns[i] = trained.patterns;
    out.scenes[i] = subset.size();
  }
  return out;
}

void PhysModParams::validate() const
{
  if (!(fit_window > 0.0) || !(tau_min > 0.0) || !(tau_max >= tau_min) || !(coarse_step > 0.0) ||
      !(fine_step > 0.0) || !(t0_before >= 0.0) || !(t0_after >= -t0_before) || !(v_max > 0.0)) {
    throw ParameterError("invalid physical model parameters");
  }
}

namespace
{

double softplus(double x)
{
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

// Shape function g with lon(t) = p0 + v_ss * g(t).
double profile_shape(MotionState state, double tau, double t0, double t)
{
  const double u = (t - t0) / tau;
  return state == MotionState::Starting ? tau * softplus(u) : -tau * softplus(-u);
}

constexpr double kRidge = 1e-8;  // m^2 s^2, regularizes windows that see no motion

std::optional<LogisticFit> solve_linear(
  MotionState state, double tau, double t0, double v_max, std::span<const double> times, std::span<const double> lon)
{
  const auto n = static_cast<double>(times.size());
  double g_mean = 0.0;
  double y_mean = 0.0;
  std::vector<double> g(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    g[i] = profile_shape(state, tau, t0, times[i]);
    g_mean += g[i];
    y_mean += lon[i];
  }
  g_mean /= n;
  y_mean /= n;
  double sgg = 0.0;
  double sgy = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sgg += (g[i] - g_mean) * (g[i] - g_mean);
    sgy += (g[i] - g_mean) * (lon[i] - y_mean);
  }
  LogisticFit fit;
  fit.tau = tau;
  fit.t0 = t0;
  fit.v_ss = std::clamp(sgy / (sgg + kRidge), 0.0, v_max);
  fit.p0 = y_mean - fit.v_ss * g_mean;
  double rss = kRidge * fit.v_ss * fit.v_ss;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double r = lon[i] - fit.p0 - fit.v_ss * g[i];
    rss += r * r;
  }
  fit.rss = rss;
  if (!std::isfinite(rss)) {
    return std::nullopt;
  }
  return fit;
}

void search_grid(
  MotionState state, std::span<const double> times, std::span<const double> lon, double v_max, double tau_lo,
  double tau_hi, double t0_lo, double t0_hi, double step, std::optional<LogisticFit> & best)
{
  const auto n_tau = static_cast<int>(std::floor((tau_hi - tau_lo) / step + 1e-9));
  const auto n_t0 = static_cast<int>(std::floor((t0_hi - t0_lo) / step + 1e-9));
  for (int a = 0; a <= n_tau; ++a) {
    const double tau = tau_lo + a * step;
    for (int b = 0; b <= n_t0; ++b) {
      const double t0 = t0_lo + b * step;
      auto fit = solve_linear(state, tau, t0, v_max, times, lon);
      if (fit && (!best || fit->rss < best->rss)) {
        best = fit;
      }
    }
  }
}

}  // namespace

double logistic_displacement(MotionState state, const LogisticFit & fit, double t)
{
  return fit.v_ss * profile_shape(state, fit.tau, fit.t0, t);
}

std::optional<LogisticFit> fit_logistic_profile(
  MotionState state, std::span<const double> times, std::span<const double> lon, const PhysModParams & params)
{
  if (state != MotionState::Starting && state != MotionState::Stopping) {
    throw ParameterError("physical models exist only for Starting and Stopping");
  }
  params.validate();
  if (times.size() != lon.size() || times.size() < 3) {
    return std::nullopt;
  }
  std::optional<LogisticFit> best;
  search_grid(
    state, times, lon, params.v_max, params.tau_min, params.tau_max, -params.t0_before, params.t0_after, params.coarse_step, best);
  if (!best) {
    return std::nullopt;
  }
  const LogisticFit coarse = *best;
  search_grid(
    state, times, lon, params.v_max, std::max(params.tau_min, coarse.tau - params.coarse_step),
    std::min(params.tau_max, coarse.tau + params.coarse_step), std::max(-params.t0_before, coarse.t0 - params.coarse_step),
    std::min(params.t0_after, coarse.t0 + params.coarse_step), params.fine_step, best);
  // pattern search below the grid resolution
  double step = params.fine_step / 2.0;
  while (step > 1e-4) {
    bool moved = false;
    const LogisticFit center = *best;
    for (const auto [da, db] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}) {
      const double tau = center.tau + da * step;
      const double t0 = center.t0 + db * step;
      if (tau < params.tau_min || tau > params.tau_max || t0 < -params.t0_before || t0 > params.t0_after) {
        continue;
      }
      auto fit = solve_linear(state, tau, t0, params.v_max, times, lon);
      if (fit && fit->rss < best->rss) {
        best = fit;
        moved = true;
      }
    }
    if (!moved) {
      step /= 2.0;
    }
  }
  return best;
}

namespace
{

std::pair<long, long> output_sample_range(const PolyConfig & output, double dt)
{
  long first = 0;
  long last = 0;
  for (std::size_t w = 0; w < output.windows.size(); ++w) {
    const auto r = output.samples(w, dt);
    first = std::min(first, r.first);
    last = std::max(last, r.first + static_cast<long>(r.count) - 1);
  }
  return {first, last};
}

Eigen::VectorXd fit_output(
  const PolyConfig & output, double dt, const std::function<Eigen::Vector2d(double)> & ego_position)
{
  const auto [first, last] = output_sample_range(output, dt);
  const auto n = static_cast<std::size_t>(last - first + 1);
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = ego_position(static_cast<double>(first + static_cast<long>(i)) * dt);
    xs[i] = p.x();
    ys[i] = p.y();
  }
  const std::span<const double> dims[] = {xs, ys};
  return *fit_series(std::span(dims, 2), output, static_cast<std::size_t>(-first), dt);
}

}  // namespace

Eigen::VectorXd physical_model_coefficients(
  MotionState state, const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
  const PolyConfig & output, const PhysModParams & params, bool * fell_back)
{
  const auto & frame = kinematics.frames.at(now);
  const auto n_fit = static_cast<std::size_t>(std::lround(params.fit_window / dt)) + 1;
  std::optional<LogisticFit> fit;
  if (now + 1 >= n_fit) {
    std::vector<double> times(n_fit);
    std::vector<double> lon(n_fit);
    for (std::size_t i = 0; i < n_fit; ++i) {
      const std::size_t k = now + 1 - n_fit + i;
      times[i] = (static_cast<double>(k) - static_cast<double>(now)) * dt;
      lon[i] = frame.to_ego(trajectory.position[k]).x();
    }
    fit = fit_logistic_profile(state, times, lon, params);
  }
  if (fell_back != nullptr) {
    *fell_back = !fit;
  }
  if (!fit) {
    std::clog << "physmod: profile fit failed, extrapolating at constant velocity\n";
    const Eigen::Vector2d v(kinematics.velocity.v_lon[now], kinematics.velocity.v_lat[now]);
    return fit_output(output, dt, [&](double t) { return Eigen::Vector2d(v * t); });
  }
  const double at_now = logistic_displacement(state, *fit, 0.0);
  return fit_output(output, dt, [&](double t) {
    return Eigen::Vector2d(logistic_displacement(state, *fit, t) - at_now, 0.0);
  });
}

PredictedTrajectory physical_model_predict(
  MotionState state, const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
  const PolyConfig & output, const PhysModParams & params)
{
  const auto coeffs = physical_model_coefficients(state, trajectory, kinematics, now, dt, output, params);
  const auto grid = horizon_grid();
  return trajectory_from_coefficients(coeffs, output, kinematics.frames.at(now), dt, grid);
}

StatePosterior one_hot(MotionState state)
{
  StatePosterior p;
  p.p[index_of(state)] = 1.0;
  p.normalized = true;
  return p;
}

std::array<Eigen::VectorXd, kNumStates> TwoStagePipeline::expert_coefficients(
  const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
  const std::array<double, kNumStates> & weights) const
{
  const auto & output = experts.by_state[index_of(MotionState::Moving)].output_config;
  std::array<Eigen::VectorXd, kNumStates> coeffs;
  for (MotionState state : kAllStates) {
    const auto i = index_of(state);
    if (weights[i] <= skip_weight) {
      coeffs[i] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(output.feature_length()));
      continue;
    }
    const bool physical =
      transition == TransitionExperts::PhysMod && (state == MotionState::Starting || state == MotionState::Stopping);
    if (physical) {
      coeffs[i] = physical_model_coefficients(state, trajectory, kinematics, now, dt, output, physmod);
    } else {
      auto c = experts.by_state[i].predict_coefficients(kinematics.velocity, now, dt);
      if (!c) {
        throw std::runtime_error("expert input window incomplete");
      }
      coeffs[i] = std::move(*c);
    }
  }
  return coeffs;
}

std::optional<PredictedTrajectory> TwoStagePipeline::predict(
  const Trajectory & trajectory, const EgoKinematics & kinematics, std::size_t now, double dt,
  const std::optional<StatePosterior> & posterior) const
{
  std::optional<StatePosterior> gate = posterior;
  if (!gate) {
    gate = classifier.classify(kinematics.velocity, now, dt);
  }
  if (!gate || !extract_features(kinematics.velocity, experts.by_state[index_of(MotionState::Moving)].input_config, now, dt)) {
    return std::nullopt;
  }
  bool fell_back = false;
  const auto w = gate_weights(*gate, &fell_back);
  if (fell_back) {
    std::clog << "gate: all-zero posterior, using uniform weights\n";
  }
  const auto coeffs = expert_coefficients(trajectory, kinematics, now, dt, w);
  const auto & output = experts.by_state[index_of(MotionState::Moving)].output_config;
  const auto grid = horizon_grid();
  return trajectory_from_coefficients(fuse_coefficients(w, coeffs), output, kinematics.frames.at(now), dt, grid);
}

std::string_view to_string(TransitionExperts t)
{
  return t == TransitionExperts::PhysMod ? "physmod" : "polymlp";
}

void save_manifest(const std::filesystem::path & path, const PipelineManifest & manifest)
{
  nlohmann::json j;
  j["format"] = "vru-polymlp-pipeline";
  j["version"] = kModelFileVersion;
  j["classifier"] = manifest.classifier.string();
  for (MotionState s : kAllStates) {
    j["predictors"][std::string(to_string(s))] = manifest.predictors[index_of(s)].string();
  }
  j["transition_experts"] = std::string(to_string(manifest.transition));
  write_model_json(path, j);
}

PipelineManifest load_manifest(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open pipeline manifest " + path.string());
  }
  PipelineManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "vru-polymlp-pipeline" || j.value("version", 0) != kModelFileVersion) {
      throw std::runtime_error("pipeline manifest " + path.string() + " has an unknown format or version");
    }
    m.classifier = j.at("classifier").get<std::string>();
    for (MotionState s : kAllStates) {
      m.predictors[index_of(s)] = j.at("predictors").value(std::string(to_string(s)), "");
    }
    const auto t = j.value("transition_experts", "polymlp");
    if (t == "physmod") {
      m.transition = TransitionExperts::PhysMod;
    } else if (t != "polymlp") {
      throw std::runtime_error("unknown transition_experts '" + t + "'");
    }
  } catch (const nlohmann::json::exception & e) {
    throw std::runtime_error("pipeline manifest " + path.string() + ": " + e.what());
  }
  return m;
}

TwoStagePipeline load_pipeline(const std::filesystem::path & manifest_path)
{
  const auto m = load_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  const auto resolve = [&](const std::filesystem::path & p) { return p.is_absolute() ? p : base / p; };
  TwoStagePipeline pipe;
  pipe.transition = m.transition;
  pipe.classifier = load_classifier(resolve(m.classifier));
  if (pipe.classifier.mode != ClassifierMode::FourClass) {
    throw std::runtime_error("the gating classifier must be a four-class model");
  }
  std::optional<TrajectoryPredictor> reference;
  for (MotionState s : kAllStates) {
    const bool physical =
      m.transition == TransitionExperts::PhysMod && (s == MotionState::Starting || s == MotionState::Stopping);
    const auto & p = m.predictors[index_of(s)];
    if (physical && p.empty()) {
      continue;
    }
    if (p.empty()) {
      throw std::runtime_error("pipeline manifest lacks a predictor for " + std::string(to_string(s)));
    }
    auto pred = load_predictor(resolve(p));
    if (reference) {
      check_fingerprint(pred.input_config.fingerprint(), reference->input_config, std::string(to_string(s)) + " expert");
      check_fingerprint(pred.output_config.fingerprint(), reference->output_config, std::string(to_string(s)) + " expert");
    } else {
      reference = pred;
    }
    pipe.experts.by_state[index_of(s)] = std::move(pred);
  }
  if (!reference) {
    throw std::runtime_error("pipeline manifest names no predictor");
  }
  for (MotionState s : kAllStates) {
    auto & e = pipe.experts.by_state[index_of(s)];
    if (e.mlp.layer_sizes().empty()) {
      e.input_config = reference->input_config;
      e.output_config = reference->output_config;
      e.ego = reference->ego;
    }
  }
  return pipe;
}

}  // namespace vru
