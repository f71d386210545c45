#include "vru/trajpredictor.hpp"

#include "vru/model_io.hpp"

#include <cmath>
#include <stdexcept>

namespace vru
{

std::vector<double> horizon_grid()
{
  std::vector<double> grid(kHorizonSteps);
  for (std::size_t i = 0; i < kHorizonSteps; ++i) {
    grid[i] = static_cast<double>(i + 1) * kHorizonStep;
  }
  return grid;
}

PredictedTrajectory to_global_trajectory(
  const Eigen::MatrixXd & ego_positions, std::span<const double> t_pred, const EgoFrame & frame)
{
  PredictedTrajectory out;
  out.frame = frame;
  out.t_pred.assign(t_pred.begin(), t_pred.end());
  out.positions.reserve(t_pred.size());
  for (Eigen::Index i = 0; i < ego_positions.cols(); ++i) {
    out.positions.push_back(frame.to_global(ego_positions.col(i)));
  }
  return out;
}

PredictedTrajectory trajectory_from_coefficients(
  const Eigen::VectorXd & coefficients, const PolyConfig & output, const EgoFrame & frame, double dt,
  std::span<const double> t_pred)
{
  return to_global_trajectory(reconstruct_series(coefficients, output, t_pred, dt), t_pred, frame);
}

PredictedTrajectory kinematic_baseline_predict(
  double v_lon, double v_lat, const EgoFrame & frame, std::span<const double> t_pred)
{
  Eigen::MatrixXd ego(2, static_cast<Eigen::Index>(t_pred.size()));
  for (std::size_t i = 0; i < t_pred.size(); ++i) {
    ego.col(static_cast<Eigen::Index>(i)) = Eigen::Vector2d(v_lon, v_lat) * t_pred[i];
  }
  return to_global_trajectory(ego, t_pred, frame);
}

std::optional<Eigen::VectorXd> output_targets(
  const Trajectory & trajectory, const EgoFrame & frame_now, const PolyConfig & output, std::size_t now,
  double dt)
{
  long first = 0;
  long last = 0;
  for (std::size_t w = 0; w < output.windows.size(); ++w) {
    const auto r = output.samples(w, dt);
    first = std::min(first, r.first);
    last = std::max(last, r.first + static_cast<long>(r.count) - 1);
  }
  const long lo = static_cast<long>(now) + first;
  const long hi = static_cast<long>(now) + last;
  if (lo < 0 || hi >= static_cast<long>(trajectory.size())) {
    return std::nullopt;
  }
  const auto n = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d e = frame_now.to_ego(trajectory.position[static_cast<std::size_t>(lo) + i]);
    xs[i] = e.x();
    ys[i] = e.y();
  }
  const std::span<const double> dims[] = {xs, ys};
  return fit_series(std::span(dims, 2), output, static_cast<std::size_t>(-first), dt);
}

std::optional<Eigen::VectorXd> TrajectoryPredictor::predict_coefficients(
  const VelocitySeries & velocity, std::size_t now_index, double dt) const
{
  const auto features = extract_features(velocity, input_config, now_index, dt);
  if (!features) {
    return std::nullopt;
  }
  return mlp.forward(*features);
}

std::optional<PredictedTrajectory> TrajectoryPredictor::predict(
  const VelocitySeries & velocity, const EgoFrame & frame_now, std::size_t now_index, double dt) const
{
  const auto coeffs = predict_coefficients(velocity, now_index, dt);
  if (!coeffs) {
    return std::nullopt;
  }
  const auto grid = horizon_grid();
  return trajectory_from_coefficients(*coeffs, output_config, frame_now, dt, grid);
}

Dataset build_prediction_patterns(
  std::span<const Scene> scenes, const PolyConfig & input, const PolyConfig & output, const EgoOptions & ego)
{
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> targets;
  Dataset data;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto & scene = scenes[s];
    const auto kin = ego_velocity(scene.trajectory, ego);
    for (std::size_t k = 0; k < scene.size(); ++k) {
      auto f = extract_features(kin.velocity, input, k, scene.dt());
      if (!f) {
        continue;
      }
      auto y = output_targets(scene.trajectory, kin.frames[k], output, k, scene.dt());
      if (!y) {
        continue;
      }
      inputs.push_back(std::move(*f));
      targets.push_back(std::move(*y));
      data.group.push_back(static_cast<int>(s));
    }
  }
  const auto n = static_cast<Eigen::Index>(inputs.size());
  data.inputs.resize(static_cast<Eigen::Index>(input.feature_length()), n);
  data.targets.resize(static_cast<Eigen::Index>(output.feature_length()), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.inputs.col(i) = inputs[static_cast<std::size_t>(i)];
    data.targets.col(i) = targets[static_cast<std::size_t>(i)];
  }
  return data;
}

PredictorTraining train_predictor(std::span<const Scene> scenes, const PredictorTrainConfig & config)
{
  config.input.validate();
  config.output.validate();
  const Dataset data = build_prediction_patterns(scenes, config.input, config.output, config.ego);
  if (data.size() == 0) {
    throw std::runtime_error("no prediction patterns: no scene covers both the input and the output window");
  }
  std::vector<int> sizes{static_cast<int>(config.input.feature_length())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(static_cast<int>(config.output.feature_length()));

  PredictorTraining out;
  out.patterns = static_cast<std::size_t>(data.size());
  out.training = train_rprop(sizes, config.activation, data, config.rprop);
  out.predictor.input_config = config.input;
  out.predictor.output_config = config.output;
  out.predictor.ego = config.ego;
  out.predictor.mlp = out.training.model;
  return out;
}

void save_predictor(const std::filesystem::path & path, const TrajectoryPredictor & predictor)
{
  nlohmann::json j;
  j["format"] = "vru-polymlp-model";
  j["version"] = kModelFileVersion;
  j["kind"] = "predictor";
  j["input_config"] = predictor.input_config.to_text();
  j["input_fingerprint"] = predictor.input_config.fingerprint();
  j["output_config"] = predictor.output_config.to_text();
  j["output_fingerprint"] = predictor.output_config.fingerprint();
  j["ego"] = ego_options_to_json(predictor.ego);
  j["mlp"] = mlp_to_json(predictor.mlp);
  write_model_json(path, j);
}

TrajectoryPredictor load_predictor(const std::filesystem::path & path)
{
  const auto j = read_model_json(path, "predictor");
  TrajectoryPredictor p;
  try {
    p.input_config = PolyConfig::parse(j.at("input_config").get<std::string>());
    p.output_config = PolyConfig::parse(j.at("output_config").get<std::string>());
    check_fingerprint(j.at("input_fingerprint").get<std::string>(), p.input_config, "stored input layout");
    check_fingerprint(j.at("output_fingerprint").get<std::string>(), p.output_config, "stored output layout");
    p.ego = ego_options_from_json(j.at("ego"));
    p.mlp = mlp_from_json(j.at("mlp"));
  } catch (const nlohmann::json::exception & e) {
    throw std::runtime_error("model file " + path.string() + ": " + e.what());
  }
  if (p.mlp.input_size() != p.input_config.feature_length() ||
      p.mlp.output_size() != p.output_config.feature_length()) {
    throw std::runtime_error("model file " + path.string() + ": network shape does not match the stored layouts");
  }
  return p;
}

}  // namespace vru
