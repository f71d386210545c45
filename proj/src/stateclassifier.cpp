#include "vru/stateclassifier.hpp"

#include "vru/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vru
{

std::string_view to_string(ClassifierMode mode)
{
  switch (mode) {
    case ClassifierMode::FourClass:
      return "four_class";
    case ClassifierMode::TwoClassStart:
      return "two_class_start";
    case ClassifierMode::TwoClassStop:
      return "two_class_stop";
  }
  return "?";
}

ClassifierMode parse_classifier_mode(std::string_view text)
{
  for (auto m : {ClassifierMode::FourClass, ClassifierMode::TwoClassStart, ClassifierMode::TwoClassStop}) {
    if (text == to_string(m)) {
      return m;
    }
  }
  throw ParameterError("unknown classifier mode '" + std::string(text) + "'");
}

MotionState StatePosterior::argmax() const
{
  const auto it = std::max_element(p.begin(), p.end());
  return kAllStates[static_cast<std::size_t>(it - p.begin())];
}

StatePosterior StatePosterior::normalized_copy() const
{
  StatePosterior out = *this;
  out.normalized = true;
  double sum = 0.0;
  for (double v : p) {
    sum += v;
  }
  if (!(sum > 0.0)) {
    out.p.fill(1.0 / static_cast<double>(kNumStates));
    return out;
  }
  for (double & v : out.p) {
    v /= sum;
  }
  return out;
}

double StatePosterior::p_sum_start() const
{
  return p[1] + p[2] + p[3];
}

double StatePosterior::p_sum_stop() const
{
  return p[3] + p[0];
}

StatePosterior posterior_from_outputs(ClassifierMode mode, const Eigen::VectorXd & outputs)
{
  StatePosterior post;
  if (mode == ClassifierMode::FourClass) {
    if (outputs.size() != static_cast<Eigen::Index>(kNumStates)) {
      throw ParameterError("four-class posterior needs 4 outputs");
    }
    for (std::size_t i = 0; i < kNumStates; ++i) {
      post.p[i] = std::clamp(outputs[static_cast<Eigen::Index>(i)], 0.0, 1.0);
    }
    return post;
  }
  if (outputs.size() != 1) {
    throw ParameterError("two-class posterior needs a single output");
  }
  const double p_sum = std::clamp(outputs[0], 0.0, 1.0);
  if (mode == ClassifierMode::TwoClassStart) {
    post.p = {1.0 - p_sum, 0.0, p_sum, 0.0};
  } else {
    post.p = {0.0, 0.0, 1.0 - p_sum, p_sum};
  }
  post.normalized = true;
  return post;
}

bool binarize_start(const StatePosterior & posterior, double threshold)
{
  return posterior.p_sum_start() >= threshold;
}

bool binarize_stop(const StatePosterior & posterior, double threshold)
{
  return posterior.p_sum_stop() >= threshold;
}

double threshold_accuracy(std::span<const double> scores, std::span<const char> truth, double threshold)
{
  if (scores.empty() || scores.size() != truth.size()) {
    throw std::invalid_argument("scores and truth must be non-empty and of equal length");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += static_cast<std::size_t>((scores[i] >= threshold) == (truth[i] != 0));
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double select_threshold(std::span<const double> scores, std::span<const char> truth, double step)
{
  if (scores.empty() || scores.size() != truth.size()) {
    throw std::invalid_argument("threshold selection needs labeled frames");
  }
  if (!(step > 0.0)) {
    throw std::invalid_argument("threshold step must be positive");
  }
  // Sorting once makes each grid point a binary search instead of a full pass.
  std::vector<std::pair<double, char>> sorted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    sorted[i] = {scores[i], truth[i]};
  }
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> positives_below(sorted.size() + 1, 0);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    positives_below[i + 1] = positives_below[i] + (sorted[i].second != 0 ? 1 : 0);
  }
  const std::size_t total_pos = positives_below.back();
  const auto steps = static_cast<long>(std::llround(1.0 / step));
  double best_threshold = 0.0;
  std::size_t best_correct = 0;
  for (long i = 0; i <= steps; ++i) {
    const double thr = static_cast<double>(i) * step;
    const auto below = static_cast<std::size_t>(
      std::lower_bound(sorted.begin(), sorted.end(), std::make_pair(thr, char{0}),
                       [](const auto & a, const auto & b) { return a.first < b.first; }) -
      sorted.begin());
    const std::size_t neg_below = below - positives_below[below];
    const std::size_t pos_above = total_pos - positives_below[below];
    const std::size_t correct = neg_below + pos_above;
    if (correct >= best_correct) {
      best_correct = correct;
      best_threshold = thr;
    }
  }
  return best_threshold;
}

bool binary_truth(const Scene & scene, std::size_t index, ClassifierMode mode)
{
  const double t = scene.trajectory.t[index];
  const MotionState label = scene.labels[index];
  if (mode == ClassifierMode::TwoClassStop) {
    if (scene.scene_class == MotionState::Stopping && scene.events.transition_start) {
      return t >= *scene.events.transition_start;
    }
    return label == MotionState::Stopping || label == MotionState::Waiting;
  }
  if (scene.scene_class == MotionState::Starting) {
    const auto onset = scene.events.heel_off ? scene.events.heel_off : scene.events.transition_start;
    if (onset) {
      return t >= *onset;
    }
  }
  return label != MotionState::Waiting;
}

std::optional<StatePosterior> StateClassifier::classify(
  const VelocitySeries & velocity, std::size_t now_index, double dt) const
{
  const auto features = extract_features(velocity, input_config, now_index, dt);
  if (!features) {
    return std::nullopt;
  }
  return posterior_from_outputs(mode, mlp.forward(*features));
}

std::optional<StatePosterior> classify(
  const StateClassifier & classifier, const VelocitySeries & velocity, std::size_t now_index, double dt)
{
  return classifier.classify(velocity, now_index, dt);
}

Dataset build_classification_patterns(
  std::span<const Scene> scenes, const PolyConfig & input, const EgoOptions & ego, ClassifierMode mode)
{
  const Eigen::Index n_out = mode == ClassifierMode::FourClass ? static_cast<Eigen::Index>(kNumStates) : 1;
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
      Eigen::VectorXd y = Eigen::VectorXd::Zero(n_out);
      if (mode == ClassifierMode::FourClass) {
        y[static_cast<Eigen::Index>(index_of(scene.labels[k]))] = 1.0;
      } else {
        y[0] = binary_truth(scene, k, mode) ? 1.0 : 0.0;
      }
      inputs.push_back(std::move(*f));
      targets.push_back(std::move(y));
      data.group.push_back(static_cast<int>(s));
    }
  }
  const auto n = static_cast<Eigen::Index>(inputs.size());
  data.inputs.resize(static_cast<Eigen::Index>(input.feature_length()), n);
  data.targets.resize(n_out, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.inputs.col(i) = inputs[static_cast<std::size_t>(i)];
    data.targets.col(i) = targets[static_cast<std::size_t>(i)];
  }
  return data;
}

ClassifierTraining train_classifier(
  std::span<const Scene> scenes, const ClassifierTrainConfig & config, ClassifierMode mode)
{
  config.input.validate();
  const Dataset data = build_classification_patterns(scenes, config.input, config.ego, mode);
  if (data.size() == 0) {
    throw std::runtime_error("no classification patterns: every scene is shorter than the input window");
  }
  ClassifierTraining out;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (mode == ClassifierMode::FourClass) {
      Eigen::Index cls = 0;
      data.targets.col(i).maxCoeff(&cls);
      ++out.class_counts[static_cast<std::size_t>(cls)];
    } else {
      ++out.class_counts[data.targets(0, i) > 0.5 ? 1 : 0];
    }
  }
  const std::size_t n_classes = mode == ClassifierMode::FourClass ? kNumStates : 2;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (out.class_counts[c] == 0) {
      const std::string name = mode == ClassifierMode::FourClass ? std::string(to_string(kAllStates[c]))
                                                                : (c == 0 ? "negative" : "positive");
      throw std::runtime_error("class '" + name + "' is absent from the training patterns");
    }
  }
  std::vector<int> sizes{static_cast<int>(config.input.feature_length())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(static_cast<int>(data.targets.rows()));
  out.training = train_rprop(sizes, config.activation, data, config.rprop);
  out.classifier.mode = mode;
  out.classifier.input_config = config.input;
  out.classifier.ego = config.ego;
  out.classifier.mlp = out.training.model;
  return out;
}

void save_classifier(const std::filesystem::path & path, const StateClassifier & classifier)
{
  nlohmann::json j;
  j["format"] = "vru-polymlp-model";
  j["version"] = kModelFileVersion;
  j["kind"] = "classifier";
  j["mode"] = std::string(to_string(classifier.mode));
  j["input_config"] = classifier.input_config.to_text();
  j["input_fingerprint"] = classifier.input_config.fingerprint();
  j["ego"] = ego_options_to_json(classifier.ego);
  j["mlp"] = mlp_to_json(classifier.mlp);
  write_model_json(path, j);
}

StateClassifier load_classifier(const std::filesystem::path & path)
{
  const auto j = read_model_json(path, "classifier");
  StateClassifier c;
  try {
    c.mode = parse_classifier_mode(j.at("mode").get<std::string>());
    c.input_config = PolyConfig::parse(j.at("input_config").get<std::string>());
    check_fingerprint(j.at("input_fingerprint").get<std::string>(), c.input_config, "stored layout");
    c.ego = ego_options_from_json(j.at("ego"));
    c.mlp = mlp_from_json(j.at("mlp"));
  } catch (const nlohmann::json::exception & e) {
    throw std::runtime_error("model file " + path.string() + ": " + e.what());
  }
  if (c.mlp.input_size() != c.input_config.feature_length()) {
    throw std::runtime_error("model file " + path.string() + ": input size does not match the stored layout");
  }
  return c;
}

}  // namespace vru
