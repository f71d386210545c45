#include "vru/experiment.hpp"

#include "vru/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace vru
{

void parallel_for(std::size_t n, const std::function<void(std::size_t)> & fn)
{
  const std::size_t workers = std::min<std::size_t>(std::max(1U, std::thread::hardware_concurrency()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) {
            error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto & t : pool) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

CorpusSplit split_corpus(std::span<const Scene> scenes, double train_fraction, std::uint64_t seed)
{
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("train_fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, kNumStates> by_class;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    by_class[index_of(scenes[i].scene_class)].push_back(i);
  }
  std::vector<char> is_train(scenes.size(), 0);
  for (auto & idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < n_train; ++k) {
      is_train[idx[k]] = 1;
    }
  }
  CorpusSplit out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    (is_train[i] ? out.train : out.test).push_back(scenes[i]);
  }
  return out;
}

std::vector<std::size_t> evaluation_steps(const Scene & scene, const PolyConfig & input, std::size_t stride)
{
  if (stride == 0) {
    throw ParameterError("stride must be at least 1");
  }
  const double dt = scene.dt();
  long first = 0;
  for (std::size_t w = 0; w < input.windows.size(); ++w) {
    first = std::min(first, input.samples(w, dt).first);
  }
  const auto horizon = static_cast<std::size_t>(std::lround(kHorizonStep * static_cast<double>(kHorizonSteps) / dt));
  std::vector<std::size_t> steps;
  const auto lo = static_cast<std::size_t>(-first);
  for (std::size_t k = lo; k + horizon < scene.size(); k += stride) {
    steps.push_back(k);
  }
  return steps;
}

ClassAsaee evaluate_asaee(
  std::span<const Scene> scenes, const PolyConfig & input, std::size_t stride, const SceneRunner & runner)
{
  std::vector<AsaeeAccumulator> per_scene(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t s) {
    const auto steps = evaluation_steps(scenes[s], input, stride);
    if (steps.empty()) {
      return;
    }
    const auto preds = runner(s, scenes[s], steps);
    if (preds.size() != steps.size()) {
      throw std::runtime_error("method returned the wrong number of predictions");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (!per_scene[s].add(preds[i], scenes[s].trajectory, steps[i])) {
        throw std::runtime_error("prediction horizon leaves scene '" + scenes[s].id + "'");
      }
    }
  });
  std::array<AsaeeAccumulator, kNumStates> by_class;
  AsaeeAccumulator overall;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    by_class[index_of(scenes[s].scene_class)].merge(per_scene[s]);
    overall.merge(per_scene[s]);
  }
  ClassAsaee out;
  for (std::size_t c = 0; c < kNumStates; ++c) {
    out.predictions[c] = by_class[c].count();
    if (by_class[c].count() > 0) {
      out.by_class[c] = by_class[c].value();
    }
  }
  if (overall.count() > 0) {
    out.overall = overall.value();
  }
  return out;
}

SceneRunner polymlp_runner(const TrajectoryPredictor & predictor)
{
  return [&predictor](std::size_t, const Scene & scene, std::span<const std::size_t> steps) {
    const auto kin = ego_velocity(scene.trajectory, predictor.ego);
    std::vector<PredictedTrajectory> out;
    out.reserve(steps.size());
    for (auto k : steps) {
      auto p = predictor.predict(kin.velocity, kin.frames[k], k, scene.dt());
      if (!p) {
        throw std::runtime_error("input window incomplete at an evaluation step");
      }
      out.push_back(std::move(*p));
    }
    return out;
  };
}

SceneRunner cv_kf_runner(const CvKfParams & params)
{
  return [params](std::size_t, const Scene & scene, std::span<const std::size_t> steps) {
    const auto states = run_cv_kf(scene.trajectory, params);
    const auto grid = horizon_grid();
    std::vector<PredictedTrajectory> out;
    out.reserve(steps.size());
    for (auto k : steps) {
      out.push_back(cv_kf_predict_trajectory(states[k], grid));
    }
    return out;
  };
}

SceneRunner kinematic_runner(const EgoOptions & ego)
{
  return [ego](std::size_t, const Scene & scene, std::span<const std::size_t> steps) {
    const auto kin = ego_velocity(scene.trajectory, ego);
    const auto grid = horizon_grid();
    std::vector<PredictedTrajectory> out;
    out.reserve(steps.size());
    for (auto k : steps) {
      out.push_back(kinematic_baseline_predict(kin.velocity.v_lon[k], kin.velocity.v_lat[k], kin.frames[k], grid));
    }
    return out;
  };
}

bool forced_frame(const std::string & scene_id, std::size_t step, double rate, std::uint64_t seed)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : scene_id) {
    h = (h ^ c) * 0x100000001b3ULL;
  }
  const std::uint64_t r = splitmix64(splitmix64(seed ^ h) + step);
  return static_cast<double>(r >> 11) * 0x1.0p-53 < rate;
}

SceneRunner two_stage_runner(const TwoStagePipeline & pipeline, GateSource gate, double forced_rate, std::uint64_t seed)
{
  return [&pipeline, gate, forced_rate, seed](std::size_t, const Scene & scene, std::span<const std::size_t> steps) {
    const auto & ego = pipeline.experts.by_state[index_of(MotionState::Moving)].ego;
    const auto kin = ego_velocity(scene.trajectory, ego);
    std::vector<PredictedTrajectory> out;
    out.reserve(steps.size());
    for (auto k : steps) {
      std::optional<StatePosterior> post;
      if (gate == GateSource::GroundTruth) {
        post = one_hot(scene.scene_class);
      } else if (gate == GateSource::ForcedStop && scene.scene_class == MotionState::Moving &&
                 forced_frame(scene.id, k, forced_rate, seed)) {
        post = one_hot(MotionState::Stopping);
      }
      auto p = pipeline.predict(scene.trajectory, kin, k, scene.dt(), post);
      if (!p) {
        throw std::runtime_error("input window incomplete at an evaluation step");
      }
      out.push_back(std::move(*p));
    }
    return out;
  };
}

KfTuning tune_cv_kf(
  std::span<const Scene> scenes, const CvKfParams & base, std::span<const double> q_grid, const PolyConfig & input,
  std::size_t stride)
{
  if (q_grid.empty()) {
    throw ParameterError("empty q grid");
  }
  KfTuning out;
  double best = std::numeric_limits<double>::infinity();
  for (double q : q_grid) {
    CvKfParams p = base;
    p.q = q;
    p.validate();
    const auto r = evaluate_asaee(scenes, input, stride, cv_kf_runner(p));
    if (!r.overall) {
      throw std::runtime_error("no evaluable steps for KF tuning");
    }
    out.table.emplace_back(q, *r.overall);
    if (*r.overall < best) {
      best = *r.overall;
      out.best_q = q;
    }
  }
  return out;
}

std::vector<SceneScores> classify_scenes(const StateClassifier & classifier, std::span<const Scene> scenes)
{
  std::vector<SceneScores> out(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t s) {
    const auto kin = ego_velocity(scenes[s].trajectory, classifier.ego);
    for (std::size_t k = 0; k < scenes[s].size(); ++k) {
      auto p = classifier.classify(kin.velocity, k, scenes[s].dt());
      if (p) {
        out[s].steps.push_back(k);
        out[s].posterior.push_back(*p);
      }
    }
  });
  return out;
}

double start_score(const StatePosterior & posterior)
{
  return posterior.normalized_copy().p_sum_start();
}

double stop_score(const StatePosterior & posterior)
{
  return posterior.normalized_copy().p_sum_stop();
}

void collect_binary(
  std::span<const SceneScores> scores, std::span<const Scene> scenes, ClassifierMode split, std::vector<double> & score,
  std::vector<char> & truth)
{
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t i = 0; i < scores[s].steps.size(); ++i) {
      const auto & p = scores[s].posterior[i];
      score.push_back(split == ClassifierMode::TwoClassStop ? stop_score(p) : start_score(p));
      truth.push_back(binary_truth(scenes[s], scores[s].steps[i], split) ? 1 : 0);
    }
  }
}

ClassificationEval evaluate_classifier(
  const StateClassifier & classifier, std::span<const Scene> train, std::span<const Scene> test, double threshold_step)
{
  ClassificationEval out;
  const ClassifierMode split = classifier.mode == ClassifierMode::TwoClassStop ? ClassifierMode::TwoClassStop
                                                                              : ClassifierMode::TwoClassStart;
  {
    const auto scores = classify_scenes(classifier, train);
    std::vector<double> s;
    std::vector<char> t;
    collect_binary(scores, train, split, s, t);
    out.start_threshold = select_threshold(s, t, threshold_step);
  }
  const auto scores = classify_scenes(classifier, test);
  std::vector<MotionState> predicted;
  std::vector<MotionState> truth;
  for (std::size_t s = 0; s < test.size(); ++s) {
    for (std::size_t i = 0; i < scores[s].steps.size(); ++i) {
      predicted.push_back(scores[s].posterior[i].argmax());
      truth.push_back(test[s].labels[scores[s].steps[i]]);
    }
  }
  out.confusion = confusion_matrix(predicted, truth);
  std::vector<double> s;
  std::vector<char> t;
  collect_binary(scores, test, split, s, t);
  std::vector<char> p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    p[i] = s[i] >= out.start_threshold ? 1 : 0;
  }
  out.start_binary = frame_metrics(p, t);
  return out;
}

namespace
{

SweepScene make_sweep_scene(const SceneScores & sc, const Scene & scene, bool stop, double event, double boundary)
{
  SweepScene s;
  s.event_time = event;
  s.fp_boundary = boundary;
  for (std::size_t i = 0; i < sc.steps.size(); ++i) {
    s.t.push_back(scene.trajectory.t[sc.steps[i]]);
    s.score.push_back(stop ? stop_score(sc.posterior[i]) : start_score(sc.posterior[i]));
  }
  return s;
}

}  // namespace

std::vector<SweepScene> start_sweep_scenes(std::span<const SceneScores> scores, std::span<const Scene> scenes)
{
  std::vector<SweepScene> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto & sc = scenes[s];
    const auto event = sc.events.heel_off ? sc.events.heel_off : sc.events.transition_start;
    if (sc.scene_class != MotionState::Starting || !event) {
      continue;
    }
    out.push_back(make_sweep_scene(scores[s], sc, false, *event, *event));
  }
  return out;
}

std::vector<SweepScene> stop_sweep_scenes(std::span<const SceneScores> scores, std::span<const Scene> scenes)
{
  std::vector<SweepScene> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto & sc = scenes[s];
    const auto event = sc.events.heel_down ? sc.events.heel_down : sc.events.transition_end;
    if (sc.scene_class != MotionState::Stopping || !event) {
      continue;
    }
    const double boundary = sc.events.transition_start.value_or(*event);
    out.push_back(make_sweep_scene(scores[s], sc, true, *event, boundary));
  }
  return out;
}

ImmClassification evaluate_imm(
  std::span<const Scene> train, std::span<const Scene> test, const ImmParams & params, const PolyConfig & input,
  double threshold_step)
{
  const auto collect = [&](std::span<const Scene> scenes, std::vector<double> & score, std::vector<char> & truth) {
    std::vector<std::vector<double>> mu(scenes.size());
    parallel_for(scenes.size(), [&](std::size_t s) { mu[s] = run_imm_mu_cv(scenes[s].trajectory, params); });
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      long first = 0;
      for (std::size_t w = 0; w < input.windows.size(); ++w) {
        first = std::min(first, input.samples(w, scenes[s].dt()).first);
      }
      for (auto k = static_cast<std::size_t>(-first); k < scenes[s].size(); ++k) {
        score.push_back(mu[s][k]);
        truth.push_back(binary_truth(scenes[s], k, ClassifierMode::TwoClassStart) ? 1 : 0);
      }
    }
  };
  ImmClassification out;
  std::vector<double> s;
  std::vector<char> t;
  collect(train, s, t);
  out.threshold = select_threshold(s, t, threshold_step);
  const auto binarize = [&](const std::vector<double> & score) {
    std::vector<char> p(score.size());
    for (std::size_t i = 0; i < score.size(); ++i) {
      p[i] = score[i] >= out.threshold ? 1 : 0;
    }
    return p;
  };
  out.train = frame_metrics(binarize(s), t);
  s.clear();
  t.clear();
  collect(test, s, t);
  out.test = frame_metrics(binarize(s), t);
  return out;
}

}  // namespace vru
