#pragma once

#include "vru/config.hpp"
#include "vru/experiment.hpp"
#include "vru/gatedpredictor.hpp"
#include "vru/stateclassifier.hpp"
#include "vru/synthgen.hpp"
#include "vru/trajpredictor.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace vru::test
{

/// Hand-rolled property runner: calls prop(rng, case index) `cases` times with a seeded engine.
inline void for_all(int cases, std::uint64_t seed, const std::function<void(std::mt19937_64 &, int)> & prop)
{
  std::mt19937_64 rng(seed);
  for (int i = 0; i < cases; ++i) {
    prop(rng, i);
  }
}

inline double uniform(std::mt19937_64 & rng, double lo, double hi)
{
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64 & rng, int lo, int hi)
{
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Uniformly sampled trajectory from a position function.
inline Trajectory sampled(const std::function<Eigen::Vector2d(double)> & f, std::size_t n, double dt = 0.02)
{
  Trajectory t;
  for (std::size_t k = 0; k < n; ++k) {
    const double tk = static_cast<double>(k) * dt;
    t.t.push_back(tk);
    t.position.push_back(f(tk));
  }
  return t;
}

inline Trajectory straight(const Eigen::Vector2d & start, const Eigen::Vector2d & v, std::size_t n, double dt = 0.02)
{
  return sampled([&](double t) { return Eigen::Vector2d(start + v * t); }, n, dt);
}

inline Trajectory rigid(const Trajectory & t, double angle, const Eigen::Vector2d & shift)
{
  const Eigen::Rotation2Dd rot(angle);
  Trajectory out = t;
  for (auto & p : out.position) {
    p = rot * p + shift;
  }
  return out;
}

inline Scene scene_from(const Trajectory & t, MotionState cls, const std::string & id = "s")
{
  Scene s;
  s.id = id;
  s.scene_class = cls;
  s.sample_rate_hz = 1.0 / (t.t[1] - t.t[0]);
  s.trajectory = t;
  s.labels.assign(t.size(), cls);
  return s;
}

inline RunConfig small_config()
{
  RunConfig cfg;
  cfg.seed = 7;
  cfg.corpus.counts = {30, 30, 30, 30};
  cfg.rprop.max_epochs = 200;
  return cfg;
}

/// Small corpus and models shared by the model-level tests of one executable, trained on first use.
inline const CorpusSplit & small_split()
{
  static const CorpusSplit split = [] {
    const auto cfg = small_config();
    return split_corpus(generate_corpus(cfg.corpus, cfg.seed), cfg.train_fraction, cfg.seed);
  }();
  return split;
}

inline const TrajectoryPredictor & small_monolithic()
{
  static const TrajectoryPredictor p = train_predictor(small_split().train, small_config().predictor_train()).predictor;
  return p;
}

inline const StateClassifier & small_classifier()
{
  static const StateClassifier c =
    train_classifier(small_split().train, small_config().classifier_train(), ClassifierMode::FourClass).classifier;
  return c;
}

inline const SpecificPredictors & small_experts()
{
  static const SpecificPredictors e = train_specific_predictors(small_split().train, small_config().predictor_train());
  return e;
}

}  // namespace vru::test
