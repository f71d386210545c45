#pragma once

#include "vru/trajdata.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace vru
{

enum class RampFamily { Logistic, PiecewiseAccel };

struct CorpusSpec
{
  std::array<std::size_t, kNumStates> counts{150, 150, 150, 150};  // by scene class
  double duration_min = 4.0;  // s
  double duration_max = 10.0;
  double sample_rate_hz = 50.0;
  double speed_min = 1.0;  // pedestrian steady speed, m/s
  double speed_max = 2.0;
  double cyclist_fraction = 0.0;
  double cyclist_factor_min = 2.0;
  double cyclist_factor_max = 3.0;
  double tau_min = 0.2;  // logistic ramp time constant, s
  double tau_max = 0.6;
  double piecewise_fraction = 0.5;  // share of transition scenes from the piecewise-acceleration family
  double noise_sigma = 0.02;        // m, per axis
  double jitter_speed_max = 0.1;    // m/s, standstill sway
  double turn_rate_max = 0.1;       // rad/s
  double speed_perturbation = 0.05;  // relative, Moving scenes
  double gait_amplitude_min = 0.03;  // relative speed oscillation at steady state
  double gait_amplitude_max = 0.08;
  double gait_frequency_min = 1.8;  // Hz
  double gait_frequency_max = 2.2;
  double lead_in = 1.0;   // s of standstill (walking, for stops) before a transition may begin
  double lead_out = 0.25;  // s kept after the end of a transition
  double latest_onset_before_end = 2.0;  // s; keeps transitions inside the evaluable part of a scene

  /// Throws ParameterError for out-of-range values or when duration_min cannot hold a transition.
  void validate() const;
  std::size_t total() const;
};

/// Noise-free motion of one scene. Velocity is analytic so positions can be checked by integration.
struct MotionProfile
{
  MotionState scene_class = MotionState::Waiting;
  RampFamily family = RampFamily::Logistic;
  double v_ss = 0.0;
  // logistic
  double tau = 0.0;
  double t0 = 0.0;
  // piecewise acceleration: speed is linear between knots (times, speeds), constant outside
  std::vector<double> knot_t;
  std::vector<double> knot_v;
  double gait_amplitude = 0.0;
  double gait_frequency = 0.0;
  double gait_phase = 0.0;
  double perturb_amplitude = 0.0;
  double perturb_frequency = 0.0;
  double perturb_phase = 0.0;
  double heading0 = 0.0;
  double turn_rate = 0.0;
  std::array<double, 3> jitter_amp_x{}, jitter_freq_x{}, jitter_phase_x{};
  std::array<double, 3> jitter_amp_y{}, jitter_freq_y{}, jitter_phase_y{};
  Eigen::Vector2d start = Eigen::Vector2d::Zero();

  /// Longitudinal speed without gait or perturbation.
  double ramp_speed(double t) const;
  double longitudinal_speed(double t) const;
  Eigen::Vector2d velocity(double t) const;
  double speed(double t) const { return velocity(t).norm(); }
  /// Times where the velocity is not smooth.
  std::vector<double> breakpoints() const;
  /// start + integral of velocity over [0, t].
  Eigen::Vector2d position(double t) const;
};

struct GeneratedScene
{
  Scene scene;
  MotionProfile profile;
  std::vector<Eigen::Vector2d> clean_positions;
};

/// Transition events of a noise-free profile by the labeling rules, on a 1 ms grid. The speed is the
/// mean over an observation `interval` centred on each grid point (0 = instantaneous speed).
SceneEvents profile_events(
  const MotionProfile & profile, double duration, const LabelOptions & options = {}, double interval = 0.02);

GeneratedScene generate_scene(const CorpusSpec & spec, MotionState scene_class, std::uint64_t seed,
                              const std::string & id);

/// Scenes interleaved by class; scene i of a class uses a seed derived from (seed, class, i).
std::vector<GeneratedScene> generate_corpus_detailed(const CorpusSpec & spec, std::uint64_t seed);
std::vector<Scene> generate_corpus(const CorpusSpec & spec, std::uint64_t seed);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace vru
