#include "vru/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

namespace vru
{

namespace
{

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 5-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 5> kGlNodes{
  -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGlWeights{
  0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665, 0.2369268850561891};

Eigen::Vector2d integrate_smooth(const MotionProfile & p, double a, double b)
{
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
    sum += kGlWeights[i] * p.velocity(mid + half * kGlNodes[i]);
  }
  return half * sum;
}

// Splits [a, b] at the profile's kinks so each piece is smooth.
Eigen::Vector2d integrate(const MotionProfile & p, const std::vector<double> & breaks, double a, double b)
{
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  double lo = a;
  for (double k : breaks) {
    if (k > lo && k < b) {
      sum += integrate_smooth(p, lo, k);
      lo = k;
    }
  }
  return sum + integrate_smooth(p, lo, b);
}

double jitter_component(const std::array<double, 3> & amp, const std::array<double, 3> & freq,
                        const std::array<double, 3> & phase, double t)
{
  double v = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double w = kTwoPi * freq[i];
    v += amp[i] * w * std::cos(w * t + phase[i]);
  }
  return v;
}

double median_of(std::vector<double> v)
{
  if (v.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

class Rng
{
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(gen_); }

private:
  std::mt19937_64 gen_;
};

// Worst-case time from the first threshold crossing to the local maximum that ends a transition.
double worst_transition_span(const CorpusSpec & spec)
{
  const double v_max = spec.speed_max * (spec.cyclist_fraction > 0.0 ? spec.cyclist_factor_max : 1.0);
  const double logistic = spec.tau_max * (std::log(std::max(v_max / 0.2 - 1.0, 1.0)) + std::log(4.0));
  const double piecewise = 3.5 * spec.tau_max;
  return std::max(logistic, piecewise) + 1.0 / spec.gait_frequency_min;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void CorpusSpec::validate() const
{
  const auto bad = [](const std::string & what) { throw ParameterError("corpus spec: " + what); };
  if (!(duration_min > 0.0) || !(duration_max >= duration_min)) {
    bad("durations must satisfy 0 < duration_min <= duration_max");
  }
  if (!(sample_rate_hz > 0.0)) {
    bad("sample rate must be positive");
  }
  if (!(speed_min > 0.2) || !(speed_max >= speed_min)) {
    bad("steady speeds must exceed the 0.2 m/s start threshold and be ordered");
  }
  if (!(cyclist_fraction >= 0.0 && cyclist_fraction <= 1.0) || !(cyclist_factor_min >= 1.0) ||
      !(cyclist_factor_max >= cyclist_factor_min)) {
    bad("cyclist settings out of range");
  }
  if (!(tau_min > 0.0) || !(tau_max >= tau_min)) {
    bad("ramp time constants must satisfy 0 < tau_min <= tau_max");
  }
  if (!(piecewise_fraction >= 0.0 && piecewise_fraction <= 1.0)) {
    bad("piecewise_fraction must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0) || !(turn_rate_max >= 0.0) || !(speed_perturbation >= 0.0 && speed_perturbation < 0.5)) {
    bad("noise, turn rate or speed perturbation out of range");
  }
  if (!(jitter_speed_max >= 0.0 && jitter_speed_max < 0.2)) {
    bad("standstill jitter must stay below the 0.2 m/s start threshold");
  }
  if (!(gait_amplitude_min >= 0.0) || !(gait_amplitude_max >= gait_amplitude_min) || !(gait_amplitude_max < 0.5) ||
      !(gait_frequency_min > 0.0) || !(gait_frequency_max >= gait_frequency_min)) {
    bad("gait settings out of range");
  }
  if (!(lead_in >= 0.0) || !(lead_out >= 0.0) || !(latest_onset_before_end >= 0.0)) {
    bad("lead times must be non-negative");
  }
  const double needed = lead_in + worst_transition_span(*this) + lead_out;
  const bool transitions = counts[index_of(MotionState::Starting)] > 0 || counts[index_of(MotionState::Stopping)] > 0;
  if (transitions && duration_min < needed) {
    bad("duration_min " + std::to_string(duration_min) + " s is too short for a transition (needs " +
        std::to_string(needed) + " s)");
  }
}

std::size_t CorpusSpec::total() const
{
  std::size_t n = 0;
  for (auto c : counts) {
    n += c;
  }
  return n;
}

double MotionProfile::ramp_speed(double t) const
{
  switch (scene_class) {
    case MotionState::Waiting:
      return 0.0;
    case MotionState::Moving:
      return v_ss;
    case MotionState::Starting:
    case MotionState::Stopping:
      break;
  }
  if (family == RampFamily::Logistic) {
    const double u = (t - t0) / tau;
    return scene_class == MotionState::Starting ? v_ss / (1.0 + std::exp(-u)) : v_ss / (1.0 + std::exp(u));
  }
  if (t <= knot_t.front()) {
    return knot_v.front();
  }
  if (t >= knot_t.back()) {
    return knot_v.back();
  }
  const auto it = std::upper_bound(knot_t.begin(), knot_t.end(), t);
  const auto i = static_cast<std::size_t>(it - knot_t.begin());
  const double f = (t - knot_t[i - 1]) / (knot_t[i] - knot_t[i - 1]);
  return knot_v[i - 1] + f * (knot_v[i] - knot_v[i - 1]);
}

double MotionProfile::longitudinal_speed(double t) const
{
  const double base = ramp_speed(t);
  if (base == 0.0) {
    return 0.0;
  }
  const double progress = base / v_ss;
  const double gait = 1.0 + gait_amplitude * progress * std::sin(kTwoPi * gait_frequency * t + gait_phase);
  const double perturb = 1.0 + perturb_amplitude * std::sin(kTwoPi * perturb_frequency * t + perturb_phase);
  return base * gait * perturb;
}

Eigen::Vector2d MotionProfile::velocity(double t) const
{
  const double s = longitudinal_speed(t);
  const double h = heading0 + turn_rate * t;
  return {s * std::cos(h) + jitter_component(jitter_amp_x, jitter_freq_x, jitter_phase_x, t),
          s * std::sin(h) + jitter_component(jitter_amp_y, jitter_freq_y, jitter_phase_y, t)};
}

std::vector<double> MotionProfile::breakpoints() const
{
  if (family == RampFamily::PiecewiseAccel &&
      (scene_class == MotionState::Starting || scene_class == MotionState::Stopping)) {
    return knot_t;
  }
  return {};
}

Eigen::Vector2d MotionProfile::position(double t) const
{
  const auto breaks = breakpoints();
  const auto pieces = static_cast<std::size_t>(std::ceil(t / 0.01));
  Eigen::Vector2d sum = start;
  for (std::size_t i = 0; i < pieces; ++i) {
    const double a = t * static_cast<double>(i) / static_cast<double>(pieces);
    const double b = t * static_cast<double>(i + 1) / static_cast<double>(pieces);
    sum += integrate(*this, breaks, a, b);
  }
  return sum;
}

SceneEvents profile_events(const MotionProfile & profile, double duration, const LabelOptions & options, double interval)
{
  const double start_thresh = options.start_thresh;
  const double steady_frac = options.steady_frac;
  const double steady_window = options.steady_window;
  SceneEvents ev;
  if (profile.scene_class != MotionState::Starting && profile.scene_class != MotionState::Stopping) {
    return ev;
  }
  constexpr double h = 1e-3;
  const auto n = static_cast<std::size_t>(std::floor(duration / h)) + 1;
  std::vector<double> t(n);
  std::vector<double> s(n);
  const auto half = static_cast<std::size_t>(std::lround(0.5 * interval / h));
  if (half == 0) {
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<double>(i) * h;
      s[i] = profile.speed(t[i]);
    }
  } else {
    // Mean speed over an observation interval centred on each grid point, as seen by a sampled sensor.
    const auto breaks = profile.breakpoints();
    std::vector<Eigen::Vector2d> pos(n + 2 * half);
    pos[0] = Eigen::Vector2d::Zero();
    for (std::size_t j = 1; j < pos.size(); ++j) {
      const double a = (static_cast<double>(j) - 1.0 - static_cast<double>(half)) * h;
      pos[j] = pos[j - 1] + integrate(profile, breaks, a, a + h);
    }
    const double width = 2.0 * static_cast<double>(half) * h;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<double>(i) * h;
      s[i] = (pos[i + 2 * half] - pos[i]).norm() / width;
    }
  }
  const auto bisect = [&](std::size_t k, double level) {
    // linear interpolation between grid points k-1 and k
    const double f = (level - s[k - 1]) / (s[k] - s[k - 1]);
    return t[k - 1] + std::clamp(f, 0.0, 1.0) * h;
  };
  const auto median_between = [&](double lo, double hi) {
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] >= lo && t[i] <= hi) {
        w.push_back(s[i]);
      }
    }
    return median_of(std::move(w));
  };

  if (profile.scene_class == MotionState::Starting) {
    std::size_t k_start = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (s[i - 1] <= start_thresh && s[i] > start_thresh) {
        k_start = i;
        break;
      }
    }
    if (k_start == 0) {
      return ev;
    }
    ev.transition_start = bisect(k_start, start_thresh);
    double steady = median_between(duration - steady_window, duration);
    std::optional<std::size_t> k_end;
    for (int iter = 0; iter < 5; ++iter) {
      std::optional<std::size_t> found;
      for (std::size_t i = k_start; i + 1 < n; ++i) {
        if (s[i] > steady_frac * steady) {
          for (std::size_t j = i; j + 1 < n; ++j) {
            if (is_window_peak(s, t, j, options.peak_halfwidth)) {
              found = j;
              break;
            }
          }
          break;
        }
      }
      if (found == k_end && iter > 0) {
        break;
      }
      k_end = found;
      if (!k_end) {
        break;
      }
      const double next = median_between(t[*k_end], t[*k_end] + steady_window);
      if (!std::isfinite(next)) {
        break;
      }
      steady = next;
    }
    if (k_end) {
      ev.transition_end = t[*k_end];
    }
    ev.heel_off = ev.transition_start;
    return ev;
  }

  std::size_t k_end = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (s[i - 1] >= start_thresh && s[i] < start_thresh) {
      k_end = i;
      break;
    }
  }
  if (k_end == 0) {
    return ev;
  }
  ev.transition_end = bisect(k_end, start_thresh);
  double steady = median_between(0.0, steady_window);
  std::optional<std::size_t> k_start;
  for (int iter = 0; iter < 5; ++iter) {
    const double level = steady_frac * steady;
    std::optional<std::size_t> found;
    for (std::size_t i = k_end; i >= 1; --i) {
      if (s[i - 1] >= level && s[i] < level) {
        for (std::size_t j = std::min(i, n - 2); j >= 1; --j) {
          if (is_window_peak(s, t, j, options.peak_halfwidth)) {
            found = j;
            break;
          }
        }
        break;
      }
    }
    if (found == k_start && iter > 0) {
      break;
    }
    k_start = found;
    if (!k_start) {
      break;
    }
    const double prev = median_between(t[*k_start] - steady_window, t[*k_start]);
    if (!std::isfinite(prev)) {
      break;
    }
    steady = prev;
  }
  if (k_start && t[*k_start] < *ev.transition_end) {
    ev.transition_start = t[*k_start];
  }
  ev.heel_down = ev.transition_end;
  return ev;
}

GeneratedScene generate_scene(const CorpusSpec & spec, MotionState scene_class, std::uint64_t seed,
                              const std::string & id)
{
  Rng rng(seed);
  const double dt = 1.0 / spec.sample_rate_hz;
  const double drawn = rng.uniform(spec.duration_min, spec.duration_max);
  const auto n = static_cast<std::size_t>(std::floor(drawn / dt + 1e-9)) + 1;
  const double duration = static_cast<double>(n - 1) * dt;

  MotionProfile p;
  p.scene_class = scene_class;
  const bool cyclist = rng.uniform(0.0, 1.0) < spec.cyclist_fraction;
  const double factor = cyclist ? rng.uniform(spec.cyclist_factor_min, spec.cyclist_factor_max) : 1.0;
  p.start = Eigen::Vector2d(rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0));
  p.heading0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
  p.turn_rate = rng.uniform(-spec.turn_rate_max, spec.turn_rate_max);

  // Sway: three sinusoids per axis whose speed amplitudes add up to at most jitter_speed_max / sqrt(2).
  const auto draw_jitter = [&](std::array<double, 3> & amp, std::array<double, 3> & freq,
                               std::array<double, 3> & phase) {
    const double budget = rng.uniform(0.3, 1.0) * spec.jitter_speed_max / std::numbers::sqrt2;
    std::array<double, 3> w{};
    double w_sum = 0.0;
    for (auto & x : w) {
      x = rng.uniform(0.2, 1.0);
      w_sum += x;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      freq[i] = rng.uniform(0.2, 1.5);
      phase[i] = rng.uniform(0.0, kTwoPi);
      amp[i] = budget * w[i] / w_sum / (kTwoPi * freq[i]);
    }
  };
  draw_jitter(p.jitter_amp_x, p.jitter_freq_x, p.jitter_phase_x);
  draw_jitter(p.jitter_amp_y, p.jitter_freq_y, p.jitter_phase_y);

  p.gait_amplitude = cyclist ? 0.0 : rng.uniform(spec.gait_amplitude_min, spec.gait_amplitude_max);
  p.gait_frequency = rng.uniform(spec.gait_frequency_min, spec.gait_frequency_max);
  p.gait_phase = rng.uniform(0.0, kTwoPi);

  if (scene_class == MotionState::Moving) {
    p.perturb_amplitude = rng.uniform(0.0, spec.speed_perturbation);
    p.perturb_frequency = rng.uniform(0.1, 0.3);
    p.perturb_phase = rng.uniform(0.0, kTwoPi);
    // Keep the instantaneous speed envelope inside the configured range.
    const double swing = p.gait_amplitude + p.perturb_amplitude + p.gait_amplitude * p.perturb_amplitude;
    const double lo = (spec.speed_min * factor + spec.jitter_speed_max) / (1.0 - swing);
    const double hi = (spec.speed_max * factor - spec.jitter_speed_max) / (1.0 + swing);
    p.v_ss = lo < hi ? rng.uniform(lo, hi) : 0.5 * (spec.speed_min + spec.speed_max) * factor;
  } else if (scene_class == MotionState::Starting || scene_class == MotionState::Stopping) {
    p.v_ss = rng.uniform(spec.speed_min, spec.speed_max) * factor;
    p.family = rng.uniform(0.0, 1.0) < spec.piecewise_fraction ? RampFamily::PiecewiseAccel : RampFamily::Logistic;
    const double tau = rng.uniform(spec.tau_min, spec.tau_max);
    const double peak_delay = 1.0 / p.gait_frequency;
    const bool starting = scene_class == MotionState::Starting;
    // lead: onset (first moment of the transition) -> reference time of the profile;
    // span: onset -> end of the transition including the closing gait peak.
    double lead = 0.0;
    double span = 0.0;
    double T = 0.0;
    double d1 = 0.0;
    double g = 0.0;
    if (p.family == RampFamily::Logistic) {
      p.tau = tau;
      const double rise = tau * std::log(p.v_ss / 0.2 - 1.0);  // 0.2 m/s crossing -> midpoint
      const double to80 = tau * std::log(4.0);                  // midpoint -> 80 %
      if (starting) {
        lead = rise;
        span = rise + to80 + peak_delay;
      } else {
        lead = to80 + peak_delay;
        span = to80 + peak_delay + rise;
      }
    } else {
      T = 3.5 * tau;
      d1 = rng.uniform(0.3, 0.6) * T;
      g = rng.uniform(0.5, 0.8);
      span = T + peak_delay;
      lead = starting ? 0.0 : peak_delay;
    }
    const double lo = spec.lead_in;
    const double hi = std::min(duration - spec.latest_onset_before_end, duration - span - spec.lead_out);
    if (hi < lo) {
      throw ParameterError("scene '" + id + "' is too short for its transition");
    }
    const double onset = rng.uniform(lo, hi);
    if (p.family == RampFamily::Logistic) {
      p.t0 = onset + lead;
    } else if (starting) {
      p.knot_t = {onset, onset + d1, onset + T};
      p.knot_v = {0.0, g * p.v_ss, p.v_ss};
    } else {
      const double a = onset + lead;
      p.knot_t = {a, a + T - d1, a + T};
      p.knot_v = {p.v_ss, g * p.v_ss, 0.0};
    }
  }

  GeneratedScene out;
  out.profile = p;
  out.scene.id = id;
  out.scene.scene_class = scene_class;
  out.scene.sample_rate_hz = spec.sample_rate_hz;
  out.scene.trajectory.t.resize(n);
  out.scene.trajectory.position.resize(n);
  out.clean_positions.resize(n);
  const auto breaks = p.breakpoints();
  Eigen::Vector2d pos = p.start;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k > 0) {
      pos += integrate(p, breaks, static_cast<double>(k - 1) * dt, t);
    }
    out.scene.trajectory.t[k] = t;
    out.clean_positions[k] = pos;
  }
  for (std::size_t k = 0; k < n; ++k) {
    out.scene.trajectory.position[k] = out.clean_positions[k];
    if (spec.noise_sigma > 0.0) {
      out.scene.trajectory.position[k] += Eigen::Vector2d(rng.normal(spec.noise_sigma), rng.normal(spec.noise_sigma));
    }
  }
  out.scene.events = profile_events(p, duration, LabelOptions{}, dt);
  out.scene.labels.reserve(n);
  for (double t : out.scene.trajectory.t) {
    out.scene.labels.push_back(label_from_events(scene_class, out.scene.events, t));
  }
  out.scene.validate();
  return out;
}

std::vector<GeneratedScene> generate_corpus_detailed(const CorpusSpec & spec, std::uint64_t seed)
{
  spec.validate();
  std::vector<GeneratedScene> out;
  out.reserve(spec.total());
  const std::size_t rounds = *std::max_element(spec.counts.begin(), spec.counts.end());
  for (std::size_t i = 0; i < rounds; ++i) {
    for (MotionState c : kAllStates) {
      if (i >= spec.counts[index_of(c)]) {
        continue;
      }
      const std::uint64_t scene_seed = splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(index_of(c)) << 32) ^ i);
      char id[64];
      std::snprintf(id, sizeof id, "syn-%s-%04zu", std::string(to_string(c)).c_str(), i);
      out.push_back(generate_scene(spec, c, scene_seed, id));
    }
  }
  return out;
}

std::vector<Scene> generate_corpus(const CorpusSpec & spec, std::uint64_t seed)
{
  auto detailed = generate_corpus_detailed(spec, seed);
  std::vector<Scene> out;
  out.reserve(detailed.size());
  for (auto & g : detailed) {
    out.push_back(std::move(g.scene));
  }
  return out;
}

}  // namespace vru
