#include "vru/trajdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace vru
{

namespace
{

double wrap_heading(double angle)
{
  // atan2 already lands in [-pi, pi]; the frame convention excludes -pi.
  if (angle <= -std::numbers::pi) {
    return angle + 2.0 * std::numbers::pi;
  }
  return angle;
}

struct LineFit
{
  Eigen::Vector2d value;  // fit evaluated at the newest sample
  Eigen::Vector2d slope;
};

// Least-squares line through positions[first..last], centered on the newest sample.
LineFit fit_line(const Trajectory & traj, std::size_t first, std::size_t last)
{
  const std::size_t n = last - first + 1;
  const Eigen::Vector2d ref = traj.position[last];
  if (n == 1) {
    return {ref, Eigen::Vector2d::Zero()};
  }
  double mean_t = 0.0;
  Eigen::Vector2d mean_p = Eigen::Vector2d::Zero();
  for (std::size_t i = first; i <= last; ++i) {
    mean_t += traj.t[i] - traj.t[last];
    mean_p += traj.position[i] - ref;
  }
  mean_t /= static_cast<double>(n);
  mean_p /= static_cast<double>(n);
  double stt = 0.0;
  Eigen::Vector2d stp = Eigen::Vector2d::Zero();
  for (std::size_t i = first; i <= last; ++i) {
    const double dt = traj.t[i] - traj.t[last] - mean_t;
    stt += dt * dt;
    stp += dt * (traj.position[i] - ref - mean_p);
  }
  const Eigen::Vector2d slope = stp / stt;
  return {ref + mean_p + slope * (0.0 - mean_t), slope};
}

std::vector<double> midpoint_times(const Trajectory & traj)
{
  std::vector<double> mid(traj.size());
  for (std::size_t k = 1; k < traj.size(); ++k) {
    mid[k] = 0.5 * (traj.t[k] + traj.t[k - 1]);
  }
  mid[0] = traj.size() > 1 ? mid[1] - (traj.t[1] - traj.t[0]) : traj.t[0];
  return mid;
}

double crossing_time(
  const std::vector<double> & speed, const std::vector<double> & mid, std::size_t k, double level)
{
  const double s0 = speed[k - 1];
  const double s1 = speed[k];
  const double frac = (s1 == s0) ? 1.0 : (level - s0) / (s1 - s0);
  return mid[k - 1] + frac * (mid[k] - mid[k - 1]);
}

double median_in(const std::vector<double> & values, const std::vector<double> & t, double lo, double hi)
{
  std::vector<double> window;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] >= lo && t[k] <= hi) {
      window.push_back(values[k]);
    }
  }
  if (window.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  std::nth_element(window.begin(), mid, window.end());
  return *mid;
}

double clamp_to_range(double t, const Trajectory & traj)
{
  return std::clamp(t, traj.t.front(), traj.t.back());
}

SceneEvents label_starting(const Scene & scene, const std::vector<double> & speed, const LabelOptions & opt)
{
  const auto & traj = scene.trajectory;
  const auto mid = midpoint_times(traj);
  const std::size_t n = speed.size();

  std::size_t k_start = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (speed[k - 1] <= opt.start_thresh && speed[k] > opt.start_thresh) {
      k_start = k;
      break;
    }
  }
  SceneEvents ev;
  if (k_start == 0) {
    return ev;
  }
  ev.transition_start = clamp_to_range(crossing_time(speed, mid, k_start, opt.start_thresh), traj);

  double steady = median_in(speed, traj.t, traj.t.back() - opt.steady_window, traj.t.back());
  std::optional<std::size_t> k_end;
  for (int iter = 0; iter < 5; ++iter) {
    std::optional<std::size_t> k_steady;
    for (std::size_t k = k_start; k < n; ++k) {
      if (speed[k] > opt.steady_frac * steady) {
        k_steady = k;
        break;
      }
    }
    std::optional<std::size_t> found;
    if (k_steady) {
      for (std::size_t k = std::max<std::size_t>(*k_steady, 1); k + 1 < n; ++k) {
        if (is_window_peak(speed, mid, k, opt.peak_halfwidth)) {
          found = k;
          break;
        }
      }
    }
    if (found == k_end && iter > 0) {
      break;
    }
    k_end = found;
    if (!k_end) {
      break;
    }
    const double next = median_in(speed, traj.t, mid[*k_end], mid[*k_end] + opt.steady_window);
    if (!std::isfinite(next)) {
      break;
    }
    steady = next;
  }
  if (k_end) {
    const double t_end = clamp_to_range(mid[*k_end], traj);
    if (t_end > *ev.transition_start) {
      ev.transition_end = t_end;
    }
  }
  ev.heel_off = ev.transition_start;
  return ev;
}

SceneEvents label_stopping(const Scene & scene, const std::vector<double> & speed, const LabelOptions & opt)
{
  const auto & traj = scene.trajectory;
  const auto mid = midpoint_times(traj);
  const std::size_t n = speed.size();

  std::size_t k_end = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (speed[k - 1] >= opt.start_thresh && speed[k] < opt.start_thresh) {
      k_end = k;
      break;
    }
  }
  SceneEvents ev;
  if (k_end == 0) {
    return ev;
  }
  ev.transition_end = clamp_to_range(crossing_time(speed, mid, k_end, opt.start_thresh), traj);

  double steady = median_in(speed, traj.t, traj.t.front(), traj.t.front() + opt.steady_window);
  std::optional<std::size_t> k_start;
  for (int iter = 0; iter < 5; ++iter) {
    const double level = opt.steady_frac * steady;
    std::optional<std::size_t> k_drop;
    for (std::size_t k = k_end; k >= 1; --k) {
      if (speed[k - 1] >= level && speed[k] < level) {
        k_drop = k;
        break;
      }
    }
    std::optional<std::size_t> found;
    if (k_drop) {
      for (std::size_t k = std::min(*k_drop, n - 2); k >= 1; --k) {
        if (is_window_peak(speed, mid, k, opt.peak_halfwidth)) {
          found = k;
          break;
        }
      }
    }
    if (found == k_start && iter > 0) {
      break;
    }
    k_start = found;
    if (!k_start) {
      break;
    }
    const double prev = median_in(speed, traj.t, mid[*k_start] - opt.steady_window, mid[*k_start]);
    if (!std::isfinite(prev)) {
      break;
    }
    steady = prev;
  }
  if (k_start) {
    const double t_start = clamp_to_range(mid[*k_start], traj);
    if (t_start < *ev.transition_end) {
      ev.transition_start = t_start;
    }
  }
  ev.heel_down = ev.transition_end;
  return ev;
}

}  // namespace

bool is_window_peak(std::span<const double> values, std::span<const double> times, std::size_t k, double half_width)
{
  for (std::size_t j = k; j-- > 0 && times[k] - times[j] <= half_width + 1e-9;) {
    if (values[j] >= values[k]) {
      return false;
    }
  }
  for (std::size_t j = k + 1; j < values.size() && times[j] - times[k] <= half_width + 1e-9; ++j) {
    if (values[j] > values[k]) {
      return false;
    }
  }
  return true;
}

ParseError::ParseError(std::size_t line, const std::string & what)
: std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
{
}

std::string_view to_string(MotionState state)
{
  switch (state) {
    case MotionState::Waiting:
      return "Waiting";
    case MotionState::Starting:
      return "Starting";
    case MotionState::Moving:
      return "Moving";
    case MotionState::Stopping:
      return "Stopping";
  }
  return "?";
}

MotionState parse_motion_state(std::string_view text)
{
  for (auto s : kAllStates) {
    if (text == to_string(s)) {
      return s;
    }
  }
  throw ParameterError("unknown motion state '" + std::string(text) + "'");
}

bool is_valid_transition(MotionState from, MotionState to)
{
  if (from == to) {
    return true;
  }
  const auto a = index_of(from);
  const auto b = index_of(to);
  return (a + 1) % kNumStates == b || (b + 1) % kNumStates == a;
}

bool is_valid_label_sequence(std::span<const MotionState> labels)
{
  for (std::size_t k = 1; k < labels.size(); ++k) {
    if (!is_valid_transition(labels[k - 1], labels[k])) {
      return false;
    }
  }
  return true;
}

void Trajectory::validate(double nominal_dt) const
{
  if (t.size() != position.size()) {
    throw InvariantError("timestamp and position counts differ");
  }
  if (t.size() < 2) {
    throw InvariantError("trajectory needs at least 2 samples");
  }
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!std::isfinite(t[k]) || !position[k].allFinite()) {
      throw InvariantError("non-finite sample at index " + std::to_string(k));
    }
    if (k > 0) {
      const double dt = t[k] - t[k - 1];
      if (!(dt > 0.0)) {
        throw InvariantError("timestamps not strictly increasing at index " + std::to_string(k));
      }
      if (nominal_dt > 0.0 && std::abs(dt - nominal_dt) >= 1e-6) {
        throw InvariantError("non-uniform sampling at index " + std::to_string(k));
      }
    }
  }
}

void Scene::validate() const
{
  auto fail = [this](const std::string & what) {
    throw InvariantError("scene '" + id + "': " + what);
  };
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    fail("sample rate must be positive");
  }
  try {
    trajectory.validate(dt());
  } catch (const InvariantError & e) {
    fail(e.what());
  }
  if (labels.size() != trajectory.size()) {
    fail("state label count " + std::to_string(labels.size()) + " differs from trajectory length " +
         std::to_string(trajectory.size()));
  }
  const double t0 = trajectory.t.front();
  const double t1 = trajectory.t.back();
  for (const auto & ev : {events.transition_start, events.transition_end, events.heel_off, events.heel_down}) {
    if (ev && (*ev < t0 || *ev > t1)) {
      fail("event time outside the timestamp range");
    }
  }
  if (events.transition_start && events.transition_end && !(*events.transition_start < *events.transition_end)) {
    fail("transition_start must precede transition_end");
  }
}

Eigen::Vector2d EgoFrame::to_global(const Eigen::Vector2d & ego) const
{
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return origin + Eigen::Vector2d(c * ego.x() - s * ego.y(), s * ego.x() + c * ego.y());
}

Eigen::Vector2d EgoFrame::to_ego(const Eigen::Vector2d & global) const
{
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const Eigen::Vector2d d = global - origin;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

std::vector<double> smooth(std::span<const double> series, double alpha)
{
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ParameterError("smoothing factor must lie in (0, 1]");
  }
  std::vector<double> out(series.size());
  if (series.empty()) {
    return out;
  }
  out[0] = series[0];
  for (std::size_t k = 1; k < series.size(); ++k) {
    out[k] = alpha * series[k] + (1.0 - alpha) * out[k - 1];
  }
  return out;
}

std::vector<double> raw_speed(const Trajectory & trajectory)
{
  const std::size_t n = trajectory.size();
  if (n < 2) {
    throw InvariantError("trajectory needs at least 2 samples");
  }
  std::vector<double> speed(n);
  for (std::size_t k = 1; k < n; ++k) {
    speed[k] = (trajectory.position[k] - trajectory.position[k - 1]).norm() /
               (trajectory.t[k] - trajectory.t[k - 1]);
  }
  speed[0] = speed[1];
  return speed;
}

EgoKinematics ego_velocity(const Trajectory & trajectory, const EgoOptions & options)
{
  const std::size_t n = trajectory.size();
  if (n < 2) {
    throw InvariantError("trajectory needs at least 2 samples");
  }
  if (options.heading_window < 2 || options.anchor_window < 1) {
    throw ParameterError("heading_window must be >= 2 and anchor_window >= 1");
  }

  std::vector<Eigen::Vector2d> v(n);
  for (std::size_t k = 1; k < n; ++k) {
    v[k] = (trajectory.position[k] - trajectory.position[k - 1]) / (trajectory.t[k] - trajectory.t[k - 1]);
  }
  v[0] = v[1];

  EgoKinematics out;
  out.frames.resize(n);
  std::vector<double> lon(n), lat(n);
  out.velocity.speed.resize(n);

  double heading = 0.0;
  bool floor_reached = false;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t h_first = k + 1 >= options.heading_window ? k + 1 - options.heading_window : 0;
    Eigen::Vector2d direction = fit_line(trajectory, h_first, k).slope;
    if (k == 0) {
      direction = v[0];
    }
    const double fitted_speed = direction.norm();
    if (fitted_speed >= options.heading_speed_floor) {
      heading = wrap_heading(std::atan2(direction.y(), direction.x()));
      floor_reached = true;
    } else if (!floor_reached && fitted_speed > 0.0) {
      // Not yet moving: follow the fitted direction so the frame stays rotation-equivariant.
      heading = wrap_heading(std::atan2(direction.y(), direction.x()));
    }

    const std::size_t a_first = k + 1 >= options.anchor_window ? k + 1 - options.anchor_window : 0;
    out.frames[k].origin = fit_line(trajectory, a_first, k).value;
    out.frames[k].heading = heading;

    const double c = std::cos(heading);
    const double s = std::sin(heading);
    lon[k] = c * v[k].x() + s * v[k].y();
    lat[k] = -s * v[k].x() + c * v[k].y();
    out.velocity.speed[k] = v[k].norm();
  }
  out.velocity.v_lon = smooth(lon, options.alpha_lon);
  out.velocity.v_lat = smooth(lat, options.alpha_lat);
  return out;
}

MotionState label_from_events(MotionState scene_class, const SceneEvents & events, double t)
{
  if (scene_class == MotionState::Starting && events.transition_start) {
    if (t < *events.transition_start) {
      return MotionState::Waiting;
    }
    if (!events.transition_end || t < *events.transition_end) {
      return MotionState::Starting;
    }
    return MotionState::Moving;
  }
  if (scene_class == MotionState::Stopping && events.transition_end) {
    if (t >= *events.transition_end) {
      return MotionState::Waiting;
    }
    if (!events.transition_start || t >= *events.transition_start) {
      return MotionState::Stopping;
    }
    return MotionState::Moving;
  }
  return scene_class;
}

LabelResult auto_label(const Scene & scene, const LabelOptions & options)
{
  const auto speed = raw_speed(scene.trajectory);
  LabelResult result;
  if (scene.scene_class == MotionState::Starting) {
    result.events = label_starting(scene, speed, options);
  } else if (scene.scene_class == MotionState::Stopping) {
    result.events = label_stopping(scene, speed, options);
  }
  result.labels.reserve(scene.size());
  const bool transition = scene.scene_class == MotionState::Starting || scene.scene_class == MotionState::Stopping;
  if (transition && result.events.empty()) {
    // No transition found: the whole scene is one steady state.
    const double med = median_in(speed, scene.trajectory.t, scene.trajectory.t.front(), scene.trajectory.t.back());
    result.labels.assign(scene.size(), med < options.start_thresh ? MotionState::Waiting : MotionState::Moving);
    return result;
  }
  for (double t : scene.trajectory.t) {
    result.labels.push_back(label_from_events(scene.scene_class, result.events, t));
  }
  return result;
}

}  // namespace vru
