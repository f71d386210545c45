#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vru
{

/// Four-state motion model used for labels, classifier outputs and gating.
enum class MotionState : std::uint8_t { Waiting = 0, Starting = 1, Moving = 2, Stopping = 3 };

inline constexpr std::size_t kNumStates = 4;
inline constexpr std::array<MotionState, kNumStates> kAllStates{
  MotionState::Waiting, MotionState::Starting, MotionState::Moving, MotionState::Stopping};

std::string_view to_string(MotionState state);
MotionState parse_motion_state(std::string_view text);

inline constexpr std::size_t index_of(MotionState s) { return static_cast<std::size_t>(s); }

/// True for the self loops and the four neighbour transitions of the cyclic state model.
/// Waiting <-> Moving is rejected: a transition state always sits in between.
bool is_valid_transition(MotionState from, MotionState to);
bool is_valid_label_sequence(std::span<const MotionState> labels);

class InvariantError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error
{
public:
  ParseError(std::size_t line, const std::string & what);
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

struct Trajectory
{
  std::vector<double> t;                 // seconds, strictly increasing
  std::vector<Eigen::Vector2d> position;  // global frame, meters

  std::size_t size() const { return t.size(); }

  // Throws InvariantError. When nominal_dt > 0 the spacing must match it within 1e-6 s.
  void validate(double nominal_dt = 0.0) const;
};

struct SceneEvents
{
  std::optional<double> transition_start;
  std::optional<double> transition_end;
  std::optional<double> heel_off;
  std::optional<double> heel_down;

  bool empty() const
  {
    return !transition_start && !transition_end && !heel_off && !heel_down;
  }
  bool operator==(const SceneEvents &) const = default;
};

struct Scene
{
  std::string id;
  MotionState scene_class = MotionState::Waiting;
  double sample_rate_hz = 50.0;
  Trajectory trajectory;
  std::vector<MotionState> labels;
  SceneEvents events;

  double dt() const { return 1.0 / sample_rate_hz; }
  std::size_t size() const { return trajectory.size(); }

  /// Throws InvariantError naming the scene and the failed invariant.
  void validate() const;
};

/// Per-timestep ego frame: x_lon along the direction of motion.
struct EgoFrame
{
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double heading = 0.0;  // (-pi, pi]

  Eigen::Vector2d to_global(const Eigen::Vector2d & ego) const;
  Eigen::Vector2d to_ego(const Eigen::Vector2d & global) const;
};

struct VelocitySeries
{
  std::vector<double> v_lon;
  std::vector<double> v_lat;
  std::vector<double> speed;  // raw magnitude, before smoothing

  std::size_t size() const { return v_lon.size(); }
};

struct EgoKinematics
{
  VelocitySeries velocity;
  std::vector<EgoFrame> frames;
};

struct EgoOptions
{
  double alpha_lon = 0.3;
  double alpha_lat = 0.3;
  double heading_speed_floor = 0.15;  // m/s
  // Causal linear least-squares fits over the last N positions give the heading
  // direction (slope) and the frame origin (fit evaluated at the current step).
  std::size_t heading_window = 25;
  std::size_t anchor_window = 11;
};

/// First-order exponential smoothing, S_0 = y_0, S_k = a*y_k + (1-a)*S_{k-1}.
std::vector<double> smooth(std::span<const double> series, double alpha);

/// Backward-difference velocities rotated into the per-step ego frame and smoothed.
EgoKinematics ego_velocity(const Trajectory & trajectory, const EgoOptions & options = {});

/// Raw backward-difference speed |X_k - X_{k-1}| / dt with v_0 := v_1.
std::vector<double> raw_speed(const Trajectory & trajectory);

struct LabelOptions
{
  double start_thresh = 0.2;   // m/s
  double steady_frac = 0.8;
  double steady_window = 1.0;  // s, median window for the steady-state speed
  double peak_halfwidth = 0.1;  // s, a gait peak is the maximum within +-this
};

/// True iff values[k] is the first maximum of the values whose times lie within +-half_width of times[k].
bool is_window_peak(std::span<const double> values, std::span<const double> times, std::size_t k, double half_width);

struct LabelResult
{
  SceneEvents events;
  std::vector<MotionState> labels;
};

/// Derives transition events and per-step labels from the speed profile.
/// Starting/Stopping scenes get events; Waiting/Moving scenes keep their class.
LabelResult auto_label(const Scene & scene, const LabelOptions & options = {});

/// Label of a timestamp given transition events of a Starting or Stopping scene.
MotionState label_from_events(MotionState scene_class, const SceneEvents & events, double t);

enum class SceneFormat { Jsonl, Csv };

SceneFormat scene_format_from_path(const std::filesystem::path & path);

std::vector<Scene> read_scenes_jsonl(std::istream & in);
void write_scenes_jsonl(std::ostream & out, std::span<const Scene> scenes);

/// CSV rows `scene_id,t,x,y,state`; per-scene metadata and events come from a sidecar.
std::vector<Scene> read_scenes_csv(std::istream & rows, std::istream & sidecar);
void write_scenes_csv(std::ostream & rows, std::ostream & sidecar, std::span<const Scene> scenes);

/// Sidecar next to a CSV scene file: `<stem>.events.csv`.
std::filesystem::path csv_sidecar_path(const std::filesystem::path & csv_path);

std::vector<Scene> load_scenes(const std::filesystem::path & path, SceneFormat format);
std::vector<Scene> load_scenes(const std::filesystem::path & path);
void save_scenes(const std::filesystem::path & path, std::span<const Scene> scenes, SceneFormat format);
void save_scenes(const std::filesystem::path & path, std::span<const Scene> scenes);

}  // namespace vru
