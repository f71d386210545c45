#pragma once

#include "vru/trajdata.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vru
{

/// One polynomial sub-window, positioned relative to the current time.
struct WindowSpec
{
  double offset = 0.0;  // s, negative = past
  double length = 0.0;  // s
  int degree = 0;

  bool operator==(const WindowSpec &) const = default;
};

/// Sample range of a window relative to the current index.
/// Samples are assigned half-open [start, end); the last window of a layout is closed.
struct WindowSamples
{
  long first = 0;  // index offset relative to now
  std::size_t count = 0;
};

struct PolyConfig
{
  std::vector<WindowSpec> windows;
  int dims = 2;

  /// dims * sum(degree + 1)
  std::size_t feature_length() const;
  std::size_t coefficients_per_dim() const;

  /// Throws ParameterError when windows are empty, not contiguous, or have length <= 0.
  void validate() const;

  WindowSamples samples(std::size_t window, double dt) const;

  /// Stable text identity of the layout, stored in model files.
  std::string fingerprint() const;

  /// "offset_ms:length_ms:degree,..." as used in run configuration files.
  std::string to_text() const;
  static PolyConfig parse(const std::string & text, int dims = 2);

  /// 800 ms + 200 ms, degree 3, ending at the current sample.
  static PolyConfig default_input();
  /// Five consecutive 500 ms windows, degree 2, covering the 2.5 s horizon.
  static PolyConfig default_output();

  bool operator==(const PolyConfig &) const = default;
};

/// Discrete orthonormal (Gram) polynomials on n equispaced samples mapped to u in [-1, 1].
class OrthoBasis
{
public:
  OrthoBasis(std::size_t n_samples, int degree);

  std::size_t n_samples() const { return n_; }
  int degree() const { return degree_; }

  /// (degree+1) x n matrix; row j is the degree-j polynomial sampled at the window points.
  const Eigen::MatrixXd & rows() const { return rows_; }

  /// Value of basis polynomial j at a continuous sample position s (0 = first sample).
  double evaluate(int j, double sample_pos) const;

private:
  std::size_t n_;
  int degree_;
  Eigen::MatrixXd rows_;
  Eigen::MatrixXd monomial_;  // row j: coefficients of u^0..u^degree
};

/// Cached basis; safe for concurrent lookup. Throws ParameterError if degree >= n_samples.
const OrthoBasis & orth_basis(std::size_t n_samples, int degree);

/// Orthonormal-expansion coefficients of one window (coefficient 0 = mean * sqrt(n)).
Eigen::VectorXd fit_window(std::span<const double> samples, int degree);

/// Feature vector ordered (dimension, window, degree index).
using FeatureVector = Eigen::VectorXd;

/// Fits every window of `config` over `series` (one series per dimension) around `now`.
/// Returns nullopt when a window reaches outside [0, series length).
std::optional<Eigen::VectorXd> fit_series(
  std::span<const std::span<const double>> series, const PolyConfig & config, std::size_t now, double dt);

/// Input features from ego velocities (v_lon, v_lat). nullopt = pattern unavailable.
std::optional<FeatureVector> extract_features(
  const VelocitySeries & velocity, const PolyConfig & config, std::size_t now_index, double dt);

/// Evaluates the window polynomials at query times (seconds relative to now).
/// A time on a window boundary belongs to the earlier window. Result: rows = dims, cols = queries.
Eigen::MatrixXd reconstruct_series(
  const Eigen::VectorXd & coefficients, const PolyConfig & config, std::span<const double> query_times,
  double dt);

}  // namespace vru
