#include "vru/polyfeat.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>

namespace vru
{

namespace
{

constexpr double kTimeTol = 1e-9;

std::string format_ms(double seconds)
{
  std::ostringstream os;
  os.precision(10);
  os << seconds * 1000.0;
  return os.str();
}

}  // namespace

std::size_t PolyConfig::coefficients_per_dim() const
{
  std::size_t n = 0;
  for (const auto & w : windows) {
    n += static_cast<std::size_t>(w.degree + 1);
  }
  return n;
}

std::size_t PolyConfig::feature_length() const
{
  return static_cast<std::size_t>(dims) * coefficients_per_dim();
}

void PolyConfig::validate() const
{
  if (windows.empty()) {
    throw ParameterError("polynomial layout needs at least one window");
  }
  if (dims < 1) {
    throw ParameterError("polynomial layout needs at least one dimension");
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!(windows[i].length > 0.0)) {
      throw ParameterError("window length must be positive");
    }
    if (windows[i].degree < 0) {
      throw ParameterError("window degree must be non-negative");
    }
    if (i > 0 && std::abs(windows[i - 1].offset + windows[i - 1].length - windows[i].offset) > kTimeTol) {
      throw ParameterError("windows must be consecutive and non-overlapping");
    }
  }
}

WindowSamples PolyConfig::samples(std::size_t window, double dt) const
{
  const auto & w = windows.at(window);
  const long first = std::lround(w.offset / dt);
  const long end = std::lround((w.offset + w.length) / dt);
  const bool last = window + 1 == windows.size();
  const long count = end - first + (last ? 1 : 0);
  if (count <= w.degree) {
    throw ParameterError(
      "window " + std::to_string(window) + " has " + std::to_string(count) + " samples, too few for degree " +
      std::to_string(w.degree));
  }
  return {first, static_cast<std::size_t>(count)};
}

std::string PolyConfig::to_text() const
{
  std::string out;
  for (const auto & w : windows) {
    if (!out.empty()) {
      out += ',';
    }
    out += format_ms(w.offset) + ':' + format_ms(w.length) + ':' + std::to_string(w.degree);
  }
  return out;
}

std::string PolyConfig::fingerprint() const
{
  return "dims=" + std::to_string(dims) + ";windows=" + to_text();
}

PolyConfig PolyConfig::parse(const std::string & text, int dims)
{
  PolyConfig cfg;
  cfg.dims = dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    WindowSpec w;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    double offset_ms = 0.0, length_ms = 0.0;
    if (!(is >> offset_ms >> c1 >> length_ms >> c2 >> w.degree) || c1 != ':' || c2 != ':' || !(is >> std::ws).eof()) {
      throw ParameterError("bad window spec '" + item + "', expected offset_ms:length_ms:degree");
    }
    w.offset = offset_ms / 1000.0;
    w.length = length_ms / 1000.0;
    cfg.windows.push_back(w);
  }
  cfg.validate();
  return cfg;
}

PolyConfig PolyConfig::default_input()
{
  return {{{-1.0, 0.8, 3}, {-0.2, 0.2, 3}}, 2};
}

PolyConfig PolyConfig::default_output()
{
  PolyConfig cfg;
  cfg.dims = 2;
  for (int i = 0; i < 5; ++i) {
    cfg.windows.push_back({0.5 * i, 0.5, 2});
  }
  return cfg;
}

OrthoBasis::OrthoBasis(std::size_t n_samples, int degree) : n_(n_samples), degree_(degree)
{
  if (degree < 0 || static_cast<std::size_t>(degree) >= n_samples) {
    throw ParameterError(
      "polynomial degree " + std::to_string(degree) + " needs more than " + std::to_string(n_samples) + " samples");
  }
  const int m = degree + 1;
  Eigen::VectorXd u(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    u[static_cast<Eigen::Index>(i)] = n_ == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n_ - 1);
  }
  rows_.resize(m, static_cast<Eigen::Index>(n_));
  monomial_ = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd power = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_));
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd v = power;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    c[j] = 1.0;
    // Classical Gram-Schmidt, applied twice.
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < j; ++i) {
        const double r = rows_.row(i).dot(v);
        v -= r * rows_.row(i).transpose();
        c -= r * monomial_.row(i).transpose();
      }
    }
    const double norm = v.norm();
    rows_.row(j) = v.transpose() / norm;
    monomial_.row(j) = c.transpose() / norm;
    power = power.cwiseProduct(u);
  }
}

double OrthoBasis::evaluate(int j, double sample_pos) const
{
  const double u = n_ == 1 ? 0.0 : -1.0 + 2.0 * sample_pos / static_cast<double>(n_ - 1);
  double value = 0.0;
  for (int k = degree_; k >= 0; --k) {
    value = value * u + monomial_(j, k);
  }
  return value;
}

const OrthoBasis & orth_basis(std::size_t n_samples, int degree)
{
  static std::shared_mutex mutex;
  static std::map<std::pair<std::size_t, int>, std::unique_ptr<OrthoBasis>> cache;
  const auto key = std::make_pair(n_samples, degree);
  {
    std::shared_lock lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) {
      return *it->second;
    }
  }
  auto basis = std::make_unique<OrthoBasis>(n_samples, degree);
  std::unique_lock lock(mutex);
  auto [it, inserted] = cache.try_emplace(key, std::move(basis));
  return *it->second;
}

Eigen::VectorXd fit_window(std::span<const double> samples, int degree)
{
  const auto & basis = orth_basis(samples.size(), degree);
  const Eigen::Map<const Eigen::VectorXd> y(samples.data(), static_cast<Eigen::Index>(samples.size()));
  return basis.rows() * y;
}

std::optional<Eigen::VectorXd> fit_series(
  std::span<const std::span<const double>> series, const PolyConfig & config, std::size_t now, double dt)
{
  if (series.size() != static_cast<std::size_t>(config.dims)) {
    throw ParameterError("series count does not match layout dimensions");
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(config.feature_length()));
  Eigen::Index pos = 0;
  for (const auto & dim : series) {
    for (std::size_t w = 0; w < config.windows.size(); ++w) {
      const auto range = config.samples(w, dt);
      const long first = static_cast<long>(now) + range.first;
      const long last = first + static_cast<long>(range.count) - 1;
      if (first < 0 || last >= static_cast<long>(dim.size())) {
        return std::nullopt;
      }
      const int degree = config.windows[w].degree;
      out.segment(pos, degree + 1) = fit_window(dim.subspan(static_cast<std::size_t>(first), range.count), degree);
      pos += degree + 1;
    }
  }
  return out;
}

std::optional<FeatureVector> extract_features(
  const VelocitySeries & velocity, const PolyConfig & config, std::size_t now_index, double dt)
{
  const std::span<const double> dims[] = {velocity.v_lon, velocity.v_lat};
  return fit_series(std::span(dims, 2), config, now_index, dt);
}

Eigen::MatrixXd reconstruct_series(
  const Eigen::VectorXd & coefficients, const PolyConfig & config, std::span<const double> query_times,
  double dt)
{
  if (static_cast<std::size_t>(coefficients.size()) != config.feature_length()) {
    throw ParameterError("coefficient vector does not match the polynomial layout");
  }
  const auto per_dim = static_cast<Eigen::Index>(config.coefficients_per_dim());
  Eigen::MatrixXd out(config.dims, static_cast<Eigen::Index>(query_times.size()));
  for (std::size_t q = 0; q < query_times.size(); ++q) {
    const double t = query_times[q];
    std::optional<std::size_t> window;
    for (std::size_t w = 0; w < config.windows.size(); ++w) {
      const double start = config.windows[w].offset;
      const double end = start + config.windows[w].length;
      const bool lower_ok = w == 0 ? t >= start - kTimeTol : t > start + kTimeTol;
      if (lower_ok && t <= end + kTimeTol) {
        window = w;
        break;
      }
    }
    if (!window) {
      throw ParameterError("query time " + std::to_string(t) + " s lies outside all windows");
    }
    Eigen::Index coeff_offset = 0;
    for (std::size_t w = 0; w < *window; ++w) {
      coeff_offset += config.windows[w].degree + 1;
    }
    const auto range = config.samples(*window, dt);
    const auto & basis = orth_basis(range.count, config.windows[*window].degree);
    const double sample_pos = t / dt - static_cast<double>(range.first);
    for (int d = 0; d < config.dims; ++d) {
      double value = 0.0;
      for (int j = 0; j <= basis.degree(); ++j) {
        value += coefficients[d * per_dim + coeff_offset + j] * basis.evaluate(j, sample_pos);
      }
      out(d, static_cast<Eigen::Index>(q)) = value;
    }
  }
  return out;
}

}  // namespace vru
