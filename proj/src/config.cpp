#include "vru/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace vru
{

namespace
{

std::string trim(const std::string & s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string & key, const std::string & v)
{
  double out = 0.0;
  const auto * end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ParameterError("config key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

std::uint64_t to_uint(const std::string & key, const std::string & v)
{
  std::uint64_t out = 0;
  const auto * end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ParameterError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool to_bool(const std::string & key, const std::string & v)
{
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ParameterError("config key '" + key + "': expected true or false");
}

std::string num(double v)
{
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::string join(const std::vector<T> & v)
{
  std::string out;
  for (const auto & x : v) {
    if (!out.empty()) {
      out += ',';
    }
    if constexpr (std::is_floating_point_v<T>) {
      out += num(x);
    } else {
      out += std::to_string(x);
    }
  }
  return out;
}

struct Entry
{
  std::string key;
  std::string help;
  std::function<void(RunConfig &, const std::string &)> set;
  std::function<std::string(const RunConfig &)> get;
};

Entry real(std::string key, std::string help, double RunConfig::*field)
{
  auto k = key;
  return {std::move(key), std::move(help), [field, k](RunConfig & c, const std::string & v) { c.*field = to_double(k, v); },
          [field](const RunConfig & c) { return num(c.*field); }};
}

template <class Getter>
Entry real_at(std::string key, std::string help, Getter ref)
{
  auto k = key;
  return {std::move(key), std::move(help), [ref, k](RunConfig & c, const std::string & v) { ref(c) = to_double(k, v); },
          [ref](const RunConfig & c) { return num(ref(const_cast<RunConfig &>(c))); }};
}

template <class Getter>
Entry count_at(std::string key, std::string help, Getter ref)
{
  auto k = key;
  return {std::move(key), std::move(help),
          [ref, k](RunConfig & c, const std::string & v) {
            ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(to_uint(k, v));
          },
          [ref](const RunConfig & c) { return std::to_string(ref(const_cast<RunConfig &>(c))); }};
}

const std::vector<Entry> & entries()
{
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(count_at("seed", "master seed for corpus generation, splits and training",
                         [](RunConfig & c) -> std::uint64_t & { return c.seed; }));
    const char * names[] = {"waiting", "starting", "moving", "stopping"};
    for (std::size_t i = 0; i < kNumStates; ++i) {
      t.push_back(count_at(std::string("corpus.") + names[i], std::string("number of generated ") + names[i] + " scenes",
                           [i](RunConfig & c) -> std::size_t & { return c.corpus.counts[i]; }));
    }
    t.push_back(real_at("corpus.duration_min", "shortest scene, s",
                        [](RunConfig & c) -> double & { return c.corpus.duration_min; }));
    t.push_back(real_at("corpus.duration_max", "longest scene, s",
                        [](RunConfig & c) -> double & { return c.corpus.duration_max; }));
    t.push_back(real_at("corpus.sample_rate_hz", "sampling rate, Hz",
                        [](RunConfig & c) -> double & { return c.corpus.sample_rate_hz; }));
    t.push_back(real_at("corpus.speed_min", "lowest pedestrian steady speed, m/s",
                        [](RunConfig & c) -> double & { return c.corpus.speed_min; }));
    t.push_back(real_at("corpus.speed_max", "highest pedestrian steady speed, m/s",
                        [](RunConfig & c) -> double & { return c.corpus.speed_max; }));
    t.push_back(real_at("corpus.cyclist_fraction", "share of cyclist scenes",
                        [](RunConfig & c) -> double & { return c.corpus.cyclist_fraction; }));
    t.push_back(real_at("corpus.tau_min", "shortest ramp time constant, s",
                        [](RunConfig & c) -> double & { return c.corpus.tau_min; }));
    t.push_back(real_at("corpus.tau_max", "longest ramp time constant, s",
                        [](RunConfig & c) -> double & { return c.corpus.tau_max; }));
    t.push_back(real_at("corpus.piecewise_fraction", "share of transitions from the piecewise-acceleration family",
                        [](RunConfig & c) -> double & { return c.corpus.piecewise_fraction; }));
    t.push_back(real_at("corpus.noise_sigma", "position noise per axis, m",
                        [](RunConfig & c) -> double & { return c.corpus.noise_sigma; }));
    t.push_back(real_at("corpus.jitter_speed_max", "standstill sway speed bound, m/s",
                        [](RunConfig & c) -> double & { return c.corpus.jitter_speed_max; }));
    t.push_back(real_at("corpus.turn_rate_max", "heading drift bound, rad/s",
                        [](RunConfig & c) -> double & { return c.corpus.turn_rate_max; }));
    t.push_back({"input_windows", "input sub-windows as offset_ms:length_ms:degree,...",
                 [](RunConfig & c, const std::string & v) { c.input = PolyConfig::parse(v); },
                 [](const RunConfig & c) { return c.input.to_text(); }});
    t.push_back({"output_windows", "output sub-windows as offset_ms:length_ms:degree,...",
                 [](RunConfig & c, const std::string & v) { c.output = PolyConfig::parse(v); },
                 [](const RunConfig & c) { return c.output.to_text(); }});
    t.push_back(real_at("alpha_lon", "smoothing factor of v_lon", [](RunConfig & c) -> double & { return c.ego.alpha_lon; }));
    t.push_back(real_at("alpha_lat", "smoothing factor of v_lat", [](RunConfig & c) -> double & { return c.ego.alpha_lat; }));
    t.push_back(real_at("heading_speed_floor", "speed below which the ego heading is held, m/s",
                        [](RunConfig & c) -> double & { return c.ego.heading_speed_floor; }));
    t.push_back(count_at("heading_window", "samples in the heading line fit",
                         [](RunConfig & c) -> std::size_t & { return c.ego.heading_window; }));
    t.push_back(count_at("anchor_window", "samples in the frame-origin line fit",
                         [](RunConfig & c) -> std::size_t & { return c.ego.anchor_window; }));
    t.push_back({"classifier_hidden", "hidden layer sizes of the classifier, comma separated",
                 [](RunConfig & c, const std::string & v) { c.classifier_hidden = parse_int_list(v); },
                 [](const RunConfig & c) { return join(c.classifier_hidden); }});
    t.push_back({"predictor_hidden", "hidden layer sizes of the predictors, comma separated",
                 [](RunConfig & c, const std::string & v) { c.predictor_hidden = parse_int_list(v); },
                 [](const RunConfig & c) { return join(c.predictor_hidden); }});
    t.push_back({"activation", "hidden activation: sigmoid, identity or gaussian",
                 [](RunConfig & c, const std::string & v) { c.activation = parse_activation(v); },
                 [](const RunConfig & c) { return std::string(to_string(c.activation)); }});
    t.push_back(real_at("rprop.eta_plus", "RPROP step growth", [](RunConfig & c) -> double & { return c.rprop.eta_plus; }));
    t.push_back(real_at("rprop.eta_minus", "RPROP step shrink", [](RunConfig & c) -> double & { return c.rprop.eta_minus; }));
    t.push_back(real_at("rprop.delta0", "RPROP initial step", [](RunConfig & c) -> double & { return c.rprop.delta0; }));
    t.push_back(real_at("rprop.delta_min", "RPROP smallest step", [](RunConfig & c) -> double & { return c.rprop.delta_min; }));
    t.push_back(real_at("rprop.delta_max", "RPROP largest step", [](RunConfig & c) -> double & { return c.rprop.delta_max; }));
    t.push_back(count_at("max_epochs", "training epochs", [](RunConfig & c) -> int & { return c.rprop.max_epochs; }));
    t.push_back(real_at("validation_fraction", "share of training scenes held out for model selection",
                        [](RunConfig & c) -> double & { return c.rprop.validation_fraction; }));
    t.push_back(real("train_fraction", "share of scenes in the training split (per class)", &RunConfig::train_fraction));
    t.push_back(real("threshold_step", "grid step of threshold selection", &RunConfig::threshold_step));
    t.push_back(real("sweep_step", "grid step of the early-detection sweep", &RunConfig::sweep_step));
    t.push_back(count_at("eval_stride", "evaluate every n-th eligible time step",
                         [](RunConfig & c) -> std::size_t & { return c.eval_stride; }));
    t.push_back(real_at("kf.q", "CV-KF acceleration noise intensity, m^2/s^3 (used when kf.tune = false)",
                        [](RunConfig & c) -> double & { return c.kf.q; }));
    t.push_back(real_at("kf.r", "CV-KF measurement variance, m^2", [](RunConfig & c) -> double & { return c.kf.r; }));
    t.push_back({"kf.tune", "pick kf.q from kf.q_grid by training-set ASAEE",
                 [](RunConfig & c, const std::string & v) { c.kf_tune = to_bool("kf.tune", v); },
                 [](const RunConfig & c) { return std::string(c.kf_tune ? "true" : "false"); }});
    t.push_back({"kf.q_grid", "candidate q values, comma separated",
                 [](RunConfig & c, const std::string & v) { c.kf_q_grid = parse_double_list(v); },
                 [](const RunConfig & c) { return join(c.kf_q_grid); }});
    t.push_back(real_at("imm.q_cp", "IMM constant-position noise, m^2/s", [](RunConfig & c) -> double & { return c.imm.q_cp; }));
    t.push_back(real_at("imm.q_cv", "IMM constant-velocity noise, m^2/s^3", [](RunConfig & c) -> double & { return c.imm.q_cv; }));
    t.push_back(real_at("imm.r", "IMM measurement variance, m^2", [](RunConfig & c) -> double & { return c.imm.r; }));
    t.push_back({"imm.pi_stay", "IMM probability of keeping the model per step",
                 [](RunConfig & c, const std::string & v) {
                   const double p = to_double("imm.pi_stay", v);
                   c.imm.pi << p, 1.0 - p, 1.0 - p, p;
                 },
                 [](const RunConfig & c) { return num(c.imm.pi(0, 0)); }});
    t.push_back(real_at("physmod.fit_window", "past interval fitted by the physical models, s",
                        [](RunConfig & c) -> double & { return c.physmod.fit_window; }));
    t.push_back(real_at("physmod.tau_min", "smallest fitted time constant, s",
                        [](RunConfig & c) -> double & { return c.physmod.tau_min; }));
    t.push_back(real_at("physmod.tau_max", "largest fitted time constant, s",
                        [](RunConfig & c) -> double & { return c.physmod.tau_max; }));
    t.push_back(real_at("physmod.t0_before", "earliest fitted midpoint before now, s",
                        [](RunConfig & c) -> double & { return c.physmod.t0_before; }));
    t.push_back(real_at("physmod.t0_after", "latest fitted midpoint after now, s",
                        [](RunConfig & c) -> double & { return c.physmod.t0_after; }));
    t.push_back(real_at("physmod.v_max", "upper bound of the fitted steady-state speed, m/s",
                        [](RunConfig & c) -> double & { return c.physmod.v_max; }));
    t.push_back(real("forced_stop_rate", "share of Moving frames forced to a Stopping gate in the sensitivity run",
                     &RunConfig::forced_stop_rate));
    return t;
  }();
  return table;
}

}  // namespace

std::vector<int> parse_int_list(const std::string & text)
{
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      continue;
    }
    const auto v = to_uint("list", item);
    if (v == 0) {
      throw ParameterError("layer sizes must be positive");
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string & text)
{
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(to_double("list", item));
    }
  }
  return out;
}

void RunConfig::set(const std::string & key, const std::string & value)
{
  for (const auto & e : entries()) {
    if (e.key == key) {
      e.set(*this, trim(value));
      return;
    }
  }
  throw ParameterError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file " + path.string());
  }
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(n, "expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ParameterError & e) {
      throw ParseError(n, e.what());
    }
  }
}

std::string RunConfig::to_text() const
{
  std::string out;
  for (const auto & e : entries()) {
    out += e.key + " = " + e.get(*this) + '\n';
  }
  return out;
}

void RunConfig::validate() const
{
  corpus.validate();
  input.validate();
  output.validate();
  rprop.validate();
  kf.validate();
  imm.validate();
  physmod.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("train_fraction must lie in (0, 1)");
  }
  if (!(threshold_step > 0.0 && threshold_step <= 1.0) || !(sweep_step > 0.0 && sweep_step <= 1.0)) {
    throw ParameterError("threshold steps must lie in (0, 1]");
  }
  if (eval_stride == 0) {
    throw ParameterError("eval_stride must be at least 1");
  }
  if (kf_tune && kf_q_grid.empty()) {
    throw ParameterError("kf.q_grid is empty");
  }
  if (!(forced_stop_rate >= 0.0 && forced_stop_rate <= 1.0)) {
    throw ParameterError("forced_stop_rate must lie in [0, 1]");
  }
  if (classifier_hidden.empty() || predictor_hidden.empty()) {
    throw ParameterError("hidden layer lists must not be empty");
  }
}

ClassifierTrainConfig RunConfig::classifier_train() const
{
  ClassifierTrainConfig c;
  c.input = input;
  c.ego = ego;
  c.hidden = classifier_hidden;
  c.activation = activation;
  c.rprop = rprop;
  c.rprop.seed = seed;
  return c;
}

PredictorTrainConfig RunConfig::predictor_train() const
{
  PredictorTrainConfig c;
  c.input = input;
  c.output = output;
  c.ego = ego;
  c.hidden = predictor_hidden;
  c.activation = activation;
  c.rprop = rprop;
  c.rprop.seed = seed + 1;
  return c;
}

const std::vector<ConfigKeyDoc> & config_key_docs()
{
  static const std::vector<ConfigKeyDoc> docs = [] {
    std::vector<ConfigKeyDoc> d;
    for (const auto & e : entries()) {
      d.push_back({e.key, e.help});
    }
    return d;
  }();
  return docs;
}

}  // namespace vru
