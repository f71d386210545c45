#pragma once

#include "vru/baselines.hpp"
#include "vru/gatedpredictor.hpp"
#include "vru/neuralnet.hpp"
#include "vru/polyfeat.hpp"
#include "vru/stateclassifier.hpp"
#include "vru/synthgen.hpp"
#include "vru/trajdata.hpp"
#include "vru/trajpredictor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vru
{

/// Flat key = value run configuration. Unknown keys are errors.
struct RunConfig
{
  std::uint64_t seed = 42;
  CorpusSpec corpus{};
  PolyConfig input = PolyConfig::default_input();
  PolyConfig output = PolyConfig::default_output();
  EgoOptions ego{};
  std::vector<int> classifier_hidden{20};
  std::vector<int> predictor_hidden{40};
  Activation activation = Activation::Sigmoid;
  RpropConfig rprop{};
  double train_fraction = 0.7;
  double threshold_step = 0.001;
  double sweep_step = 0.01;
  std::size_t eval_stride = 1;
  CvKfParams kf{};
  std::vector<double> kf_q_grid{0.03125, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  bool kf_tune = true;
  ImmParams imm{};
  PhysModParams physmod{};
  double forced_stop_rate = 0.1;

  /// Sets one key from its text value. Throws ParameterError for unknown keys or bad values.
  void set(const std::string & key, const std::string & value);
  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path & path);
  /// Every key with its current value, in documentation order; parseable by load_file.
  std::string to_text() const;
  /// Cross-field checks.
  void validate() const;

  ClassifierTrainConfig classifier_train() const;
  PredictorTrainConfig predictor_train() const;
};

struct ConfigKeyDoc
{
  std::string key;
  std::string help;
};

/// Key documentation used by --help.
const std::vector<ConfigKeyDoc> & config_key_docs();

/// "20,10" -> {20, 10}
std::vector<int> parse_int_list(const std::string & text);
std::vector<double> parse_double_list(const std::string & text);

}  // namespace vru
