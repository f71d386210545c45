#include "vru/model_io.hpp"

#include <fstream>

namespace vru
{

using nlohmann::json;

namespace
{

json matrix_to_json(const Eigen::MatrixXd & m)
{
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row[static_cast<std::size_t>(c)] = m(r, c);
    }
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json & j, Eigen::Index rows, Eigen::Index cols)
{
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParameterError("weight matrix has the wrong number of rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = j[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParameterError("weight matrix has the wrong number of columns");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = row[static_cast<std::size_t>(c)];
    }
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json & j, Eigen::Index size)
{
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != size) {
    throw ParameterError("vector has the wrong length");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
}

std::vector<double> to_std(const Eigen::VectorXd & v)
{
  return {v.data(), v.data() + v.size()};
}

}  // namespace

json mlp_to_json(const MlpModel & model)
{
  json j;
  j["layer_sizes"] = model.layer_sizes();
  json layers = json::array();
  for (const auto & layer : model.layers()) {
    layers.push_back({{"activation", std::string(to_string(layer.activation))},
                      {"weights", matrix_to_json(layer.weights)},
                      {"bias", to_std(layer.bias)}});
  }
  j["layers"] = layers;
  j["input_norm"] = {{"mean", to_std(model.input_norm().mean)}, {"std", to_std(model.input_norm().stddev)}};
  j["output_norm"] = {{"mean", to_std(model.output_norm().mean)}, {"std", to_std(model.output_norm().stddev)}};
  return j;
}

MlpModel mlp_from_json(const json & j)
{
  try {
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    MlpModel model(sizes, Activation::Sigmoid);
    const auto & layers = j.at("layers");
    if (layers.size() + 1 != sizes.size()) {
      throw ParameterError("layer count does not match layer_sizes");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto & layer = model.layers()[l];
      layer.activation = parse_activation(layers[l].at("activation").get<std::string>());
      layer.weights = matrix_from_json(layers[l].at("weights"), sizes[l + 1], sizes[l]);
      layer.bias = vector_from_json(layers[l].at("bias"), sizes[l + 1]);
    }
    model.input_norm().mean = vector_from_json(j.at("input_norm").at("mean"), sizes.front());
    model.input_norm().stddev = vector_from_json(j.at("input_norm").at("std"), sizes.front());
    model.output_norm().mean = vector_from_json(j.at("output_norm").at("mean"), sizes.back());
    model.output_norm().stddev = vector_from_json(j.at("output_norm").at("std"), sizes.back());
    model.validate();
    return model;
  } catch (const json::exception & e) {
    throw ParameterError(std::string("malformed MLP model: ") + e.what());
  }
}

json ego_options_to_json(const EgoOptions & o)
{
  return {{"alpha_lon", o.alpha_lon},
          {"alpha_lat", o.alpha_lat},
          {"heading_speed_floor", o.heading_speed_floor},
          {"heading_window", o.heading_window},
          {"anchor_window", o.anchor_window}};
}

EgoOptions ego_options_from_json(const json & j)
{
  EgoOptions o;
  o.alpha_lon = j.at("alpha_lon").get<double>();
  o.alpha_lat = j.at("alpha_lat").get<double>();
  o.heading_speed_floor = j.at("heading_speed_floor").get<double>();
  o.heading_window = j.at("heading_window").get<std::size_t>();
  o.anchor_window = j.at("anchor_window").get<std::size_t>();
  return o;
}

json read_model_json(const std::filesystem::path & path, const std::string & expected_kind)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open model file " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error & e) {
    throw std::runtime_error("model file " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "vru-polymlp-model") {
    throw std::runtime_error("model file " + path.string() + " has an unknown format tag");
  }
  if (j.value("version", 0) != kModelFileVersion) {
    throw std::runtime_error("model file " + path.string() + " has unsupported version");
  }
  if (j.value("kind", "") != expected_kind) {
    throw std::runtime_error(
      "model file " + path.string() + " holds a '" + j.value("kind", "") + "', expected '" + expected_kind + "'");
  }
  return j;
}

void write_model_json(const std::filesystem::path & path, const json & j)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw std::runtime_error("cannot write model file " + tmp.string());
    }
    out << j.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path & path, const std::string & text)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

void check_fingerprint(const std::string & stored, const PolyConfig & expected, const std::string & what)
{
  if (stored != expected.fingerprint()) {
    throw FingerprintMismatch(
      what + " was trained with polynomial layout '" + stored + "' but the run configuration uses '" +
      expected.fingerprint() + "'");
  }
}

}  // namespace vru
