#pragma once

#include "vru/neuralnet.hpp"
#include "vru/polyfeat.hpp"
#include "vru/trajdata.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace vru
{

inline constexpr int kModelFileVersion = 1;

class FingerprintMismatch : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json mlp_to_json(const MlpModel & model);
MlpModel mlp_from_json(const nlohmann::json & j);

nlohmann::json ego_options_to_json(const EgoOptions & options);
EgoOptions ego_options_from_json(const nlohmann::json & j);

/// Reads a model container and checks format tag and version.
nlohmann::json read_model_json(const std::filesystem::path & path, const std::string & expected_kind);
/// Atomic write (temporary file + rename).
void write_model_json(const std::filesystem::path & path, const nlohmann::json & j);

/// Atomic text write for reports and tables.
void write_text_atomic(const std::filesystem::path & path, const std::string & text);

/// Throws FingerprintMismatch naming both layouts.
void check_fingerprint(const std::string & stored, const PolyConfig & expected, const std::string & what);

}  // namespace vru
