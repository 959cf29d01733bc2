#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lrd/train/config.hpp"

namespace lrd {

/// Malformed, mistyped or unknown config keys. The message starts with the
/// dotted key path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every field, nested by section. Missing keys keep their defaults when
/// parsing; unknown keys are errors.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

std::string config_to_text(const ExperimentConfig& cfg);
ExperimentConfig config_from_text(const std::string& text);

/// Parses and validates.
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace lrd
