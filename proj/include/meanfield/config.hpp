#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "meanfield/experiments.hpp"

namespace meanfield {

struct RunConfig {
  ExperimentConfig experiment;
  std::string out_dir = "out";
  // 0 means all available cores.
  unsigned threads = 0;

  bool operator==(const RunConfig& o) const;
};

// Canonical JSON with every field present.
nlohmann::json to_json(const ExperimentConfig& c);
nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const ModelParams& p);

// Missing keys take their defaults. Unknown keys and every violated constraint
// are collected into one ValidationError.
RunConfig config_from_json(const nlohmann::json& j);
// Throws InputError with line and column on malformed JSON.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace meanfield
