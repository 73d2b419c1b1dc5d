#pragma once

#include "fedsim/engine.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace fedsim {

// Parses a run configuration. Every unknown key and every type error is
// collected and reported together in one ConfigError. A run manifest (an
// object with "config" and "seed") is accepted and reproduces that run.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& cfg);

nlohmann::json run_manifest(const ExperimentConfig& cfg, std::uint64_t seed, const ExperimentResult& result);

std::string code_version();

}  // namespace fedsim
