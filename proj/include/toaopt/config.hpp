#pragma once

#include <filesystem>
#include <json.hpp>

#include "toaopt/harness.hpp"

namespace toaopt {

/// Nested JSON configuration with sections "scenario", "layout", "optimizer" and
/// "experiment". Every key is optional; unknown keys raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Per-algorithm statistics keyed by algorithm name; distributions as percentiles 0..100.
nlohmann::json summary_to_json(const ExperimentSummary& summary);

}  // namespace toaopt
