#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "treesql/core.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/value_index.hpp"

namespace treesql {

/// Everything a run reads from its configuration file.
struct AppConfig {
  SearchConfig search;
  EndpointSettings endpoint;
  MinHashParams index;
};

/// INI file with [search], [endpoint] and [index] sections. Missing keys
/// keep their defaults; unknown sections or keys raise ConfigError.
/// The API key is never read from the file; use the environment.
AppConfig load_config(const std::filesystem::path& path);
AppConfig parse_config(const std::string& ini_text);

nlohmann::json to_json(const SearchConfig& cfg);
nlohmann::json to_json(const MinHashParams& params);
/// Endpoint fields without the API key.
nlohmann::json to_json(const EndpointSettings& endpoint);

}  // namespace treesql
