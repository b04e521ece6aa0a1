#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace prunekit {

// Parses the TOML subset used by experiment configs into a JSON tree:
// comments, [table] and [a.b] headers, bare or quoted keys, basic and
// literal strings, integers, floats, booleans and (possibly multi-line)
// arrays. Inline tables, dates and multi-line strings are rejected.
// "${NAME}" inside basic strings is replaced by the environment variable
// NAME; an unset variable is a ConfigError.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json load_toml(const std::filesystem::path& path);

std::string interpolate_env(std::string_view text);

}  // namespace prunekit
