#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dicl::app {

using nlohmann::json;

enum class ValueType { Int, Double, Bool, String, IntList, DoubleList };

struct KeySpec {
  std::string key;
  ValueType type;
  bool required = false;
  json fallback;                     // used when the key is absent and not required
  std::vector<std::string> choices;  // String only; empty accepts anything
};

using Schema = std::vector<KeySpec>;

/// TOML restricted to top-level keys holding strings, integers, floats,
/// booleans or arrays of those. Tables are rejected.
json parse_flat_toml(const std::string& text);

/// `.json` parses as JSON, anything else as flat TOML. The top level must be
/// an object of scalars and arrays.
json load_config_file(const std::filesystem::path& path);

/// Checks every key against `schema`, fills fallbacks and returns the
/// resolved object. Unknown, missing or mistyped keys throw Config errors that
/// name the key.
json resolve_config(const json& raw, const Schema& schema);

}  // namespace dicl::app
