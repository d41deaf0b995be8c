#include "dicl/app/config.hpp"

#include "dicl/error.hpp"

#include <toml.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dicl::app {

namespace {

json scalar_to_json(const toml::node& n, const std::string& key) {
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  const auto line = n.source().begin.line;
  fail(ErrorKind::Config, "config line " + std::to_string(line) + ": key '" + key +
                              "' must be a string, number, boolean or flat array");
}

std::string type_name(ValueType t) {
  switch (t) {
    case ValueType::Int: return "an integer";
    case ValueType::Double: return "a number";
    case ValueType::Bool: return "a boolean";
    case ValueType::String: return "a string";
    case ValueType::IntList: return "an array of integers";
    case ValueType::DoubleList: return "an array of numbers";
  }
  return "a value";
}

bool matches(const json& v, ValueType t) {
  switch (t) {
    case ValueType::Int: return v.is_number_integer();
    case ValueType::Double: return v.is_number();
    case ValueType::Bool: return v.is_boolean();
    case ValueType::String: return v.is_string();
    case ValueType::IntList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
    case ValueType::DoubleList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
  }
  return false;
}

}  // namespace

json parse_flat_toml(const std::string& text) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::Config,
         "config line " + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
  }
  json out = json::object();
  for (const auto& [k, node] : doc) {
    const std::string key(k.str());
    if (node.is_table()) fail(ErrorKind::Config, "key '" + key + "': tables are not supported; keys are flat");
    if (const auto* arr = node.as_array()) {
      json a = json::array();
      for (const auto& e : *arr) a.push_back(scalar_to_json(e, key));
      out[key] = std::move(a);
    } else {
      out[key] = scalar_to_json(node, key);
    }
  }
  return out;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json cfg;
  if (path.extension() == ".json") {
    try {
      cfg = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Config, "invalid JSON config: " + std::string(e.what()));
    }
  } else {
    cfg = parse_flat_toml(ss.str());
  }
  if (!cfg.is_object()) fail(ErrorKind::Config, "config must be an object of flat keys");
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (it.value().is_object()) fail(ErrorKind::Config, "key '" + it.key() + "': nested tables are not supported");
  return cfg;
}

json resolve_config(const json& raw, const Schema& schema) {
  require(raw.is_object(), ErrorKind::Config, "config must be an object");
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    const bool known = std::any_of(schema.begin(), schema.end(), [&](const KeySpec& k) { return k.key == it.key(); });
    if (!known) fail(ErrorKind::Config, "unknown key '" + it.key() + "'");
  }
  json out = json::object();
  for (const auto& spec : schema) {
    if (!raw.contains(spec.key)) {
      if (spec.required) fail(ErrorKind::Config, "missing required key '" + spec.key + "'");
      if (!spec.fallback.is_null()) out[spec.key] = spec.fallback;
      continue;
    }
    const json& v = raw.at(spec.key);
    if (!matches(v, spec.type))
      fail(ErrorKind::Config, "key '" + spec.key + "' must be " + type_name(spec.type));
    if (!spec.choices.empty() &&
        std::find(spec.choices.begin(), spec.choices.end(), v.get<std::string>()) == spec.choices.end()) {
      std::string opts;
      for (const auto& c : spec.choices) opts += (opts.empty() ? "" : ", ") + c;
      fail(ErrorKind::Config, "key '" + spec.key + "' must be one of: " + opts);
    }
    out[spec.key] = (spec.type == ValueType::Double && v.is_number_integer()) ? json(v.get<double>()) : v;
  }
  return out;
}

}  // namespace dicl::app
