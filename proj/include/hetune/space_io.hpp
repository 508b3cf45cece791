#pragma once

// JSON space definition files.
//
//   {
//     "name": "emil",
//     "parameters": [
//       {"name": "CPU-T", "kind": "levels", "values": [12, 24, 36, 48]},
//       {"name": "CPU-A", "kind": "categorical", "labels": ["none", "scatter", "compact"]},
//       {"name": "CPU-W", "kind": "range", "min": 0, "max": 100, "step": 1},
//       {"name": "ACC-W", "derived_from": "CPU-W"}
//     ]
//   }
//
// Categorical labels may also be given as [{"label": "none", "code": 0}, ...];
// codes must then be consecutive from 0.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hetune/config_space.hpp"

namespace hetune {

namespace detail {

inline ParameterDef parameter_from_json(const nlohmann::json& j) {
  ParameterDef p;
  p.name = j.at("name").get<std::string>();
  if (j.contains("derived_from")) {
    const auto& rule = j.at("derived_from");
    // Either "CPU-W" or {"complement_to_100": "CPU-W"}.
    p.complement_of = rule.is_string() ? rule.get<std::string>() : rule.at("complement_to_100").get<std::string>();
    if (j.contains("values")) p.values = j.at("values").get<std::vector<std::int64_t>>();
    return p;
  }
  const auto kind = j.value("kind", std::string(j.contains("labels") ? "categorical" : "levels"));
  if (kind == "range") {
    p.kind = ParameterKind::numeric_range;
    const auto lo = j.at("min").get<std::int64_t>();
    const auto hi = j.at("max").get<std::int64_t>();
    const auto step = j.value("step", std::int64_t{1});
    if (step <= 0) throw SpaceError(p.name + ": range step must be positive");
    for (auto v = lo; v <= hi; v += step) p.values.push_back(v);
  } else if (kind == "levels") {
    p.kind = ParameterKind::numeric_levels;
    p.values = j.at("values").get<std::vector<std::int64_t>>();
  } else if (kind == "categorical") {
    p.kind = ParameterKind::categorical;
    for (const auto& l : j.at("labels")) {
      if (l.is_string()) {
        p.values.push_back(static_cast<std::int64_t>(p.labels.size()));
        p.labels.push_back(l.get<std::string>());
      } else {
        p.labels.push_back(l.at("label").get<std::string>());
        p.values.push_back(l.at("code").get<std::int64_t>());
      }
    }
    // Reorder by code so labels[code] holds; the space constructor checks the codes.
    std::vector<std::size_t> order(p.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p.values[a] < p.values[b]; });
    ParameterDef sorted = p;
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted.values[i] = p.values[order[i]];
      sorted.labels[i] = p.labels[order[i]];
    }
    p = std::move(sorted);
  } else {
    throw SpaceError(p.name + ": unknown parameter kind '" + kind + "'");
  }
  return p;
}

}  // namespace detail

inline ParameterSpace space_from_json(const nlohmann::json& j) {
  try {
    std::vector<ParameterDef> params;
    for (const auto& p : j.at("parameters")) params.push_back(detail::parameter_from_json(p));
    return ParameterSpace(j.at("name").get<std::string>(), std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw SpaceError(std::string("invalid space definition: ") + e.what());
  }
}

inline nlohmann::json space_to_json(const ParameterSpace& space) {
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& p = space.parameter(i);
    nlohmann::json j;
    j["name"] = p.name;
    if (p.derived()) {
      j["derived_from"] = *p.complement_of;
    } else if (p.kind == ParameterKind::categorical) {
      j["kind"] = "categorical";
      j["labels"] = p.labels;
    } else {
      j["kind"] = "levels";
      j["values"] = p.values;
    }
    params.push_back(std::move(j));
  }
  return {{"name", space.name()}, {"parameters", std::move(params)}};
}

/// Loads a space from a JSON file. Throws DataFormatError for unreadable or
/// malformed documents and SpaceError for invalid definitions.
inline ParameterSpace load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError(path, 0, "cannot open space definition");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataFormatError(path, 0, e.what());
  }
  return space_from_json(j);
}

/// Resolves "ida", "emil" or a path to a space file.
inline ParameterSpace resolve_space(const std::string& name_or_path) {
  if (name_or_path == "ida") return ida_space();
  if (name_or_path == "emil") return emil_space();
  return load_space(name_or_path);
}

}  // namespace hetune
