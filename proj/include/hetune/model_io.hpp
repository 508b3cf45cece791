#pragma once

// JSON persistence for boosted models. Doubles are written with round-trip
// precision, so save -> load -> save is byte-identical.

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hetune/boosting.hpp"
#include "hetune/error.hpp"

namespace hetune {

inline constexpr const char* kModelFormat = "hetune-boosted-model";

inline nlohmann::json model_to_json(const BoostedModel& model) {
  const auto& p = model.params();
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : model.stages()) {
    // Nodes as [feature, threshold, left, right, value].
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : s.tree.nodes()) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    stages.push_back({{"weight", s.weight}, {"nodes", std::move(nodes)}});
  }
  return {
      {"format", kModelFormat},
      {"version", 1},
      {"feature_names", model.feature_names()},
      {"hyperparameters",
       {{"n_estimators", p.n_estimators},
        {"max_depth", p.tree.max_depth},
        {"min_samples_leaf", p.tree.min_samples_leaf},
        {"learning_rate", p.learning_rate},
        {"loss", std::string(to_string(p.loss))}}},
      {"stages", std::move(stages)},
  };
}

inline BoostedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw ModelError("not a boosted model document");
    const auto& h = j.at("hyperparameters");
    BoostParams p;
    p.n_estimators = h.at("n_estimators").get<int>();
    p.tree.max_depth = h.at("max_depth").get<int>();
    p.tree.min_samples_leaf = h.at("min_samples_leaf").get<int>();
    p.learning_rate = h.at("learning_rate").get<double>();
    p.loss = parse_loss(h.at("loss").get<std::string>());
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    std::vector<BoostStage> stages;
    for (const auto& s : j.at("stages")) {
      std::vector<RegressionTree::Node> nodes;
      for (const auto& n : s.at("nodes"))
        nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                         n.at(4).get<double>()});
      stages.push_back({RegressionTree(std::move(nodes), names.size(), p.tree), s.at("weight").get<double>()});
    }
    return BoostedModel(std::move(names), p, std::move(stages));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
}

inline std::string serialize_model(const BoostedModel& model) { return model_to_json(model).dump(1) + "\n"; }

inline void save_model(const BoostedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError(path, 0, "cannot write model");
  out << serialize_model(model);
}

inline BoostedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError(path, 0, "cannot open model");
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataFormatError(path, 0, e.what());
  } catch (const ModelError& e) {
    throw DataFormatError(path, 0, e.what());
  }
}

}  // namespace hetune
