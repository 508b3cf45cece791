#pragma once

// Feature layout shared by training and model-based evaluation: the encoded
// configuration followed by the workload size.

#include <string>
#include <vector>

#include "hetune/config_space.hpp"
#include "hetune/metrics.hpp"
#include "hetune/regression_tree.hpp"

namespace hetune {

inline constexpr const char* kWorkloadFeature = "workload_mb";

inline std::vector<std::string> model_feature_names(const ParameterSpace& space) {
  auto names = space.parameter_names();
  names.emplace_back(kWorkloadFeature);
  return names;
}

inline FeatureVector model_features(const ParameterSpace& space, const Configuration& c, double workload_mb) {
  auto f = encode(space, c);
  f.push_back(workload_mb);
  return f;
}

/// One row per measurement, target = energy efficiency (MB/J).
inline Dataset make_dataset(const ParameterSpace& space, const std::vector<RawMeasurement>& measurements) {
  Dataset d;
  d.feature_names = model_feature_names(space);
  d.rows.reserve(measurements.size());
  d.targets.reserve(measurements.size());
  for (const auto& m : measurements) d.add(model_features(space, m.config, m.workload_mb), derive_all(m).energy_efficiency);
  return d;
}

}  // namespace hetune
