#pragma once

// AdaBoost.R2 over CART regression trees (Drucker, 1997).
//
// Each round fits a tree on a weighted bootstrap resample, scores every
// training sample with a loss relative to the round's largest error, and
// reweights samples by beta^(1 - loss). Predictions are the weighted median of
// the stage predictions under stage weights ln(1/beta).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetune/error.hpp"
#include "hetune/regression_tree.hpp"
#include "hetune/rng.hpp"

namespace hetune {

enum class BoostLoss { linear, square, exponential };

inline std::string_view to_string(BoostLoss loss) {
  switch (loss) {
    case BoostLoss::linear: return "linear";
    case BoostLoss::square: return "square";
    case BoostLoss::exponential: return "exponential";
  }
  return "?";
}

inline BoostLoss parse_loss(std::string_view s) {
  if (s == "linear") return BoostLoss::linear;
  if (s == "square") return BoostLoss::square;
  if (s == "exponential") return BoostLoss::exponential;
  throw ModelError("unknown boosting loss '" + std::string(s) + "'");
}

struct BoostParams {
  int n_estimators = 50;
  TreeParams tree{};
  double learning_rate = 1.0;
  BoostLoss loss = BoostLoss::linear;
};

struct BoostStage {
  RegressionTree tree;
  double weight = 0;
};

class BoostedModel {
 public:
  BoostedModel() = default;
  BoostedModel(std::vector<std::string> feature_names, BoostParams params, std::vector<BoostStage> stages)
      : feature_names_(std::move(feature_names)), params_(params), stages_(std::move(stages)) {
    if (stages_.empty()) throw ModelError("boosted model needs at least one stage");
    for (const auto& s : stages_) {
      if (!std::isfinite(s.weight)) throw ModelError("stage weight is not finite");
      if (s.tree.arity() != feature_names_.size()) throw ModelError("stage arity does not match feature names");
    }
  }

  /// Weighted median of the stage predictions: the smallest prediction whose
  /// cumulative stage weight reaches half the total.
  double predict(std::span<const double> x) const {
    if (x.size() != feature_names_.size())
      throw FeatureMismatch("model expects " + std::to_string(feature_names_.size()) + " features, got " +
                            std::to_string(x.size()));
    if (stages_.size() == 1) return stages_[0].tree.predict(x);
    std::vector<std::pair<double, double>> pw;
    pw.reserve(stages_.size());
    double total = 0;
    for (const auto& s : stages_) {
      pw.emplace_back(s.tree.predict(x), s.weight);
      total += s.weight;
    }
    std::stable_sort(pw.begin(), pw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double acc = 0;
    for (const auto& [p, w] : pw) {
      acc += w;
      if (acc >= 0.5 * total) return p;
    }
    return pw.back().first;
  }

  std::vector<double> predict_all(const std::vector<FeatureVector>& rows) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(predict(r));
    return out;
  }

  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const BoostParams& params() const noexcept { return params_; }
  const std::vector<BoostStage>& stages() const noexcept { return stages_; }

 private:
  std::vector<std::string> feature_names_;
  BoostParams params_;
  std::vector<BoostStage> stages_;
};

/// Fits AdaBoost.R2. Stops early when a round fits the training set exactly
/// (that stage is kept with weight 1) or when the weighted average loss
/// reaches 0.5 (that stage is dropped unless it is the only one).
inline BoostedModel fit_boosted(const Dataset& data, const BoostParams& params, Rng& rng) {
  data.check();
  if (data.size() < 2) throw ModelError("boosting needs at least 2 rows");
  if (params.n_estimators < 1) throw ModelError("n_estimators must be at least 1");
  if (!(params.learning_rate > 0)) throw ModelError("learning_rate must be positive");

  const std::size_t n = data.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = data.weight(i);
  {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= total;
  }

  std::vector<BoostStage> stages;
  std::vector<double> cdf(n), loss(n);
  std::vector<std::size_t> sample(n);
  for (int round = 0; round < params.n_estimators; ++round) {
    std::partial_sum(w.begin(), w.end(), cdf.begin());
    const double top = cdf.back();
    for (auto& s : sample) {
      const double u = rng.uniform() * top;
      s = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (s >= n) s = n - 1;
    }
    auto tree = fit_tree(data, sample, params.tree);

    double max_err = 0;
    for (std::size_t i = 0; i < n; ++i) {
      loss[i] = std::abs(tree.predict(data.rows[i]) - data.targets[i]);
      if (w[i] > 0) max_err = std::max(max_err, loss[i]);
    }
    if (max_err > 0)
      for (auto& l : loss) l /= max_err;
    for (auto& l : loss) {
      if (params.loss == BoostLoss::square) l = l * l;
      else if (params.loss == BoostLoss::exponential) l = 1.0 - std::exp(-l);
    }
    double avg = 0;
    for (std::size_t i = 0; i < n; ++i) avg += w[i] * loss[i];

    if (avg <= 0) {
      stages.push_back({std::move(tree), 1.0});
      break;
    }
    if (avg >= 0.5) {
      if (stages.empty()) stages.push_back({std::move(tree), 1.0});
      break;
    }
    const double beta = avg / (1.0 - avg);
    stages.push_back({std::move(tree), params.learning_rate * std::log(1.0 / beta)});
    if (round + 1 == params.n_estimators) break;

    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= std::pow(beta, (1.0 - loss[i]) * params.learning_rate);
      total += w[i];
    }
    if (!(total > 0)) break;
    for (auto& v : w) v /= total;
  }
  return BoostedModel(data.feature_names, params, std::move(stages));
}

inline BoostedModel fit_boosted(const Dataset& data, const BoostParams& params, std::uint64_t seed) {
  Rng rng(seed);
  return fit_boosted(data, params, rng);
}

}  // namespace hetune
