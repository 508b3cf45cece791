#pragma once

// Model scoring: R^2, k-fold cross-validation and train/test splits.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hetune/boosting.hpp"
#include "hetune/error.hpp"
#include "hetune/regression_tree.hpp"
#include "hetune/rng.hpp"

namespace hetune {

/// Coefficient of determination 1 - SS_res / SS_tot.
inline double r2_score(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || targets.empty())
    throw ModelError("r2_score needs equal, nonzero lengths");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (ss_tot == 0) throw UndefinedScore("R^2 undefined: targets are constant");
  return 1.0 - ss_res / ss_tot;
}

struct ModelMetrics {
  double r2 = 0;
  std::size_t n_samples = 0;
  std::string scheme;  // "kfold:10", "split:0.8", "train"
  std::vector<double> fold_r2;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// Shuffles once and cuts into k folds whose sizes differ by at most one (the
/// first n % k folds get the extra row).
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, Rng& rng) {
  if (k < 2) throw ModelError("k-fold needs k >= 2");
  if (k > n) throw ModelError("k-fold needs at least k rows (k=" + std::to_string(k) + ", rows=" + std::to_string(n) + ")");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(at), idx.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }
  return folds;
}

/// Mean held-out R^2 across k folds. `fit(train, rng)` returns any model with
/// `predict(span<const double>)`. Each fold's fit gets its own generator derived
/// from one draw of `rng`. When some fold holds a single row (k close to n),
/// the held-out predictions are pooled and scored once.
template <typename Fit>
ModelMetrics kfold_cv(const Dataset& data, std::size_t k, Rng& rng, Fit&& fit) {
  data.check();
  const auto folds = kfold_indices(data.size(), k, rng);
  const auto base = rng.engine()();
  ModelMetrics m;
  m.n_samples = data.size();
  m.scheme = "kfold:" + std::to_string(k);
  const bool pooled = std::any_of(folds.begin(), folds.end(), [](const auto& f) { return f.size() < 2; });
  std::vector<double> all_pred(data.size()), all_true(data.size());
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train;
    train.reserve(data.size() - folds[f].size());
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    Rng fold_rng(derive_seed(base, f));
    const auto model = fit(data.subset(train), fold_rng);
    std::vector<double> pred, truth;
    for (auto i : folds[f]) {
      pred.push_back(model.predict(data.rows[i]));
      truth.push_back(data.targets[i]);
      all_pred[i] = pred.back();
      all_true[i] = truth.back();
    }
    if (!pooled) m.fold_r2.push_back(r2_score(pred, truth));
  }
  if (pooled) {
    m.r2 = r2_score(all_pred, all_true);
  } else {
    m.r2 = std::accumulate(m.fold_r2.begin(), m.fold_r2.end(), 0.0) / static_cast<double>(k);
  }
  return m;
}

inline ModelMetrics kfold_cv(const Dataset& data, std::size_t k, const BoostParams& params, Rng& rng) {
  return kfold_cv(data, k, rng, [&](const Dataset& train, Rng& r) { return fit_boosted(train, params, r); });
}

/// Disjoint shuffled partition with ceil(fraction * n) training rows.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ModelError("train fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  // The small slack keeps products like 0.8 * 10 from rounding up past 8.
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  if (n_train == 0 || n_train >= n)
    throw ModelError("train fraction " + std::to_string(train_fraction) + " leaves an empty part for " +
                     std::to_string(n) + " rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  const std::span<const std::size_t> all(idx);
  return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

/// Fits on the training part and reports held-out R^2.
inline ModelMetrics holdout_score(const Dataset& data, double train_fraction, const BoostParams& params, Rng& rng) {
  auto [train, test] = split_train_test(data, train_fraction, rng);
  const auto model = fit_boosted(train, params, rng);
  ModelMetrics m;
  m.n_samples = data.size();
  m.train_size = train.size();
  m.test_size = test.size();
  m.scheme = "split:" + std::to_string(train_fraction).substr(0, 4);
  m.r2 = r2_score(model.predict_all(test.rows), test.targets);
  return m;
}

}  // namespace hetune
