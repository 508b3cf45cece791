#pragma once

// CART regression trees: greedy variance-reduction splits at midpoints between
// consecutive distinct feature values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hetune/config_space.hpp"
#include "hetune/error.hpp"

namespace hetune {

/// Feature rows with real targets and optional non-negative sample weights.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<FeatureVector> rows;
  std::vector<double> targets;
  std::vector<double> weights;  // empty means uniform

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t arity() const noexcept { return feature_names.size(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

  void add(FeatureVector x, double y) {
    rows.push_back(std::move(x));
    targets.push_back(y);
  }

  /// Throws ModelError when rows disagree in arity, targets are not finite or
  /// weights are negative / all zero.
  void check() const {
    if (rows.size() != targets.size()) throw ModelError("dataset has " + std::to_string(rows.size()) + " rows but " +
                                                        std::to_string(targets.size()) + " targets");
    for (const auto& r : rows)
      if (r.size() != arity()) throw ModelError("dataset row arity does not match feature names");
    for (double y : targets)
      if (!std::isfinite(y)) throw ModelError("dataset target is not finite");
    if (!weights.empty()) {
      if (weights.size() != rows.size()) throw ModelError("dataset weights do not match row count");
      double total = 0;
      for (double w : weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw ModelError("dataset weights must be finite and non-negative");
        total += w;
      }
      if (total <= 0) throw ModelError("dataset weights are all zero");
    }
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.feature_names = feature_names;
    d.rows.reserve(idx.size());
    d.targets.reserve(idx.size());
    for (auto i : idx) {
      d.rows.push_back(rows[i]);
      d.targets.push_back(targets[i]);
      if (!weights.empty()) d.weights.push_back(weights[i]);
    }
    return d;
  }
};

struct TreeParams {
  static constexpr int kUnlimited = std::numeric_limits<int>::max();

  int max_depth = 8;
  int min_samples_leaf = 2;
};

class RegressionTree {
 public:
  /// Internal nodes have feature >= 0 and two children; leaves have feature -1.
  struct Node {
    int feature = -1;
    double threshold = 0;
    int left = -1;
    int right = -1;
    double value = 0;

    bool leaf() const noexcept { return feature < 0; }
    friend bool operator==(const Node&, const Node&) = default;
  };

  RegressionTree() = default;
  RegressionTree(std::vector<Node> nodes, std::size_t arity, TreeParams params)
      : nodes_(std::move(nodes)), arity_(arity), params_(params) {
    if (nodes_.empty()) throw ModelError("tree has no nodes");
    for (const auto& n : nodes_) {
      if (n.leaf()) {
        if (!std::isfinite(n.value)) throw ModelError("tree leaf value is not finite");
        continue;
      }
      const auto count = static_cast<int>(nodes_.size());
      if (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
          static_cast<std::size_t>(n.feature) >= arity_)
        throw ModelError("malformed tree node");
    }
  }

  /// Routes x to a leaf: feature < threshold goes left, otherwise right.
  double predict(std::span<const double> x) const {
    if (x.size() != arity_)
      throw FeatureMismatch("tree expects " + std::to_string(arity_) + " features, got " + std::to_string(x.size()));
    const Node* n = &nodes_[0];
    while (!n->leaf()) n = &nodes_[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] < n->threshold ? n->left : n->right)];
    return n->value;
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t arity() const noexcept { return arity_; }
  const TreeParams& params() const noexcept { return params_; }

  int depth() const { return depth_of(0); }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.leaf(); }));
  }

  friend bool operator==(const RegressionTree& a, const RegressionTree& b) {
    return a.nodes_ == b.nodes_ && a.arity_ == b.arity_;
  }

 private:
  int depth_of(int i) const {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    return n.leaf() ? 0 : 1 + std::max(depth_of(n.left), depth_of(n.right));
  }

  std::vector<Node> nodes_;
  std::size_t arity_ = 0;
  TreeParams params_;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, TreeParams params) : data_(data), params_(params) {}

  RegressionTree build(std::vector<std::size_t> samples) {
    nodes_.clear();
    grow(samples, 0);
    return RegressionTree(std::move(nodes_), data_.arity(), params_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0;
    double gain = 0;
  };

  // Weighted mean with targets summed in ascending order, so the result does
  // not depend on the order rows arrived in.
  double leaf_value(const std::vector<std::size_t>& s) const {
    std::vector<std::pair<double, double>> yw;
    yw.reserve(s.size());
    for (auto i : s) yw.emplace_back(data_.targets[i], data_.weight(i));
    std::sort(yw.begin(), yw.end());
    double sw = 0, swy = 0;
    for (auto [y, w] : yw) {
      sw += w;
      swy += w * y;
    }
    return sw > 0 ? swy / sw : 0.0;
  }

  int grow(std::vector<std::size_t>& s, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_[static_cast<std::size_t>(id)].value = leaf_value(s);

    if (depth >= params_.max_depth || s.size() < 2 * static_cast<std::size_t>(std::max(1, params_.min_samples_leaf)))
      return id;
    const auto split = best_split(s);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : s) (data_.rows[i][static_cast<std::size_t>(split.feature)] < split.threshold ? left : right).push_back(i);
    std::vector<std::size_t>().swap(s);

    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& n = nodes_[static_cast<std::size_t>(id)];
    n.feature = split.feature;
    n.threshold = split.threshold;
    n.left = l;
    n.right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& s) {
    const std::size_t n = s.size();
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_samples_leaf));
    Split best;
    order_.resize(n);
    for (std::size_t f = 0; f < data_.arity(); ++f) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = s[k];
        order_[k] = {data_.rows[i][f], data_.targets[i], data_.weight(i)};
      }
      std::sort(order_.begin(), order_.end());
      if (order_.front().x == order_.back().x) continue;

      double sw = 0, swy = 0, swyy = 0;
      for (const auto& e : order_) {
        sw += e.w;
        swy += e.w * e.y;
        swyy += e.w * e.y * e.y;
      }
      if (sw <= 0) return best;
      const double parent = swy * swy / sw;
      const double sse = swyy - parent;
      // Splits must reduce the squared error by more than rounding noise.
      const double tolerance = 1e-12 * std::max(std::abs(swyy), 1e-300);
      if (sse <= tolerance) return best;

      double lw = 0, lwy = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        lw += order_[k].w;
        lwy += order_[k].w * order_[k].y;
        if (order_[k].x == order_[k + 1].x) continue;
        if (k + 1 < min_leaf || n - k - 1 < min_leaf) continue;
        const double rw = sw - lw;
        if (lw <= 0 || rw <= 0) continue;
        const double rwy = swy - lwy;
        const double gain = lwy * lwy / lw + rwy * rwy / rw - parent;
        if (gain > tolerance && gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = order_[k].x + (order_[k + 1].x - order_[k].x) / 2;
        }
      }
    }
    return best;
  }

  struct Entry {
    double x, y, w;
    friend auto operator<=>(const Entry&, const Entry&) = default;
  };

  const Dataset& data_;
  TreeParams params_;
  std::vector<RegressionTree::Node> nodes_;
  std::vector<Entry> order_;
};

}  // namespace detail

/// Fits a tree on the given sample indices (repeats allowed, as produced by
/// bootstrap resampling).
inline RegressionTree fit_tree(const Dataset& data, std::vector<std::size_t> samples, TreeParams params = {}) {
  if (samples.empty()) throw ModelError("cannot fit a tree on an empty dataset");
  if (params.max_depth < 0) throw ModelError("max_depth must be non-negative");
  return detail::TreeBuilder(data, params).build(std::move(samples));
}

inline RegressionTree fit_tree(const Dataset& data, TreeParams params = {}) {
  data.check();
  if (data.size() == 0) throw ModelError("cannot fit a tree on an empty dataset");
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_tree(data, std::move(all), params);
}

}  // namespace hetune
