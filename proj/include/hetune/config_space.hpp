#pragma once

// Discrete parameter spaces: definition, enumeration, validation, encoding and
// the random moves used by the search.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hetune/error.hpp"
#include "hetune/rng.hpp"

namespace hetune {

enum class ParameterKind { numeric_range, numeric_levels, categorical };

inline std::string_view to_string(ParameterKind kind) {
  switch (kind) {
    case ParameterKind::numeric_range: return "range";
    case ParameterKind::numeric_levels: return "levels";
    case ParameterKind::categorical: return "categorical";
  }
  return "?";
}

/// One dimension of a space. Numeric parameters hold their admissible values
/// in ascending order; categorical parameters hold codes 0..n-1 and a label per
/// code. A derived parameter is the complement to 100 of its source and adds no
/// free dimension.
struct ParameterDef {
  std::string name;
  ParameterKind kind = ParameterKind::numeric_levels;
  std::vector<std::int64_t> values;
  std::vector<std::string> labels;
  std::optional<std::string> complement_of;

  bool derived() const noexcept { return complement_of.has_value(); }
  bool ordered() const noexcept { return kind != ParameterKind::categorical; }

  bool admits(std::int64_t v) const {
    return std::find(values.begin(), values.end(), v) != values.end();
  }

  std::size_t position(std::int64_t v) const {
    return static_cast<std::size_t>(std::find(values.begin(), values.end(), v) - values.begin());
  }

  /// Integer code of a categorical label (or the parsed integer of a numeric
  /// token). Throws EncodingError for labels the parameter does not know.
  std::int64_t code_of(std::string_view token) const;

  /// Display form of a value: the label for categorical codes.
  std::string format(std::int64_t v) const {
    if (kind == ParameterKind::categorical && v >= 0 && static_cast<std::size_t>(v) < labels.size())
      return labels[static_cast<std::size_t>(v)];
    return std::to_string(v);
  }

  static ParameterDef range(std::string name, std::int64_t lo, std::int64_t hi, std::int64_t step = 1) {
    ParameterDef p{std::move(name), ParameterKind::numeric_range, {}, {}, std::nullopt};
    for (std::int64_t v = lo; v <= hi; v += step) p.values.push_back(v);
    return p;
  }

  static ParameterDef levels(std::string name, std::vector<std::int64_t> values) {
    return ParameterDef{std::move(name), ParameterKind::numeric_levels, std::move(values), {}, std::nullopt};
  }

  static ParameterDef categorical(std::string name, std::vector<std::string> labels) {
    ParameterDef p{std::move(name), ParameterKind::categorical, {}, std::move(labels), std::nullopt};
    for (std::size_t i = 0; i < p.labels.size(); ++i) p.values.push_back(static_cast<std::int64_t>(i));
    return p;
  }

  static ParameterDef complement(std::string name, std::string source) {
    return ParameterDef{std::move(name), ParameterKind::numeric_range, {}, {}, std::move(source)};
  }
};

/// A full assignment, stored positionally in the parameter order of its space.
struct Configuration {
  std::vector<std::int64_t> values;

  friend bool operator==(const Configuration&, const Configuration&) = default;
  friend auto operator<=>(const Configuration&, const Configuration&) = default;
};

struct ConfigurationHash {
  std::size_t operator()(const Configuration& c) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto v : c.values) h = derive_seed(h, static_cast<std::uint64_t>(v));
    return static_cast<std::size_t>(h);
  }
};

using FeatureVector = std::vector<double>;

class ParameterSpace {
 public:
  ParameterSpace() = default;

  /// Validates the definition; derived parameters without explicit values get
  /// the complement of their source's domain. Throws SpaceError.
  ParameterSpace(std::string name, std::vector<ParameterDef> parameters)
      : name_(std::move(name)), params_(std::move(parameters)) {
    if (params_.empty()) throw SpaceError("space '" + name_ + "' has no parameters");
    std::unordered_set<std::string> seen;
    for (const auto& p : params_) {
      if (p.name.empty()) throw SpaceError("space '" + name_ + "': unnamed parameter");
      if (!seen.insert(p.name).second) throw SpaceError("duplicate parameter name '" + p.name + "'");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.derived()) {
        auto src = index_of(*p.complement_of);
        if (!src) throw SpaceError(p.name + ": derived_from references unknown parameter '" + *p.complement_of + "'");
        const auto& s = params_[*src];
        if (s.derived()) throw SpaceError(p.name + ": source '" + s.name + "' is itself derived");
        if (s.kind == ParameterKind::categorical) throw SpaceError(p.name + ": cannot complement a categorical parameter");
        if (p.values.empty()) {
          for (auto v : s.values) p.values.push_back(100 - v);
          std::sort(p.values.begin(), p.values.end());
        }
        if (!p.labels.empty()) throw SpaceError(p.name + ": derived parameters cannot carry labels");
        if (p.kind == ParameterKind::categorical) p.kind = ParameterKind::numeric_range;
        derived_source_.push_back(*src);
      } else {
        derived_source_.push_back(npos);
        free_.push_back(i);
      }
      if (p.values.empty()) throw SpaceError(p.name + ": empty domain");
      std::vector<std::int64_t> sorted = p.values;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw SpaceError(p.name + ": duplicate domain values");
      if (p.kind == ParameterKind::categorical) {
        if (p.labels.size() != p.values.size()) throw SpaceError(p.name + ": every categorical code needs a label");
        for (std::size_t c = 0; c < p.values.size(); ++c)
          if (p.values[c] != static_cast<std::int64_t>(c))
            throw SpaceError(p.name + ": categorical codes must be consecutive from 0");
        std::unordered_set<std::string> labels(p.labels.begin(), p.labels.end());
        if (labels.size() != p.labels.size()) throw SpaceError(p.name + ": duplicate labels");
      } else {
        p.values = std::move(sorted);
      }
    }
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  const std::string& name() const noexcept { return name_; }
  const std::vector<ParameterDef>& parameters() const noexcept { return params_; }
  const ParameterDef& parameter(std::size_t i) const { return params_.at(i); }
  std::size_t size() const noexcept { return params_.size(); }

  /// Positions of the free (non-derived) parameters.
  const std::vector<std::size_t>& free_parameters() const noexcept { return free_; }

  /// Source position of a derived parameter, npos for free ones.
  std::size_t source_of(std::size_t i) const { return derived_source_.at(i); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto i = index_of(name)) return *i;
    throw SpaceError("space '" + name_ + "' has no parameter '" + std::string(name) + "'");
  }

  /// The free parameter that some derived parameter complements: the host
  /// workload fraction. Absent when the space has no complement rule.
  std::optional<std::size_t> workload_parameter() const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (derived_source_[i] != npos) return derived_source_[i];
    return std::nullopt;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (const auto& p : params_) names.push_back(p.name);
    return names;
  }

  /// Recomputes every derived value from its source.
  void fill_derived(Configuration& c) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (derived_source_[i] != npos) c.values[i] = 100 - c.values[derived_source_[i]];
  }

  std::int64_t value(const Configuration& c, std::string_view param) const { return c.values.at(require(param)); }

 private:
  std::string name_;
  std::vector<ParameterDef> params_;
  std::vector<std::size_t> derived_source_;
  std::vector<std::size_t> free_;
};

inline std::int64_t ParameterDef::code_of(std::string_view token) const {
  if (kind == ParameterKind::categorical) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == token) return static_cast<std::int64_t>(i);
  }
  std::int64_t v = 0;
  bool numeric = !token.empty();
  std::size_t pos = (numeric && (token[0] == '-' || token[0] == '+')) ? 1 : 0;
  if (pos == token.size()) numeric = false;
  for (std::size_t i = pos; numeric && i < token.size(); ++i) {
    if (token[i] < '0' || token[i] > '9') numeric = false;
    else v = v * 10 + (token[i] - '0');
  }
  if (!numeric) throw EncodingError(name + ": unknown value '" + std::string(token) + "'");
  return token[0] == '-' ? -v : v;
}

// ---------------------------------------------------------------------------
// Counting and enumeration

/// Product of domain sizes over free parameters; derived ones contribute 1.
inline std::uint64_t cardinality(const ParameterSpace& space) {
  std::uint64_t n = 1;
  for (auto i : space.free_parameters()) n *= space.parameter(i).values.size();
  return n;
}

/// Visits every valid configuration once, in lexicographic order of the free
/// parameters' domains (first parameter slowest). `visit` may return false to stop.
template <typename Visit>
void for_each_configuration(const ParameterSpace& space, Visit&& visit) {
  const auto& free = space.free_parameters();
  std::vector<std::size_t> pos(free.size(), 0);
  Configuration c{std::vector<std::int64_t>(space.size(), 0)};
  for (std::size_t k = 0; k < free.size(); ++k) c.values[free[k]] = space.parameter(free[k]).values[0];
  while (true) {
    space.fill_derived(c);
    if constexpr (std::is_same_v<std::invoke_result_t<Visit&, const Configuration&>, bool>) {
      if (!visit(std::as_const(c))) return;
    } else {
      visit(std::as_const(c));
    }
    std::size_t k = free.size();
    while (k > 0) {
      --k;
      const auto& dom = space.parameter(free[k]).values;
      if (++pos[k] < dom.size()) {
        c.values[free[k]] = dom[pos[k]];
        break;
      }
      pos[k] = 0;
      c.values[free[k]] = dom[0];
      if (k == 0) return;
    }
    if (free.empty()) return;
  }
}

inline std::vector<Configuration> enumerate_all(const ParameterSpace& space) {
  std::vector<Configuration> out;
  out.reserve(static_cast<std::size_t>(cardinality(space)));
  for_each_configuration(space, [&](const Configuration& c) { out.push_back(c); });
  return out;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  enum class Kind { arity, domain, derived } kind;
  std::string parameter;
  std::string message;
};

inline std::vector<Violation> validate(const ParameterSpace& space, const Configuration& c) {
  std::vector<Violation> out;
  if (c.values.size() != space.size()) {
    out.push_back({Violation::Kind::arity, "",
                   "expected " + std::to_string(space.size()) + " values, got " + std::to_string(c.values.size())});
    return out;
  }
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& p = space.parameter(i);
    if (!p.admits(c.values[i]))
      out.push_back({Violation::Kind::domain, p.name, p.name + "=" + std::to_string(c.values[i]) + " is outside its domain"});
  }
  for (std::size_t i = 0; i < space.size(); ++i) {
    auto src = space.source_of(i);
    if (src == ParameterSpace::npos) continue;
    if (c.values[i] != 100 - c.values[src])
      out.push_back({Violation::Kind::derived, space.parameter(i).name,
                     space.parameter(i).name + " must equal 100 - " + space.parameter(src).name});
  }
  return out;
}

inline bool is_valid(const ParameterSpace& space, const Configuration& c) { return validate(space, c).empty(); }

inline void require_valid(const ParameterSpace& space, const Configuration& c) {
  auto v = validate(space, c);
  if (!v.empty()) throw SpaceError(v.front().message);
}

// ---------------------------------------------------------------------------
// Random points and moves

inline Configuration random_config(const ParameterSpace& space, Rng& rng) {
  Configuration c{std::vector<std::int64_t>(space.size(), 0)};
  for (auto i : space.free_parameters()) {
    const auto& dom = space.parameter(i).values;
    c.values[i] = dom[rng.index(dom.size())];
  }
  space.fill_derived(c);
  return c;
}

/// Probability of an adjacent-level move for ordered parameters; the rest of
/// the time the new level is drawn uniformly from the other levels.
inline constexpr double kLocalMoveProbability = 0.5;

/// Changes exactly one free parameter that has more than one value. Ordered
/// domains move to an adjacent level with probability 0.5, otherwise to a
/// uniformly drawn different level; categorical parameters jump to a uniformly
/// drawn different code.
inline Configuration neighbor(const ParameterSpace& space, const Configuration& current, Rng& rng) {
  std::vector<std::size_t> movable;
  for (auto i : space.free_parameters())
    if (space.parameter(i).values.size() > 1) movable.push_back(i);
  if (movable.empty()) throw NoNeighborError("space '" + space.name() + "' has no free parameter with more than one value");

  Configuration next = current;
  const std::size_t i = movable[rng.index(movable.size())];
  const auto& p = space.parameter(i);
  const std::size_t n = p.values.size();
  const std::size_t at = p.position(current.values[i]);

  std::size_t to = 0;
  if (p.ordered() && rng.chance(kLocalMoveProbability)) {
    if (at == 0) to = 1;
    else if (at + 1 == n) to = n - 2;
    else to = rng.chance(0.5) ? at - 1 : at + 1;
  } else {
    to = rng.index(n - 1);
    if (to >= at) ++to;
  }
  next.values[i] = p.values[to];
  space.fill_derived(next);
  return next;
}

// ---------------------------------------------------------------------------
// Encoding

/// One real per parameter in space order. Categorical codes pass through as
/// their integer code, numeric values as themselves.
inline FeatureVector encode(const ParameterSpace& space, const Configuration& c) {
  if (c.values.size() != space.size()) throw SpaceError("configuration arity does not match space '" + space.name() + "'");
  FeatureVector f(c.values.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(c.values[i]);
  return f;
}

inline Configuration decode(const ParameterSpace& space, const FeatureVector& f) {
  if (f.size() < space.size()) throw SpaceError("feature vector shorter than space '" + space.name() + "'");
  Configuration c{std::vector<std::int64_t>(space.size())};
  for (std::size_t i = 0; i < space.size(); ++i) c.values[i] = static_cast<std::int64_t>(f[i]);
  return c;
}

/// Builds a configuration from "NAME=value" pairs (comma separated). Labels are
/// accepted for categorical parameters. Derived parameters may be omitted.
inline Configuration parse_configuration(const ParameterSpace& space, std::string_view text) {
  Configuration c{std::vector<std::int64_t>(space.size(), 0)};
  std::vector<bool> set(space.size(), false);
  while (!text.empty()) {
    auto comma = text.find(',');
    auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw SpaceError("expected NAME=value, got '" + std::string(item) + "'");
    auto i = space.require(item.substr(0, eq));
    c.values[i] = space.parameter(i).code_of(item.substr(eq + 1));
    set[i] = true;
  }
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (set[i]) continue;
    if (space.source_of(i) == ParameterSpace::npos)
      throw SpaceError("missing value for parameter '" + space.parameter(i).name + "'");
    c.values[i] = 100 - c.values[space.source_of(i)];
  }
  return c;
}

inline std::string format_configuration(const ParameterSpace& space, const Configuration& c) {
  std::string out;
  for (std::size_t i = 0; i < space.size() && i < c.values.size(); ++i) {
    if (i) out += ',';
    out += space.parameter(i).name + "=" + space.parameter(i).format(c.values[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundled spaces

/// GPU-accelerated host: only the workload split is tunable.
inline ParameterSpace ida_space() {
  return ParameterSpace("ida", {ParameterDef::range("CPU-W", 0, 100), ParameterDef::complement("GPU-W", "CPU-W")});
}

/// Xeon Phi-accelerated host: threads, affinities and workload split.
inline ParameterSpace emil_space() {
  return ParameterSpace("emil", {
                                    ParameterDef::levels("CPU-T", {12, 24, 36, 48}),
                                    ParameterDef::levels("ACC-T", {60, 120, 180, 240}),
                                    ParameterDef::categorical("CPU-A", {"none", "scatter", "compact"}),
                                    ParameterDef::categorical("ACC-A", {"balanced", "scatter", "compact"}),
                                    ParameterDef::range("CPU-W", 0, 100),
                                    ParameterDef::complement("ACC-W", "CPU-W"),
                                });
}

}  // namespace hetune
