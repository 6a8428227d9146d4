#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amcl/attributes.hpp"
#include "amcl/error.hpp"
#include "amcl/rng.hpp"

namespace amcl {

enum class Direction { easy_first, anti };

inline std::string_view direction_name(Direction d) {
  return d == Direction::easy_first ? "easy_first" : "anti";
}

// Whether a low score means an easy sample, per attribute. Generic
// (low-NIDF) responses are easy; for every other attribute a high score is
// easy (repetitive, related, continuous, confident).
struct EasyPolarity {
  std::array<bool, kNumAttributes> ascending{true, false, false, false, false};

  bool low_is_easy(Attribute a) const { return ascending[static_cast<std::size_t>(a)]; }
};

struct ProgressConfig {
  double c0 = 0.01;
  std::uint64_t T = 1;

  void validate() const {
    if (!(c0 > 0.0 && c0 <= 1.0)) throw ArgumentError("c0 must lie in (0, 1]");
    if (T < 1) throw ArgumentError("curriculum duration T must be at least 1");
  }
};

// f(t) = min(1, sqrt(t (1 - c0^2) / T + c0^2))
inline double progressing_function(const ProgressConfig& cfg, std::uint64_t t) {
  // endpoints pinned so rounding cannot move them
  if (t == 0) return cfg.c0;
  if (t >= cfg.T) return 1.0;
  const double c2 = cfg.c0 * cfg.c0;
  return std::clamp(std::sqrt(static_cast<double>(t) * (1.0 - c2) / static_cast<double>(cfg.T) + c2),
                    cfg.c0, 1.0);
}

struct Curriculum {
  Attribute attribute = Attribute::specificity;
  Direction direction = Direction::easy_first;
  std::vector<std::size_t> order;  // sample ids, first = drawn first
  std::uint64_t rho = 0;           // batches drawn so far

  std::size_t size() const noexcept { return order.size(); }
};

// Sorts the eligible samples easy to hard (ties broken by ascending id);
// the anti direction is the exact reversal of that order.
inline Curriculum build_curriculum(std::span<const AttributeScores> scores, Attribute attribute,
                                   Direction direction, const EasyPolarity& polarity = {}) {
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(scores.size());
  for (std::size_t id = 0; id < scores.size(); ++id)
    if (auto v = scores[id].value(attribute)) keyed.emplace_back(*v, id);
  if (keyed.empty())
    throw DataError("no eligible samples for the " + std::string(attribute_name(attribute)) +
                    " curriculum");
  const bool ascending = polarity.low_is_easy(attribute);
  std::sort(keyed.begin(), keyed.end(), [ascending](const auto& a, const auto& b) {
    if (a.first != b.first) return ascending ? a.first < b.first : a.first > b.first;
    return a.second < b.second;
  });
  Curriculum c;
  c.attribute = attribute;
  c.direction = direction;
  c.order.reserve(keyed.size());
  for (const auto& [v, id] : keyed) c.order.push_back(id);
  if (direction == Direction::anti) std::reverse(c.order.begin(), c.order.end());
  return c;
}

inline std::vector<Curriculum> build_all_curricula(std::span<const AttributeScores> scores,
                                                   Direction direction,
                                                   const EasyPolarity& polarity = {}) {
  std::vector<Curriculum> out;
  for (auto a : kAllAttributes) out.push_back(build_curriculum(scores, a, direction, polarity));
  return out;
}

// Number of leading ids that may be drawn at progress rho: max(1, ceil(f(rho) N)).
inline std::size_t prefix_size(const Curriculum& c, const ProgressConfig& cfg) {
  const double f = progressing_function(cfg, c.rho);
  const auto k = static_cast<std::size_t>(std::ceil(f * static_cast<double>(c.size())));
  return std::clamp<std::size_t>(k, 1, c.size());
}

// Uniform draw with replacement from the current prefix; advances rho by one.
inline std::vector<std::size_t> sample_batch(Curriculum& c, const ProgressConfig& cfg,
                                             std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
  const std::size_t prefix = prefix_size(c, cfg);
  std::vector<std::size_t> batch(batch_size);
  for (auto& id : batch) id = c.order[rng.below(prefix)];
  ++c.rho;
  return batch;
}

inline std::vector<std::size_t> sample_batch(Curriculum& c, const ProgressConfig& cfg,
                                             std::size_t batch_size, std::uint64_t seed) {
  Rng rng(seed);
  return sample_batch(c, cfg, batch_size, rng);
}

// Per-sample easiness in [0, 1] for each attribute: 1 at the head of the
// easy-first order, 0 at its tail. Samples missing an attribute get 0.5.
inline std::vector<std::array<double, kNumAttributes>> sample_easiness(
    std::span<const AttributeScores> scores, const EasyPolarity& polarity = {}) {
  std::vector<std::array<double, kNumAttributes>> out(scores.size());
  for (auto& row : out) row.fill(0.5);
  for (auto a : kAllAttributes) {
    bool any = false;
    for (const auto& s : scores) any = any || s.value(a).has_value();
    if (!any) continue;
    const auto c = build_curriculum(scores, a, Direction::easy_first, polarity);
    const double denom = c.size() > 1 ? static_cast<double>(c.size() - 1) : 1.0;
    for (std::size_t pos = 0; pos < c.size(); ++pos)
      out[c.order[pos]][static_cast<std::size_t>(a)] =
          c.size() > 1 ? 1.0 - static_cast<double>(pos) / denom : 1.0;
  }
  return out;
}

// One JSON record per curriculum: attribute, direction, and the ordered ids.
inline void write_curriculum(std::ostream& out, const Curriculum& c) {
  nlohmann::ordered_json j;
  j["attribute"] = attribute_name(c.attribute);
  j["direction"] = direction_name(c.direction);
  j["size"] = c.size();
  j["order"] = c.order;
  out << j.dump() << '\n';
}

}  // namespace amcl
