#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amcl/attributes.hpp"
#include "amcl/error.hpp"
#include "amcl/textio.hpp"

namespace amcl {

namespace detail {

inline std::int64_t tied_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Stable merge sort of ys counting strict inversions.
inline std::int64_t count_inversions(std::vector<double>& ys, std::vector<double>& buf,
                                     std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_inversions(ys, buf, lo, mid) + count_inversions(ys, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (ys[j] < ys[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = ys[j++];
    } else {
      buf[k++] = ys[i++];
    }
  }
  while (i < mid) buf[k++] = ys[i++];
  while (j < hi) buf[k++] = ys[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            ys.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace detail

// Kendall tau-b in O(n log n) (Knight's algorithm). Throws when the lengths
// differ, n < 2, a value is not finite, or either list is constant.
inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("kendall_tau: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw DataError("kendall_tau: need at least 2 observations");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw ArgumentError("kendall_tau: non-finite value");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  std::int64_t x_ties = 0, joint_ties = 0;
  std::int64_t x_run = 1, joint_run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    const double x0 = x[order[i - 1]], x1 = x[order[i]];
    if (x0 == x1) {
      ++x_run;
      if (y[order[i - 1]] == y[order[i]]) {
        ++joint_run;
      } else {
        joint_ties += detail::tied_pairs(joint_run);
        joint_run = 1;
      }
    } else {
      x_ties += detail::tied_pairs(x_run);
      joint_ties += detail::tied_pairs(joint_run);
      x_run = joint_run = 1;
    }
  }
  x_ties += detail::tied_pairs(x_run);
  joint_ties += detail::tied_pairs(joint_run);

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::int64_t discordant = detail::count_inversions(ys, buf, 0, n);

  std::int64_t y_ties = 0, y_run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (ys[i] == ys[i - 1]) {
      ++y_run;
    } else {
      y_ties += detail::tied_pairs(y_run);
      y_run = 1;
    }
  }
  y_ties += detail::tied_pairs(y_run);

  if (x_ties == total || y_ties == total) throw DataError("kendall_tau: zero variance");
  // Concordant minus discordant pairs.
  const std::int64_t s = total - x_ties - y_ties + joint_ties - 2 * discordant;
  return static_cast<double>(s) /
         std::sqrt(static_cast<double>(total - x_ties) * static_cast<double>(total - y_ties));
}

struct CorrelationEntry {
  Attribute first;
  Attribute second;
  double tau = 0.0;
  std::size_t n = 0;
};

// The ten unordered attribute pairs, in report order.
inline constexpr std::array<std::pair<Attribute, Attribute>, 10> kAttributePairs{{
    {Attribute::specificity, Attribute::repetitiveness},
    {Attribute::specificity, Attribute::query_relatedness},
    {Attribute::specificity, Attribute::model_confidence},
    {Attribute::specificity, Attribute::continuity},
    {Attribute::repetitiveness, Attribute::query_relatedness},
    {Attribute::repetitiveness, Attribute::model_confidence},
    {Attribute::repetitiveness, Attribute::continuity},
    {Attribute::query_relatedness, Attribute::model_confidence},
    {Attribute::query_relatedness, Attribute::continuity},
    {Attribute::model_confidence, Attribute::continuity},
}};

// Pairs involving continuity use only samples that have it.
inline std::vector<CorrelationEntry> correlation_table(std::span<const AttributeScores> scores) {
  if (scores.size() < 2) throw DataError("correlation table needs at least 2 samples");
  std::vector<CorrelationEntry> out;
  for (const auto& [a, b] : kAttributePairs) {
    std::vector<double> xs, ys;
    xs.reserve(scores.size());
    ys.reserve(scores.size());
    for (const auto& s : scores) {
      auto va = s.value(a), vb = s.value(b);
      if (!va || !vb) continue;
      xs.push_back(*va);
      ys.push_back(*vb);
    }
    out.push_back({a, b, kendall_tau(xs, ys), xs.size()});
  }
  return out;
}

inline std::vector<double> normalize_confidence_minmax(std::span<const double> values) {
  if (values.empty()) throw DataError("min-max normalization of an empty list");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) throw DataError("min-max normalization of a constant list");
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - min) / range);
  return out;
}

struct DistributionSummary {
  std::string attribute;
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  std::size_t outlier_count = 0;
};

// Linear interpolation between order statistics (the R type-7 rule).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Five-number summary, mean, and count of points outside the 1.5 * IQR whiskers.
inline DistributionSummary summarize(std::string attribute, std::span<const double> values) {
  if (values.empty()) throw DataError("summary of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  DistributionSummary s;
  s.attribute = std::move(attribute);
  s.n = v.size();
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const double iqr = s.q3 - s.q1;
  const double lo = s.q1 - 1.5 * iqr, hi = s.q3 + 1.5 * iqr;
  s.outlier_count = static_cast<std::size_t>(
      std::count_if(v.begin(), v.end(), [&](double x) { return x < lo || x > hi; }));
  return s;
}

// Values of one attribute across samples (absent continuity values skipped).
inline std::vector<double> attribute_column(std::span<const AttributeScores> scores, Attribute a) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores)
    if (auto v = s.value(a)) out.push_back(*v);
  return out;
}

// Per-attribute columns as plotted: model confidence is min-max normalized
// when it is not constant.
inline std::vector<double> plotting_column(std::span<const AttributeScores> scores, Attribute a) {
  auto col = attribute_column(scores, a);
  if (a == Attribute::model_confidence && !col.empty()) {
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    if (*hi > *lo) col = normalize_confidence_minmax(col);
  }
  return col;
}

inline std::vector<DistributionSummary> summarize_attributes(
    std::span<const AttributeScores> scores) {
  std::vector<DistributionSummary> out;
  for (auto a : kAllAttributes) {
    auto col = plotting_column(scores, a);
    if (col.empty()) continue;
    out.push_back(summarize(std::string(attribute_name(a)), col));
  }
  return out;
}

struct HistogramBin {
  double lo = 0, hi = 0;
  std::size_t count = 0;
};

inline std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty() || bins == 0) throw DataError("histogram needs values and bins");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double width = *hi_it > lo ? (*hi_it - lo) / static_cast<double>(bins) : 1.0;
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = lo + width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++out[std::min(b, bins - 1)].count;
  }
  return out;
}

inline void write_distribution_csv(std::ostream& out, std::span<const DistributionSummary> rows) {
  out << "attribute,n,min,q1,median,q3,max,mean,outliers\n";
  for (const auto& r : rows)
    out << r.attribute << ',' << r.n << ',' << format_double(r.min) << ',' << format_double(r.q1)
        << ',' << format_double(r.median) << ',' << format_double(r.q3) << ','
        << format_double(r.max) << ',' << format_double(r.mean) << ',' << r.outlier_count << '\n';
}

inline void write_correlation_csv(std::ostream& out, std::span<const CorrelationEntry> rows) {
  out << "first,second,tau_b,n\n";
  for (const auto& r : rows)
    out << attribute_name(r.first) << ',' << attribute_name(r.second) << ','
        << format_double(r.tau) << ',' << r.n << '\n';
}

}  // namespace amcl
