#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amcl/corpus.hpp"
#include "amcl/embeddings.hpp"
#include "amcl/error.hpp"
#include "amcl/textio.hpp"

namespace amcl {

inline constexpr std::size_t kNumMetrics = 13;

enum class Metric : std::size_t {
  bleu, dist1, dist2, dist3, intra1, intra2, intra3,
  emb_average, emb_extrema, emb_greedy, coherence, ent1, ent2,
};

inline constexpr std::array<std::string_view, kNumMetrics> kMetricNames{
    "bleu",        "dist1",       "dist2",      "dist3",     "intra1", "intra2", "intra3",
    "emb_average", "emb_extrema", "emb_greedy", "coherence", "ent1",   "ent2"};

struct MetricVector {
  std::array<double, kNumMetrics> values{};

  double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool operator==(const MetricVector&) const = default;
};

inline nlohmann::ordered_json to_json(const MetricVector& m) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < kNumMetrics; ++i) j[std::string(kMetricNames[i])] = m[i];
  return j;
}

inline MetricVector metric_vector_from_json(const nlohmann::json& j) {
  MetricVector m;
  for (std::size_t i = 0; i < kNumMetrics; ++i) m[i] = j.at(std::string(kMetricNames[i])).get<double>();
  return m;
}

namespace detail {

// n-gram key: tokens joined by the unit separator.
inline std::string ngram_key(const Tokens& toks, std::size_t start, std::size_t n) {
  std::string key = toks[start];
  for (std::size_t k = 1; k < n; ++k) {
    key.push_back('\x1f');
    key += toks[start + k];
  }
  return key;
}

inline std::map<std::string, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[ngram_key(toks, i, n)];
  return counts;
}

inline void check_order(std::size_t n, std::size_t max_n) {
  if (n < 1 || n > max_n) throw ArgumentError("n-gram order out of range");
}

}  // namespace detail

inline constexpr std::size_t kBleuMaxOrder = 4;
inline constexpr double kBleuEpsilon = 1e-9;

// Corpus BLEU-4 against one reference per hypothesis, with brevity penalty.
// An order with matches but no clipped hits uses epsilon in place of zero;
// orders for which no hypothesis is long enough are left out of the mean.
inline double bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  if (hypotheses.size() != references.size())
    throw ArgumentError("bleu: hypothesis and reference counts differ");
  if (hypotheses.empty()) throw DataError("bleu: empty corpus");
  std::array<double, kBleuMaxOrder> matches{}, totals{};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<double>(hypotheses[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= kBleuMaxOrder; ++n) {
      const auto hc = detail::ngram_counts(hypotheses[i], n);
      const auto rc = detail::ngram_counts(references[i], n);
      for (const auto& [g, c] : hc) {
        totals[n - 1] += static_cast<double>(c);
        if (auto it = rc.find(g); it != rc.end())
          matches[n - 1] += static_cast<double>(std::min(c, it->second));
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  int used = 0;
  for (std::size_t n = 0; n < kBleuMaxOrder; ++n) {
    if (totals[n] == 0) continue;
    log_sum += std::log(std::max(matches[n], kBleuEpsilon) / totals[n]);
    ++used;
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_sum / used);
}

// Distinct n-grams across all responses over total n-grams.
inline double distinct_n(std::span<const Tokens> responses, std::size_t n) {
  detail::check_order(n, 3);
  std::set<std::string> unique;
  std::size_t total = 0;
  for (const auto& r : responses) {
    for (std::size_t i = 0; i + n <= r.size(); ++i) unique.insert(detail::ngram_key(r, i, n));
    if (r.size() >= n) total += r.size() - n + 1;
  }
  if (total == 0) throw DataError("distinct-" + std::to_string(n) + ": no n-grams");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

// Mean per-response distinct ratio; responses shorter than n are skipped.
inline double intra_distinct_n(std::span<const Tokens> responses, std::size_t n) {
  detail::check_order(n, 3);
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& r : responses) {
    if (r.size() < n) continue;
    const auto counts = detail::ngram_counts(r, n);
    sum += static_cast<double>(counts.size()) / static_cast<double>(r.size() - n + 1);
    ++counted;
  }
  if (counted == 0) throw DataError("intra-" + std::to_string(n) + ": every response is shorter than n");
  return sum / static_cast<double>(counted);
}

// Entropy (nats) of the pooled n-gram distribution.
inline double entropy_n(std::span<const Tokens> responses, std::size_t n) {
  detail::check_order(n, 2);
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& r : responses)
    for (const auto& [g, c] : detail::ngram_counts(r, n)) {
      counts[g] += c;
      total += c;
    }
  if (total == 0) throw DataError("entropy-" + std::to_string(n) + ": no n-grams");
  double h = 0.0;
  for (const auto& [g, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

enum class EmbeddingMetricKind { average, extrema, greedy };

namespace detail {

inline Vector mean_vector(const EmbeddingTable& table, const Tokens& toks) {
  Vector out(table.dim(), 0.0);
  for (const auto& w : toks) table.accumulate(w, 1.0 / static_cast<double>(toks.size()), out);
  return out;
}

// Per dimension, the coordinate of largest magnitude with its sign.
inline Vector extrema_vector(const EmbeddingTable& table, const Tokens& toks) {
  Vector out(table.dim(), 0.0);
  for (const auto& w : toks) {
    const auto v = table.lookup(w);
    for (std::size_t k = 0; k < v.size(); ++k)
      if (std::abs(v[k]) > std::abs(out[k])) out[k] = v[k];
  }
  return out;
}

inline double greedy_direction(const std::vector<Vector>& from, const std::vector<Vector>& to) {
  double sum = 0.0;
  for (const auto& a : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& b : to) best = std::max(best, cosine(a, b));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace detail

// Average: cosine of mean vectors. Extrema: cosine of extrema vectors.
// Greedy: each token's best cosine against the other side, averaged over
// tokens, then averaged over both directions.
inline double embedding_metric(EmbeddingMetricKind kind, const EmbeddingTable& table,
                               const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  switch (kind) {
    case EmbeddingMetricKind::average:
      return cosine(detail::mean_vector(table, hyp), detail::mean_vector(table, ref));
    case EmbeddingMetricKind::extrema:
      return cosine(detail::extrema_vector(table, hyp), detail::extrema_vector(table, ref));
    case EmbeddingMetricKind::greedy: {
      std::vector<Vector> hv, rv;
      for (const auto& w : hyp) hv.push_back(table.lookup(w));
      for (const auto& w : ref) rv.push_back(table.lookup(w));
      return 0.5 * (detail::greedy_direction(hv, rv) + detail::greedy_direction(rv, hv));
    }
  }
  return 0.0;
}

// Cosine of SIF embeddings of the query and the generated response.
inline double coherence(const EmbeddingTable& table, const Corpus& corpus, const Tokens& query,
                        const Tokens& hyp) {
  return sif_similarity(table, corpus, query, hyp);
}

struct EvalSet {
  std::vector<Tokens> queries;
  std::vector<Tokens> hypotheses;
  std::vector<Tokens> references;
};

// All thirteen metrics over one set of generated responses. Embedding metrics
// and coherence are means over pairs. Diversity metrics that are undefined
// for the set (no n-grams of that order) report 0.
inline MetricVector compute_metrics(const EvalSet& set, const EmbeddingTable& table,
                                    const Corpus& corpus) {
  const std::size_t n = set.hypotheses.size();
  if (n == 0 || set.references.size() != n || set.queries.size() != n)
    throw ArgumentError("evaluation set needs equal, non-zero numbers of queries, hypotheses, references");
  auto or_zero = [](auto&& f) {
    try {
      return f();
    } catch (const DataError&) {
      return 0.0;
    }
  };
  MetricVector m;
  m[Metric::bleu] = bleu(set.hypotheses, set.references);
  for (std::size_t k = 1; k <= 3; ++k) {
    m[static_cast<std::size_t>(Metric::dist1) + k - 1] =
        or_zero([&] { return distinct_n(set.hypotheses, k); });
    m[static_cast<std::size_t>(Metric::intra1) + k - 1] =
        or_zero([&] { return intra_distinct_n(set.hypotheses, k); });
  }
  double avg = 0, ext = 0, gre = 0, coh = 0;
  for (std::size_t i = 0; i < n; ++i) {
    avg += embedding_metric(EmbeddingMetricKind::average, table, set.hypotheses[i], set.references[i]);
    ext += embedding_metric(EmbeddingMetricKind::extrema, table, set.hypotheses[i], set.references[i]);
    gre += embedding_metric(EmbeddingMetricKind::greedy, table, set.hypotheses[i], set.references[i]);
    coh += coherence(table, corpus, set.queries[i], set.hypotheses[i]);
  }
  const double inv = 1.0 / static_cast<double>(n);
  m[Metric::emb_average] = avg * inv;
  m[Metric::emb_extrema] = ext * inv;
  m[Metric::emb_greedy] = gre * inv;
  m[Metric::coherence] = coh * inv;
  m[Metric::ent1] = or_zero([&] { return entropy_n(set.hypotheses, 1); });
  m[Metric::ent2] = or_zero([&] { return entropy_n(set.hypotheses, 2); });
  return m;
}

// Running per-metric min and max over every observed validation turn.
class NormalizationState {
 public:
  void observe(const MetricVector& m) {
    for (std::size_t i = 0; i < kNumMetrics; ++i) {
      if (observations_ == 0) {
        min_[i] = max_[i] = m[i];
      } else {
        min_[i] = std::min(min_[i], m[i]);
        max_[i] = std::max(max_[i], m[i]);
      }
    }
    ++observations_;
  }

  // Maps into [0, 1]; a metric that has never moved maps to 0.5.
  double normalize(std::size_t i, double v) const {
    if (observations_ == 0 || !(max_[i] > min_[i])) return 0.5;
    return std::clamp((v - min_[i]) / (max_[i] - min_[i]), 0.0, 1.0);
  }

  MetricVector normalize(const MetricVector& m) const {
    MetricVector out;
    for (std::size_t i = 0; i < kNumMetrics; ++i) out[i] = normalize(i, m[i]);
    return out;
  }

  std::size_t observations() const noexcept { return observations_; }
  double min(std::size_t i) const { return min_[i]; }
  double max(std::size_t i) const { return max_[i]; }

 private:
  std::array<double, kNumMetrics> min_{}, max_{};
  std::size_t observations_ = 0;
};

// Sum over the thirteen metrics of the change in normalized score.
inline double deviation(const MetricVector& current, const MetricVector& previous,
                        const NormalizationState& norm) {
  double delta = 0.0;
  for (std::size_t i = 0; i < kNumMetrics; ++i)
    delta += norm.normalize(i, current[i]) - norm.normalize(i, previous[i]);
  return delta;
}

}  // namespace amcl
