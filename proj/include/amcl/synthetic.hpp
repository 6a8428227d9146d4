#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "amcl/corpus.hpp"
#include "amcl/embeddings.hpp"
#include "amcl/rng.hpp"

namespace amcl {

// Generator for corpora whose five attributes are driven by independent
// per-sample fields:
//  - specificity: every content word of a sample comes from one frequency band;
//  - repetitiveness: a tail of sample-unique, unembedded tokens, some repeated;
//  - relatedness / continuity: how many response content words the query /
//    next utterance copies;
//  - confidence: an independent per-sample loss.
// Band-uniform content keeps SIF weights equal inside a sentence, and the tail
// tokens have no vectors, so the fields do not leak into each other.
struct SyntheticConfig {
  std::size_t samples = 1000;
  std::uint64_t seed = 7;
  std::size_t content_words = 6;
  std::size_t tail_words = 6;
  std::size_t bands = 6;
  std::size_t band0_size = 16;   // words in the most common band
  std::size_t band_growth = 4;   // size ratio between consecutive bands
  std::size_t dim = 64;
};

struct SyntheticCorpus {
  std::vector<DialogueSample> samples;
  std::vector<double> losses;  // per sample id
  std::unordered_map<std::string, Vector> vectors;
};

inline SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  Rng rng(cfg.seed);
  SyntheticCorpus out;
  std::vector<std::size_t> band_sizes;
  for (std::size_t b = 0, size = cfg.band0_size; b < cfg.bands; ++b, size *= cfg.band_growth)
    band_sizes.push_back(size);

  auto word = [&](std::size_t band, std::size_t idx) {
    std::string w = "b" + std::to_string(band) + "w" + std::to_string(idx);
    if (!out.vectors.contains(w)) {
      Rng vr(derive_seed(cfg.seed ^ fnv1a(w), 17));
      Vector v(cfg.dim);
      double norm = 0.0;
      for (auto& x : v) {
        x = vr.normal();
        norm += x * x;
      }
      for (auto& x : v) x /= std::sqrt(norm);
      out.vectors.emplace(w, std::move(v));
    }
    return w;
  };
  // n distinct words of one band, none of them in `exclude`.
  auto distinct = [&](std::size_t band, std::size_t n, const Tokens& exclude) {
    Tokens t;
    while (t.size() < n) {
      auto w = word(band, rng.below(band_sizes[band]));
      if (std::find(t.begin(), t.end(), w) == t.end() &&
          std::find(exclude.begin(), exclude.end(), w) == exclude.end())
        t.push_back(std::move(w));
    }
    return t;
  };

  // Copies k distinct response content words; the rest are other words of the
  // same band, so every content word in the corpus has band-level frequency.
  auto related = [&](const Tokens& content, double level, std::size_t band) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < content.size(); ++i) k += rng.uniform() < level ? 1 : 0;
    std::vector<std::size_t> idx(content.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    Tokens t = distinct(band, content.size() - k, content);
    for (std::size_t i = 0; i < k; ++i) t.push_back(content[idx[i]]);
    for (std::size_t i = 0; i < t.size(); ++i) std::swap(t[i], t[i + rng.below(t.size() - i)]);
    return t;
  };

  for (std::size_t id = 0; id < cfg.samples; ++id) {
    const double spec_level = rng.uniform();
    const double rep_level = rng.uniform();
    const double rel_level = rng.uniform();
    const double cont_level = rng.uniform();
    const double loss = 1.0 + 4.0 * rng.uniform();
    const auto band = std::min<std::size_t>(cfg.bands - 1, static_cast<std::size_t>(spec_level * cfg.bands));

    const Tokens content = distinct(band, cfg.content_words, {});
    Tokens tail;
    for (std::size_t i = 0; i < cfg.tail_words; ++i) {
      if (i > 0 && rng.uniform() < rep_level)
        tail.push_back(tail[rng.below(tail.size())]);
      else
        tail.push_back("t" + std::to_string(id) + "x" + std::to_string(i));
    }
    DialogueSample s;
    s.id = id;
    s.response = content;
    s.response.insert(s.response.end(), tail.begin(), tail.end());
    s.query = related(content, rel_level, band);
    s.next_utterance = related(content, cont_level, band);
    auto join = [](const Tokens& t) {
      std::string j;
      for (const auto& w : t) j += (j.empty() ? "" : " ") + w;
      return j;
    };
    s.raw_query = join(s.query);
    s.raw_response = join(s.response);
    out.samples.push_back(std::move(s));
    out.losses.push_back(loss);
  }
  return out;
}

}  // namespace amcl
