#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "amcl/corpus.hpp"
#include "amcl/error.hpp"
#include "amcl/rng.hpp"

namespace amcl {

using Vector = std::vector<double>;

enum class EmbeddingSource { file, hashed };

// Smoothing constant of the SIF weight a / (a + p(w)).
inline constexpr double kSifSmoothing = 0.001;

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Word vectors keyed by token. File tables map unknown tokens to the zero
// vector; hashed tables derive a unit vector from (token, dim, seed) so every
// token has one.
class EmbeddingTable {
 public:
  static EmbeddingTable hashed(std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw ArgumentError("embedding dimension must be positive");
    EmbeddingTable t;
    t.dim_ = dim;
    t.source_ = EmbeddingSource::hashed;
    t.seed_ = seed;
    return t;
  }

  // Hashed table with vectors precomputed for every token in the corpus.
  static EmbeddingTable hashed(std::size_t dim, std::uint64_t seed, const Corpus& corpus) {
    auto t = hashed(dim, seed);
    auto add = [&](const Tokens& toks) {
      for (const auto& w : toks)
        if (!t.vectors_.contains(w)) t.vectors_.emplace(w, t.hashed_vector(w));
    };
    for (const auto& s : corpus.samples()) {
      add(s.query);
      add(s.response);
      if (s.next_utterance) add(*s.next_utterance);
    }
    return t;
  }

  static EmbeddingTable from_vectors(std::unordered_map<std::string, Vector> vectors) {
    if (vectors.empty()) throw DataError("no vectors");
    EmbeddingTable t;
    t.dim_ = vectors.begin()->second.size();
    if (t.dim_ == 0) throw FormatError("embedding vectors must be non-empty");
    for (const auto& [w, v] : vectors)
      if (v.size() != t.dim_) throw FormatError("inconsistent dimension for token '" + w + "'");
    t.vectors_ = std::move(vectors);
    return t;
  }

  std::size_t dim() const noexcept { return dim_; }
  EmbeddingSource source() const noexcept { return source_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool contains(const std::string& w) const {
    return source_ == EmbeddingSource::hashed || vectors_.contains(w);
  }

  Vector lookup(const std::string& w) const {
    if (auto it = vectors_.find(w); it != vectors_.end()) return it->second;
    if (source_ == EmbeddingSource::hashed) return hashed_vector(w);
    return Vector(dim_, 0.0);
  }

  // out += weight * emb(w)
  void accumulate(const std::string& w, double weight, std::span<double> out) const {
    if (auto it = vectors_.find(w); it != vectors_.end()) {
      for (std::size_t k = 0; k < dim_; ++k) out[k] += weight * it->second[k];
    } else if (source_ == EmbeddingSource::hashed) {
      const auto v = hashed_vector(w);
      for (std::size_t k = 0; k < dim_; ++k) out[k] += weight * v[k];
    }
  }

 private:
  Vector hashed_vector(const std::string& w) const {
    Rng rng(derive_seed(seed_ ^ fnv1a(w), dim_));
    Vector v(dim_);
    double norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  }

  std::size_t dim_ = 0;
  EmbeddingSource source_ = EmbeddingSource::file;
  std::uint64_t seed_ = 0;
  std::unordered_map<std::string, Vector> vectors_;
};

// Reads `token v1 ... vd` lines. A leading `count dim` header line, as written
// by word2vec and fastText, is skipped.
inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file '" + path + "'");
  std::unordered_map<std::string, Vector> vectors;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    Vector v;
    std::string field;
    while (ss >> field) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size()) throw FormatError("unparsable number '" + field + "'", lineno);
      v.push_back(x);
    }
    if (lineno == 1 && v.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos)
      continue;
    if (v.empty()) throw FormatError("token '" + token + "' has no vector", lineno);
    if (dim == 0) dim = v.size();
    if (v.size() != dim)
      throw FormatError("inconsistent dimension: expected " + std::to_string(dim) + ", got " +
                            std::to_string(v.size()),
                        lineno);
    vectors.insert_or_assign(std::move(token), std::move(v));
  }
  if (vectors.empty()) throw DataError("no vectors in '" + path + "'");
  return EmbeddingTable::from_vectors(std::move(vectors));
}

inline double sif_weight(double p) { return kSifSmoothing / (kSifSmoothing + p); }

// (1/|e|) * sum_w a/(a + p(w)) * emb(w). Unknown words add nothing but still
// count in |e|.
inline Vector sif_sentence_embedding(const EmbeddingTable& table, const Corpus& corpus,
                                     const Tokens& sentence) {
  if (sentence.empty()) throw ArgumentError("sentence embedding of an empty sentence");
  Vector out(table.dim(), 0.0);
  const double inv_len = 1.0 / static_cast<double>(sentence.size());
  for (const auto& w : sentence)
    table.accumulate(w, inv_len * sif_weight(corpus.unigram_probability(w)), out);
  return out;
}

// Cosine similarity; 0 when either vector has zero norm.
inline double cosine(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ArgumentError("cosine of vectors with dimensions " + std::to_string(x.size()) + " and " +
                        std::to_string(y.size()));
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) return 0.0;
  const double c = dot / (std::sqrt(nx) * std::sqrt(ny));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace amcl
