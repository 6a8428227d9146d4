#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "amcl/corpus.hpp"
#include "amcl/embeddings.hpp"
#include "amcl/error.hpp"
#include "amcl/textio.hpp"

namespace amcl {

// The five conversational attributes, in curriculum/action index order.
enum class Attribute : std::size_t {
  specificity = 0,
  repetitiveness = 1,
  query_relatedness = 2,
  continuity = 3,
  model_confidence = 4,
};

inline constexpr std::size_t kNumAttributes = 5;

inline constexpr std::array<Attribute, kNumAttributes> kAllAttributes{
    Attribute::specificity, Attribute::repetitiveness, Attribute::query_relatedness,
    Attribute::continuity, Attribute::model_confidence};

inline constexpr std::array<std::string_view, kNumAttributes> kAttributeNames{
    "specificity", "repetitiveness", "query_relatedness", "continuity", "model_confidence"};

inline std::string_view attribute_name(Attribute a) {
  return kAttributeNames[static_cast<std::size_t>(a)];
}

inline Attribute parse_attribute(std::string_view name) {
  for (std::size_t i = 0; i < kNumAttributes; ++i)
    if (kAttributeNames[i] == name) return kAllAttributes[i];
  if (name == "relatedness" || name == "query-relatedness") return Attribute::query_relatedness;
  if (name == "confidence" || name == "model-confidence") return Attribute::model_confidence;
  throw ArgumentError("unknown attribute '" + std::string(name) + "'");
}

struct AttributeScores {
  double specificity = 0.0;
  double repetitiveness = 0.0;
  double query_relatedness = 0.0;
  std::optional<double> continuity;
  double model_confidence = 0.0;

  std::optional<double> value(Attribute a) const {
    switch (a) {
      case Attribute::specificity: return specificity;
      case Attribute::repetitiveness: return repetitiveness;
      case Attribute::query_relatedness: return query_relatedness;
      case Attribute::continuity: return continuity;
      case Attribute::model_confidence: return model_confidence;
    }
    return std::nullopt;
  }

  bool operator==(const AttributeScores&) const = default;
};

// Normalized inverse document frequency over the response collection.
// Returns 0 on a degenerate corpus where every word has the same IDF.
inline double nidf(const Corpus& corpus, const std::string& w) {
  const auto nw = corpus.response_doc_freq(w);
  if (nw == 0) throw ArgumentError("nidf of '" + w + "', which occurs in no response");
  const double range = corpus.idf_max() - corpus.idf_min();
  if (range <= 0.0) return 0.0;
  const double idf =
      std::log(static_cast<double>(corpus.n_responses()) / static_cast<double>(nw));
  return std::clamp((idf - corpus.idf_min()) / range, 0.0, 1.0);
}

// Mean NIDF of the response tokens. Tokens absent from every training response
// score 1, the rarest possible value.
inline double specificity(const Corpus& corpus, const Tokens& response) {
  if (response.empty()) throw ArgumentError("specificity of an empty response");
  double sum = 0.0;
  for (const auto& w : response) sum += corpus.response_doc_freq(w) == 0 ? 1.0 : nidf(corpus, w);
  return sum / static_cast<double>(response.size());
}

// Fraction of tokens that already occurred earlier in the response.
inline double repetitiveness(const Tokens& response) {
  if (response.empty()) throw ArgumentError("repetitiveness of an empty response");
  std::unordered_set<std::string_view> seen;
  std::size_t repeats = 0;
  for (const auto& w : response)
    if (!seen.insert(w).second) ++repeats;
  return static_cast<double>(repeats) / static_cast<double>(response.size());
}

// Cosine between SIF sentence embeddings. An empty side has no embedding and
// scores 0, like an all-unknown sentence.
inline double sif_similarity(const EmbeddingTable& table, const Corpus& corpus, const Tokens& a,
                             const Tokens& b) {
  if (a.empty() || b.empty()) return 0.0;
  return cosine(sif_sentence_embedding(table, corpus, a), sif_sentence_embedding(table, corpus, b));
}

inline double query_relatedness(const EmbeddingTable& table, const Corpus& corpus,
                                const Tokens& query, const Tokens& response) {
  return sif_similarity(table, corpus, query, response);
}

inline double continuity(const EmbeddingTable& table, const Corpus& corpus,
                         const Tokens& response, const std::optional<Tokens>& next_utterance) {
  if (!next_utterance) throw ArgumentError("continuity requires a next utterance");
  return sif_similarity(table, corpus, response, *next_utterance);
}

// Supplies the per-sample loss whose negation is the model-confidence score.
class ConfidenceProvider {
 public:
  virtual ~ConfidenceProvider() = default;
  virtual double loss(const DialogueSample& sample) const = 0;
  virtual std::string describe() const = 0;
};

inline double model_confidence(const ConfidenceProvider& provider, const DialogueSample& sample) {
  return -provider.loss(sample);
}

// Losses read from `id,loss` records (comma, tab, or space separated).
class FileConfidence final : public ConfidenceProvider {
 public:
  explicit FileConfidence(std::unordered_map<std::size_t, double> losses)
      : losses_(std::move(losses)) {}

  static FileConfidence load(const std::string& path) {
    std::unordered_map<std::size_t, double> losses;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string line = lines[i];
      std::replace(line.begin(), line.end(), '\t', ',');
      std::replace(line.begin(), line.end(), ' ', ',');
      auto fields = split_fields(line, ',');
      fields.erase(std::remove(fields.begin(), fields.end(), std::string{}), fields.end());
      if (fields.empty()) continue;
      if (i == 0 && fields[0] == "id") continue;
      if (fields.size() != 2) throw FormatError("expected 'id,loss'", i + 1);
      const double id = parse_double(fields[0], i + 1);
      if (id < 0 || id != std::floor(id)) throw FormatError("invalid sample id", i + 1);
      losses[static_cast<std::size_t>(id)] = parse_double(fields[1], i + 1);
    }
    if (losses.empty()) throw DataError("no losses in '" + path + "'");
    return FileConfidence(std::move(losses));
  }

  double loss(const DialogueSample& sample) const override {
    auto it = losses_.find(sample.id);
    if (it == losses_.end())
      throw DataError("sample " + std::to_string(sample.id) + " missing from confidence file");
    return it->second;
  }

  std::string describe() const override { return "file"; }

 private:
  std::unordered_map<std::size_t, double> losses_;
};

// Add-one smoothed bigram model over training responses. The loss of a sample
// is the mean negative log-likelihood per response token, conditioning the
// first token on a start symbol.
class BigramConfidence final : public ConfidenceProvider {
 public:
  static constexpr std::string_view kStart = "<s>";

  explicit BigramConfidence(const Corpus& corpus) {
    for (const auto& s : corpus.samples()) {
      std::string prev(kStart);
      for (const auto& w : s.response) {
        ++bigrams_[prev][w];
        ++context_totals_[prev];
        prev = w;
      }
    }
    vocab_size_ = corpus.vocab().size();
  }

  double loss(const DialogueSample& sample) const override {
    if (sample.response.empty()) throw ArgumentError("confidence of an empty response");
    double nll = 0.0;
    std::string_view prev = kStart;
    for (const auto& w : sample.response) {
      nll -= std::log(probability(prev, w));
      prev = w;
    }
    return nll / static_cast<double>(sample.response.size());
  }

  double probability(std::string_view prev, const std::string& w) const {
    double count = 0.0, total = 0.0;
    if (auto it = bigrams_.find(std::string(prev)); it != bigrams_.end()) {
      if (auto jt = it->second.find(w); jt != it->second.end()) count = jt->second;
      total = static_cast<double>(context_totals_.at(std::string(prev)));
    }
    return (count + 1.0) / (total + static_cast<double>(vocab_size_));
  }

  std::string describe() const override { return "builtin-bigram"; }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> bigrams_;
  std::unordered_map<std::string, std::size_t> context_totals_;
  std::size_t vocab_size_ = 0;
};

inline AttributeScores score_sample(const Corpus& corpus, const EmbeddingTable& table,
                                    const ConfidenceProvider& provider,
                                    const DialogueSample& s) {
  AttributeScores out;
  out.specificity = specificity(corpus, s.response);
  out.repetitiveness = repetitiveness(s.response);
  out.query_relatedness = query_relatedness(table, corpus, s.query, s.response);
  if (s.next_utterance) out.continuity = continuity(table, corpus, s.response, s.next_utterance);
  out.model_confidence = model_confidence(provider, s);
  return out;
}

// One record per sample, indexed by sample id. Work is split into contiguous
// chunks when threads > 1; output does not depend on the thread count.
inline std::vector<AttributeScores> score_corpus(const Corpus& corpus, const EmbeddingTable& table,
                                                 const ConfidenceProvider& provider,
                                                 unsigned threads = 1) {
  std::vector<AttributeScores> out(corpus.size());
  threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(corpus.size()));
  if (threads == 1) {
    for (const auto& s : corpus.samples()) out[s.id] = score_sample(corpus, table, provider, s);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (corpus.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          const std::size_t end = std::min(corpus.size(), (t + 1) * chunk);
          for (std::size_t i = t * chunk; i < end; ++i)
            out[i] = score_sample(corpus, table, provider, corpus[i]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline constexpr std::string_view kScoresCsvHeader =
    "id,specificity,repetitiveness,query_relatedness,continuity,model_confidence";

// CSV with an empty continuity cell for samples without a next utterance.
inline void write_scores_csv(std::ostream& out, const std::vector<AttributeScores>& scores) {
  out << kScoresCsvHeader << '\n';
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    out << i << ',' << format_double(s.specificity) << ',' << format_double(s.repetitiveness)
        << ',' << format_double(s.query_relatedness) << ','
        << (s.continuity ? format_double(*s.continuity) : std::string{}) << ','
        << format_double(s.model_confidence) << '\n';
  }
}

inline void write_scores_jsonl(std::ostream& out, const std::vector<AttributeScores>& scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    nlohmann::ordered_json j;
    j["id"] = i;
    j["specificity"] = s.specificity;
    j["repetitiveness"] = s.repetitiveness;
    j["query_relatedness"] = s.query_relatedness;
    j["continuity"] = s.continuity ? nlohmann::ordered_json(*s.continuity) : nlohmann::ordered_json(nullptr);
    j["model_confidence"] = s.model_confidence;
    out << j.dump() << '\n';
  }
}

inline std::vector<AttributeScores> read_scores_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != kScoresCsvHeader)
    throw FormatError("missing scores header '" + std::string(kScoresCsvHeader) + "'", 1);
  std::vector<AttributeScores> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_fields(lines[i], ',');
    if (f.size() != 6) throw FormatError("expected 6 fields", i + 1);
    if (parse_double(f[0], i + 1) != static_cast<double>(out.size()))
      throw FormatError("score ids must be dense and ordered", i + 1);
    AttributeScores s;
    s.specificity = parse_double(f[1], i + 1);
    s.repetitiveness = parse_double(f[2], i + 1);
    s.query_relatedness = parse_double(f[3], i + 1);
    if (!f[4].empty()) s.continuity = parse_double(f[4], i + 1);
    s.model_confidence = parse_double(f[5], i + 1);
    out.push_back(s);
  }
  if (out.empty()) throw DataError("no score records in '" + path + "'");
  return out;
}

}  // namespace amcl
