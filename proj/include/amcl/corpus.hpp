#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "amcl/error.hpp"

namespace amcl {

using Tokens = std::vector<std::string>;

// Lowercases ASCII letters, emits every ASCII punctuation character as its own
// token, and splits on whitespace. Bytes >= 0x80 are word characters, so UTF-8
// text passes through unchanged.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

struct DialogueSample {
  std::size_t id = 0;
  Tokens query;
  Tokens response;
  std::optional<Tokens> next_utterance;
  std::string raw_query;
  std::string raw_response;
  std::optional<std::string> conv_id;
};

enum class CorpusFormat { tsv, jsonl };

// Which text feeds the unigram model p(w).
enum class ProbabilitySource { queries_and_responses, responses_only };

// Immutable after construction. Response statistics (N_w, N_r, IDF range)
// drive specificity; the unigram model drives SIF weighting.
class Corpus {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Corpus() = default;

  explicit Corpus(std::vector<DialogueSample> samples,
                  ProbabilitySource source = ProbabilitySource::queries_and_responses,
                  std::size_t dropped = 0)
      : samples_(std::move(samples)), source_(source), dropped_(dropped) {
    if (samples_.empty()) throw DataError("zero usable samples");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      samples_[i].id = i;
      if (samples_[i].response.empty())
        throw DataError("sample " + std::to_string(i) + " has an empty response");
    }
    index_statistics();
  }

  const std::vector<DialogueSample>& samples() const noexcept { return samples_; }
  const DialogueSample& operator[](std::size_t i) const { return samples_.at(i); }
  std::size_t size() const noexcept { return samples_.size(); }
  std::size_t dropped() const noexcept { return dropped_; }
  ProbabilitySource probability_source() const noexcept { return source_; }

  // Response vocabulary, in first-seen order.
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  std::size_t vocab_id(const std::string& w) const {
    auto it = vocab_index_.find(w);
    return it == vocab_index_.end() ? npos : it->second;
  }

  std::size_t n_responses() const noexcept { return samples_.size(); }

  // N_w: number of responses containing w; 0 if w never occurs in a response.
  std::size_t response_doc_freq(const std::string& w) const {
    const auto id = vocab_id(w);
    return id == npos ? 0 : doc_freq_[id];
  }

  double idf_min() const noexcept { return idf_min_; }
  double idf_max() const noexcept { return idf_max_; }

  // Maximum-likelihood unigram probability; 0 for unseen tokens.
  double unigram_probability(const std::string& w) const {
    auto it = unigram_counts_.find(w);
    if (it == unigram_counts_.end() || total_tokens_ == 0) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(total_tokens_);
  }
  std::size_t total_tokens() const noexcept { return total_tokens_; }
  const std::map<std::string, std::size_t>& unigram_counts() const noexcept {
    return unigram_counts_;
  }

 private:
  void index_statistics() {
    std::vector<std::size_t> last_seen;
    for (const auto& s : samples_) {
      for (const auto& w : s.response) {
        auto [it, inserted] = vocab_index_.try_emplace(w, vocab_.size());
        if (inserted) {
          vocab_.push_back(w);
          doc_freq_.push_back(0);
          last_seen.push_back(npos);
        }
        // Count each response at most once per word.
        if (last_seen[it->second] != s.id) {
          last_seen[it->second] = s.id;
          ++doc_freq_[it->second];
        }
      }
      auto count = [&](const Tokens& toks) {
        for (const auto& w : toks) ++unigram_counts_[w];
        total_tokens_ += toks.size();
      };
      if (source_ == ProbabilitySource::queries_and_responses) count(s.query);
      count(s.response);
    }
    idf_min_ = std::numeric_limits<double>::infinity();
    idf_max_ = -std::numeric_limits<double>::infinity();
    const auto nr = static_cast<double>(samples_.size());
    for (auto df : doc_freq_) {
      const double idf = std::log(nr / static_cast<double>(df));
      idf_min_ = std::min(idf_min_, idf);
      idf_max_ = std::max(idf_max_, idf);
    }
  }

  std::vector<DialogueSample> samples_;
  ProbabilitySource source_ = ProbabilitySource::queries_and_responses;
  std::size_t dropped_ = 0;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> vocab_index_;
  std::vector<std::size_t> doc_freq_;
  std::map<std::string, std::size_t> unigram_counts_;
  std::size_t total_tokens_ = 0;
  double idf_min_ = 0.0;
  double idf_max_ = 0.0;
};

inline double unigram_probability(const Corpus& corpus, const std::string& w) {
  return corpus.unigram_probability(w);
}

namespace detail {

struct RawRecord {
  std::string query;
  std::string response;
  std::optional<std::string> next_utterance;
  std::optional<std::string> conv_id;
};

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find('\t', start);
    cols.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cols;
}

inline RawRecord parse_tsv_line(const std::string& line, std::size_t lineno) {
  auto cols = split_tabs(line);
  if (cols.size() < 2 || cols.size() > 3)
    throw FormatError("expected 2 or 3 tab-separated columns, got " + std::to_string(cols.size()),
                      lineno);
  RawRecord rec{std::move(cols[0]), std::move(cols[1]), std::nullopt, std::nullopt};
  if (cols.size() == 3 && !cols[2].empty()) rec.next_utterance = std::move(cols[2]);
  return rec;
}

inline RawRecord parse_jsonl_line(const std::string& line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), lineno);
  }
  if (!j.is_object()) throw FormatError("record is not an object", lineno);
  auto text_field = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw FormatError(std::string("field '") + key + "' is not a string", lineno);
    return it->get<std::string>();
  };
  RawRecord rec;
  auto q = text_field("query");
  auto r = text_field("response");
  if (!q) throw FormatError("missing field 'query'", lineno);
  if (!r) throw FormatError("missing field 'response'", lineno);
  rec.query = std::move(*q);
  rec.response = std::move(*r);
  rec.next_utterance = text_field("next_utterance");
  if (auto it = j.find("conv_id"); it != j.end() && !it->is_null()) {
    if (it->is_string())
      rec.conv_id = it->get<std::string>();
    else if (it->is_number_integer())
      rec.conv_id = std::to_string(it->get<long long>());
    else
      throw FormatError("field 'conv_id' must be a string or integer", lineno);
  }
  return rec;
}

}  // namespace detail

// Builds samples from raw records: tokenizes, drops empty responses, and fills
// a missing next utterance from the following sample of the same conversation.
inline Corpus corpus_from_records(const std::vector<detail::RawRecord>& records,
                                  ProbabilitySource source) {
  std::vector<DialogueSample> samples;
  std::size_t dropped = 0;
  for (const auto& rec : records) {
    DialogueSample s;
    s.response = tokenize(rec.response);
    if (s.response.empty()) {
      ++dropped;
      continue;
    }
    s.query = tokenize(rec.query);
    s.raw_query = rec.query;
    s.raw_response = rec.response;
    s.conv_id = rec.conv_id;
    if (rec.next_utterance) {
      auto u = tokenize(*rec.next_utterance);
      if (!u.empty()) s.next_utterance = std::move(u);
    }
    samples.push_back(std::move(s));
  }
  std::map<std::string, std::size_t> last_in_conv;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].conv_id) continue;
    auto [it, inserted] = last_in_conv.try_emplace(*samples[i].conv_id, i);
    if (!inserted) {
      auto& prev = samples[it->second];
      if (!prev.next_utterance) prev.next_utterance = samples[i].response;
      it->second = i;
    }
  }
  if (samples.empty()) throw DataError("zero usable samples");
  return Corpus(std::move(samples), source, dropped);
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format,
                          ProbabilitySource source = ProbabilitySource::queries_and_responses) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  std::vector<detail::RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    records.push_back(format == CorpusFormat::tsv ? detail::parse_tsv_line(line, lineno)
                                                  : detail::parse_jsonl_line(line, lineno));
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return corpus_from_records(records, source);
}

// Picks the format from the file extension: .jsonl/.json are records, all else TSV.
inline CorpusFormat guess_format(const std::string& path) {
  auto ends_with = [&](std::string_view suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends_with(".jsonl") || ends_with(".json") ? CorpusFormat::jsonl : CorpusFormat::tsv;
}

}  // namespace amcl
