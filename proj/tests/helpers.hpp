#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "amcl/amcl.hpp"

namespace testing_util {

inline amcl::Corpus make_corpus(const std::vector<amcl::Tokens>& queries,
                                const std::vector<amcl::Tokens>& responses,
                                const std::vector<amcl::Tokens>& nexts = {}) {
  std::vector<amcl::DialogueSample> samples;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    amcl::DialogueSample s;
    s.query = i < queries.size() ? queries[i] : amcl::Tokens{};
    s.response = responses[i];
    if (i < nexts.size() && !nexts[i].empty()) s.next_utterance = nexts[i];
    samples.push_back(std::move(s));
  }
  return amcl::Corpus(std::move(samples));
}

inline amcl::EmbeddingTable make_table(const std::map<std::string, std::vector<double>>& m) {
  return amcl::EmbeddingTable::from_vectors({m.begin(), m.end()});
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "amcl_test_XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(file(name), std::ios::binary) << content;
    return file(name);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Synthetic corpus scored end to end, ready for a simulated run.
struct SimSetup {
  amcl::Corpus corpus;
  std::vector<amcl::AttributeScores> scores;
  std::vector<amcl::Curriculum> curricula;
  std::vector<amcl::SimulatedLearner::Easiness> easiness;
};

inline SimSetup sim_setup(std::size_t n, std::uint64_t seed) {
  amcl::SyntheticConfig cfg;
  cfg.samples = n;
  cfg.seed = seed;
  auto syn = amcl::generate_synthetic(cfg);
  SimSetup out;
  out.corpus = amcl::Corpus(syn.samples);
  auto table = amcl::EmbeddingTable::from_vectors(syn.vectors);
  std::unordered_map<std::size_t, double> losses;
  for (std::size_t i = 0; i < syn.losses.size(); ++i) losses[i] = syn.losses[i];
  amcl::FileConfidence conf(std::move(losses));
  out.scores = amcl::score_corpus(out.corpus, table, conf);
  out.curricula = amcl::build_all_curricula(out.scores, amcl::Direction::easy_first);
  out.easiness = amcl::sample_easiness(out.scores);
  return out;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing_util
