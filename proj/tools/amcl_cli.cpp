// amcl: score, analyze, curriculum, train, eval, synth.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "amcl/amcl.hpp"

#ifndef AMCL_VERSION
#define AMCL_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace amcl;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::string out = ".";
  std::uint64_t seed = 1;
};

struct CorpusOpts {
  std::string path;
  std::string format = "auto";
  bool responses_only = false;

  Corpus load() const {
    if (path.empty()) throw ArgumentError("--corpus is required");
    CorpusFormat f = guess_format(path);
    if (format == "tsv") f = CorpusFormat::tsv;
    if (format == "jsonl") f = CorpusFormat::jsonl;
    return load_corpus(path, f,
                       responses_only ? ProbabilitySource::responses_only : ProbabilitySource::queries_and_responses);
  }
};

struct EmbeddingOpts {
  std::string path;
  bool hashed = false;
  std::size_t dim = 64;
  std::uint64_t seed = 1;

  EmbeddingTable load(const Corpus& corpus) const {
    if (!path.empty()) {
      if (fs::exists(path)) return load_embeddings(path);
      if (!hashed) throw IoError("embeddings file '" + path + "' not found");
      std::cerr << "warning: embeddings file '" << path << "' not found; using hashed random vectors\n";
    } else if (hashed) {
      std::cerr << "warning: no embeddings file given; using hashed random vectors\n";
    } else {
      throw ArgumentError("pass --embeddings PATH or --hashed-embeddings");
    }
    return EmbeddingTable::hashed(dim, seed, corpus);
  }
};

struct ConfidenceOpts {
  std::string source = "builtin";
  std::string file;

  std::unique_ptr<ConfidenceProvider> make(const Corpus& corpus) const {
    if (source == "file") {
      if (file.empty()) throw ArgumentError("--confidence file needs --confidence-file PATH");
      return std::make_unique<FileConfidence>(FileConfidence::load(file));
    }
    return std::make_unique<BigramConfidence>(corpus);
  }
};

void add_corpus(CLI::App* app, CorpusOpts& o, bool required) {
  auto* opt = app->add_option("--corpus", o.path, "dialogue corpus (.tsv or .jsonl)");
  if (required) opt->required();
  app->add_option("--format", o.format, "corpus format")->check(CLI::IsMember({"auto", "tsv", "jsonl"}));
  app->add_flag("--responses-only", o.responses_only, "estimate p(w) from responses only");
}

void add_embeddings(CLI::App* app, EmbeddingOpts& o) {
  app->add_option("--embeddings", o.path, "word vectors, one 'token v1 ... vd' per line");
  app->add_flag("--hashed-embeddings", o.hashed, "fall back to seeded random vectors");
  app->add_option("--hashed-dim", o.dim, "dimension of hashed vectors")->check(CLI::PositiveNumber);
  app->add_option("--embedding-seed", o.seed, "seed for hashed vectors");
}

void add_confidence(CLI::App* app, ConfidenceOpts& o) {
  app->add_option("--confidence", o.source, "model confidence source")
      ->check(CLI::IsMember({"builtin", "file"}));
  app->add_option("--confidence-file", o.file, "per-sample losses as 'id,loss' lines");
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out + "': " + ec.message());
  return p;
}

// Every option of the subcommand, as given or defaulted.
ojson resolved_options(const CLI::App* sub) {
  ojson j = ojson::object();
  for (const CLI::Option* o : sub->get_options()) {
    std::string name = o->get_name();
    if (name == "--help") continue;
    name.erase(0, name.find_first_not_of('-'));
    if (o->count() > 0) {
      const auto& r = o->results();
      j[name] = r.size() == 1 ? ojson(r[0]) : ojson(r);
    } else {
      j[name] = o->get_default_str();
    }
  }
  return j;
}

void write_manifest(const fs::path& dir, const CLI::App* sub, const ojson& extra = ojson::object()) {
  ojson m;
  m["command"] = sub->get_name();
  m["version"] = AMCL_VERSION;
  m["options"] = resolved_options(sub);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  auto out = open_output((dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

std::vector<AttributeScores> scores_for(const std::string& scores_path, const CorpusOpts& co,
                                        const EmbeddingOpts& eo, const ConfidenceOpts& cf, unsigned threads) {
  if (!scores_path.empty()) return read_scores_csv(scores_path);
  const auto corpus = co.load();
  const auto table = eo.load(corpus);
  const auto conf = cf.make(corpus);
  return score_corpus(corpus, table, *conf, threads);
}

std::vector<Tokens> read_sentences(const std::string& path) {
  std::vector<Tokens> out;
  for (const auto& line : read_lines(path)) out.push_back(tokenize(line));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-based multi-curriculum scheduling for dialogue learning"};
  app.set_version_flag("--version", std::string(AMCL_VERSION));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "master seed");
  };

  // score
  CorpusOpts score_corpus_opts;
  EmbeddingOpts score_emb;
  ConfidenceOpts score_conf;
  unsigned threads = 1;
  auto* score = app.add_subcommand("score", "compute the five attributes for every sample");
  add_corpus(score, score_corpus_opts, true);
  add_embeddings(score, score_emb);
  add_confidence(score, score_conf);
  score->add_option("--threads", threads, "scoring threads")->check(CLI::Range(1u, 256u));
  add_common(score);

  // analyze
  std::string analyze_scores;
  CorpusOpts analyze_corpus;
  EmbeddingOpts analyze_emb;
  ConfidenceOpts analyze_conf;
  std::size_t bins = 20;
  auto* analyze = app.add_subcommand("analyze", "distribution summaries and Kendall tau-b table");
  analyze->add_option("--scores", analyze_scores, "scores.csv from 'score' (else scored from --corpus)");
  add_corpus(analyze, analyze_corpus, false);
  add_embeddings(analyze, analyze_emb);
  add_confidence(analyze, analyze_conf);
  analyze->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
  analyze->add_option("--threads", threads, "scoring threads")->check(CLI::Range(1u, 256u));
  add_common(analyze);

  // curriculum
  std::string cur_scores;
  std::string direction = "both";
  auto* curriculum = app.add_subcommand("curriculum", "write the easy-to-hard order for each attribute");
  curriculum->add_option("--scores", cur_scores, "scores.csv from 'score'")->required();
  curriculum->add_option("--direction", direction, "order direction")
      ->check(CLI::IsMember({"easy_first", "anti", "both"}));
  add_common(curriculum);

  // train
  std::string train_scores;
  std::string mode = "adaptive";
  std::string learner_kind = "sim";
  std::string learner_cmd;
  std::string valid_path;
  double learner_timeout = 60.0;
  std::uint64_t noise_seed = 0;
  TrainConfig tc;
  CorpusOpts train_corpus;
  EmbeddingOpts train_emb;
  ConfidenceOpts train_conf;
  auto* train = app.add_subcommand("train", "run the curriculum scheduler against a learner");
  train->add_option("--scores", train_scores, "scores.csv (else scored from --corpus)");
  add_corpus(train, train_corpus, false);
  add_embeddings(train, train_emb);
  add_confidence(train, train_conf);
  train->add_option("--mode", mode, "adaptive | random_policy | anti | none | single:<attribute>");
  train->add_option("--gamma", tc.gamma, "training steps between validations")->check(CLI::PositiveNumber);
  train->add_option("--T", tc.progress.T, "curriculum duration in batches")->check(CLI::PositiveNumber);
  train->add_option("--c0", tc.progress.c0, "initial curriculum fraction")->check(CLI::Range(1e-12, 1.0));
  train->add_option("--batch-size", tc.batch_size, "samples per batch")->check(CLI::PositiveNumber);
  train->add_option("--max-steps", tc.max_steps, "training steps");
  train->add_option("--policy-lr", tc.policy_learning_rate, "REINFORCE step size");
  train->add_option("--patience", tc.patience, "stop after this many negative deviations in a row (0 = off)");
  train->add_flag("--baseline", tc.moving_average_baseline, "subtract a moving-average reward baseline");
  train->add_option("--baseline-decay", tc.baseline_decay, "baseline decay")->check(CLI::Range(0.0, 1.0));
  train->add_option("--reward-epsilon", tc.reward.epsilon, "floor on |previous deviation|")
      ->check(CLI::PositiveNumber);
  train->add_option("--reward-clip", tc.reward.clip, "reward clip bound")->check(CLI::PositiveNumber);
  train->add_option("--learner", learner_kind, "sim or external")->check(CLI::IsMember({"sim", "external"}));
  train->add_option("--learner-cmd", learner_cmd, "command line of an external learner");
  train->add_option("--learner-timeout", learner_timeout, "seconds to wait for each reply")
      ->check(CLI::PositiveNumber);
  train->add_option("--valid", valid_path, "validation corpus for the external learner");
  train->add_option("--noise-seed", noise_seed, "simulated learner noise seed");
  add_common(train);

  // eval
  std::string hyp_path, ref_path, query_path;
  CorpusOpts eval_corpus;
  EmbeddingOpts eval_emb;
  auto* eval = app.add_subcommand("eval", "compute the thirteen metrics for generated responses");
  eval->add_option("--hyp", hyp_path, "generated responses, one per line")->required();
  eval->add_option("--ref", ref_path, "reference responses, one per line")->required();
  eval->add_option("--query", query_path, "queries, one per line")->required();
  add_corpus(eval, eval_corpus, false);
  add_embeddings(eval, eval_emb);
  add_common(eval);

  // synth
  SyntheticConfig sc;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with independent attributes");
  synth->add_option("--samples", sc.samples, "number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--dim", sc.dim, "embedding dimension")->check(CLI::PositiveNumber);
  add_common(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*score) {
      const auto dir = out_dir(common);
      const auto corpus = score_corpus_opts.load();
      if (corpus.dropped()) std::cerr << "warning: dropped " << corpus.dropped() << " samples with empty responses\n";
      const auto table = score_emb.load(corpus);
      const auto conf = score_conf.make(corpus);
      const auto scores = score_corpus(corpus, table, *conf, threads);
      {
        auto out = open_output((dir / "scores.csv").string());
        write_scores_csv(out, scores);
      }
      {
        auto out = open_output((dir / "scores.jsonl").string());
        write_scores_jsonl(out, scores);
      }
      write_manifest(dir, score,
                     {{"samples", corpus.size()}, {"dropped", corpus.dropped()}, {"confidence", conf->describe()},
                      {"embedding_dim", table.dim()}});
      std::cout << "scored " << scores.size() << " samples -> " << (dir / "scores.csv").string() << '\n';
    } else if (*analyze) {
      const auto dir = out_dir(common);
      const auto scores = scores_for(analyze_scores, analyze_corpus, analyze_emb, analyze_conf, threads);
      if (scores.size() < 2) throw DataError("analysis needs at least 2 samples (n < 2)");
      const auto table = correlation_table(scores);
      const auto summary = summarize_attributes(scores);
      {
        auto out = open_output((dir / "correlation.csv").string());
        write_correlation_csv(out, table);
      }
      {
        auto out = open_output((dir / "distribution.csv").string());
        write_distribution_csv(out, summary);
      }
      {
        auto out = open_output((dir / "histograms.csv").string());
        out << "attribute,bin_lo,bin_hi,count\n";
        for (auto a : kAllAttributes) {
          const auto col = plotting_column(scores, a);
          if (col.empty()) continue;
          for (const auto& b : histogram(col, bins))
            out << attribute_name(a) << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count
                << '\n';
        }
      }
      write_manifest(dir, analyze, {{"samples", scores.size()}});
      for (const auto& e : table)
        std::cout << attribute_name(e.first) << " ~ " << attribute_name(e.second) << ": tau_b = "
                  << format_double(e.tau) << " (n = " << e.n << ")\n";
    } else if (*curriculum) {
      const auto dir = out_dir(common);
      const auto scores = read_scores_csv(cur_scores);
      auto out = open_output((dir / "curricula.jsonl").string());
      for (auto d : {Direction::easy_first, Direction::anti}) {
        if (direction != "both" && direction != direction_name(d)) continue;
        for (auto a : kAllAttributes) {
          bool any = false;
          for (const auto& s : scores) any = any || s.value(a).has_value();
          if (!any) {
            std::cerr << "warning: no sample has " << attribute_name(a) << "; curriculum skipped\n";
            continue;
          }
          write_curriculum(out, build_curriculum(scores, a, d));
        }
      }
      out.close();
      write_manifest(dir, curriculum, {{"samples", scores.size()}});
    } else if (*train) {
      const auto dir = out_dir(common);
      tc.mode = parse_mode(mode);
      tc.seed = common.seed;
      tc.progress.validate();
      RunReport report;
      if (learner_kind == "sim") {
        const auto scores = scores_for(train_scores, train_corpus, train_emb, train_conf, 1);
        const auto curricula = tc.mode.mode == ScheduleMode::none
                                   ? std::vector<Curriculum>{}
                                   : build_all_curricula(scores, Direction::easy_first);
        SimulatedLearnerConfig lc;
        lc.noise_seed = noise_seed;
        SimulatedLearner learner(lc, sample_easiness(scores));
        report = train_loop(learner, curricula, scores.size(), tc);
      } else {
        if (learner_cmd.empty()) throw ArgumentError("--learner external needs --learner-cmd");
        if (valid_path.empty()) throw ArgumentError("--learner external needs --valid");
        const auto corpus = train_corpus.load();
        CorpusOpts vo = train_corpus;
        vo.path = valid_path;
        const auto valid = vo.load();
        const auto table = train_emb.load(corpus);
        std::vector<AttributeScores> scores;
        if (!train_scores.empty()) {
          scores = read_scores_csv(train_scores);
          if (scores.size() != corpus.size())
            throw DataError("scores file has " + std::to_string(scores.size()) + " records for " +
                            std::to_string(corpus.size()) + " samples");
        } else {
          const auto conf = train_conf.make(corpus);
          scores = score_corpus(corpus, table, *conf);
        }
        const auto curricula = tc.mode.mode == ScheduleMode::none
                                   ? std::vector<Curriculum>{}
                                   : build_all_curricula(scores, Direction::easy_first);
        ExternalLearner learner(learner_cmd, corpus, valid, table, {{"seed", common.seed}},
                                std::chrono::milliseconds(static_cast<long>(learner_timeout * 1000)));
        report = train_loop(learner, curricula, corpus.size(), tc);
        const int code = learner.shutdown();
        if (code != 0) std::cerr << "warning: learner exited with status " << code << '\n';
      }
      {
        auto out = open_output((dir / "steps.jsonl").string());
        write_steps_jsonl(out, report);
      }
      {
        auto out = open_output((dir / "steps.csv").string());
        write_steps_csv(out, report);
      }
      {
        auto out = open_output((dir / "validations.jsonl").string());
        write_validations_jsonl(out, report);
      }
      {
        auto out = open_output((dir / "validations.csv").string());
        write_validations_csv(out, report);
      }
      {
        auto out = open_output((dir / "summary.json").string());
        out << summary_json(report).dump(2) << '\n';
      }
      write_manifest(dir, train, {{"train_config", to_json(tc)}, {"learner", learner_kind}});
      std::cout << mode_name(tc.mode) << ": " << report.steps.size() << " steps, " << report.validations.size()
                << " validations";
      if (auto s = report.final_score()) std::cout << ", final score " << format_double(*s);
      std::cout << '\n';
    } else if (*eval) {
      const auto dir = out_dir(common);
      EvalSet set{read_sentences(query_path), read_sentences(hyp_path), read_sentences(ref_path)};
      if (set.hypotheses.size() != set.references.size() || set.queries.size() != set.references.size())
        throw DataError("--hyp, --ref and --query must have the same number of lines");
      Corpus corpus;
      if (!eval_corpus.path.empty()) {
        corpus = eval_corpus.load();
      } else {
        std::vector<DialogueSample> samples;
        for (std::size_t i = 0; i < set.references.size(); ++i) {
          if (set.references[i].empty()) continue;
          DialogueSample s;
          s.query = set.queries[i];
          s.response = set.references[i];
          samples.push_back(std::move(s));
        }
        corpus = Corpus(std::move(samples));
      }
      const auto table = eval_emb.load(corpus);
      const auto m = compute_metrics(set, table, corpus);
      {
        auto out = open_output((dir / "metrics.json").string());
        out << to_json(m).dump(2) << '\n';
      }
      write_manifest(dir, eval, {{"pairs", set.hypotheses.size()}});
      for (std::size_t i = 0; i < kNumMetrics; ++i) std::cout << kMetricNames[i] << ' ' << format_double(m[i]) << '\n';
    } else if (*synth) {
      const auto dir = out_dir(common);
      sc.seed = common.seed;
      const auto syn = generate_synthetic(sc);
      auto join = [](const Tokens& t) {
        std::string s;
        for (const auto& w : t) s += (s.empty() ? "" : " ") + w;
        return s;
      };
      {
        auto out = open_output((dir / "corpus.tsv").string());
        for (const auto& s : syn.samples)
          out << join(s.query) << '\t' << join(s.response) << '\t' << join(*s.next_utterance) << '\n';
      }
      {
        auto out = open_output((dir / "losses.csv").string());
        out << "id,loss\n";
        for (std::size_t i = 0; i < syn.losses.size(); ++i) out << i << ',' << format_double(syn.losses[i]) << '\n';
      }
      {
        std::vector<std::string> words;
        for (const auto& [w, v] : syn.vectors) words.push_back(w);
        std::sort(words.begin(), words.end());
        auto out = open_output((dir / "embeddings.txt").string());
        for (const auto& w : words) {
          out << w;
          for (double x : syn.vectors.at(w)) out << ' ' << format_double(x);
          out << '\n';
        }
      }
      write_manifest(dir, synth);
      std::cout << "wrote " << syn.samples.size() << " samples to " << dir.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
