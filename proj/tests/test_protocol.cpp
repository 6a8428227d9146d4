#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace amcl;
using namespace std::chrono_literals;

namespace {
std::string learner(const std::string& mode) { return std::string(SCRIPTED_LEARNER) + " " + mode; }

std::vector<DialogueSample> four_samples() {
  std::vector<DialogueSample> s(4);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].id = i;
    s[i].query = {"q" + std::to_string(i)};
    s[i].response = {"r", std::to_string(i)};
  }
  return s;
}

std::vector<const DialogueSample*> ptrs(const std::vector<DialogueSample>& s) {
  std::vector<const DialogueSample*> out;
  for (const auto& x : s) out.push_back(&x);
  return out;
}
}  // namespace

TEST(Protocol, InitThenShutdownExitsCleanly) {
  LearnerClient c(learner("echo"));
  c.init({{"vocab_size", 10}});
  EXPECT_EQ(c.shutdown(), 0);
}

TEST(Protocol, TrainBatchContract) {
  LearnerClient c(learner("echo"));
  c.init({});
  const auto s = four_samples();
  auto r = c.train_batch(ptrs(s));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_GE(r.loss, 0.0);
  EXPECT_GE(r.margin, 0.0);
  EXPECT_LE(r.margin, 1.0);
  EXPECT_DOUBLE_EQ(r.margin, 0.8);
  EXPECT_EQ(c.shutdown(), 0);
}

// Any request sequence gets in-order replies with matching sequence numbers.
TEST(Protocol, RepliesArriveInOrder) {
  LearnerClient c(learner("echo"));
  Rng rng(11);
  const auto s = four_samples();
  for (std::uint64_t i = 1; i <= 200; ++i) {
    EXPECT_EQ(c.next_seq(), i);
    switch (rng.below(3)) {
      case 0: {
        auto reply = c.roundtrip({{"kind", "init"}, {"config", nlohmann::json::object()}});
        EXPECT_EQ(reply["seq"], i);
        EXPECT_EQ(reply["kind"], "init");
        break;
      }
      case 1: c.train_batch(ptrs(s)); break;
      default: {
        std::vector<Tokens> qs{{"a", "b"}, {"c"}};
        EXPECT_EQ(c.generate(qs), qs);
      }
    }
  }
  EXPECT_EQ(c.shutdown(), 0);
}

TEST(Protocol, KilledChildReportsExitWithSeq) {
  LearnerClient c(learner("crash"));
  c.init({});
  const auto s = four_samples();
  try {
    c.train_batch(ptrs(s));
    FAIL();
  } catch (const LearnerExitedError& e) {
    EXPECT_EQ(e.seq(), 2u);
    EXPECT_EQ(e.exit_code(), 8);
    EXPECT_NE(std::string(e.what()).find("status 137"), std::string::npos);
  }
}

TEST(Protocol, MissingProgramReportsExit) {
  LearnerClient c("/nonexistent/learner");
  EXPECT_THROW(c.init({}), LearnerExitedError);
}

TEST(Protocol, Timeout) {
  LearnerClient c(learner("hang"), 200ms);
  c.init({});
  const auto s = four_samples();
  try {
    c.train_batch(ptrs(s));
    FAIL();
  } catch (const LearnerTimeoutError& e) {
    EXPECT_EQ(e.seq(), 2u);
    EXPECT_EQ(e.exit_code(), 10);
  }
}

TEST(Protocol, ReplyErrors) {
  const auto s = four_samples();
  for (const char* mode : {"garbage", "wrong_seq", "fail", "bad_loss"}) {
    LearnerClient c(learner(mode));
    c.init({});
    try {
      c.train_batch(ptrs(s));
      ADD_FAILURE() << mode;
    } catch (const LearnerReplyError& e) {
      EXPECT_EQ(e.seq(), 2u) << mode;
      EXPECT_EQ(e.exit_code(), 9);
    }
  }
  LearnerClient c(learner("fail"));
  c.init({});
  try {
    c.train_batch(ptrs(s));
  } catch (const LearnerReplyError& e) {
    EXPECT_NE(std::string(e.what()).find("out of memory"), std::string::npos);
  }
  LearnerClient g(learner("short_generate"));
  EXPECT_THROW(g.generate({{"a"}, {"b"}}), LearnerReplyError);
}

// The external learner drives the same loop as the simulated one.
TEST(Protocol, ExternalLearnerRunsTrainLoop) {
  auto setup = testing_util::sim_setup(60, 2);
  auto table = EmbeddingTable::hashed(8, 1, setup.corpus);
  ExternalLearner ext(learner("echo"), setup.corpus, setup.corpus, table, {{"seed", 1}});
  TrainConfig cfg;
  cfg.mode = parse_mode("adaptive");
  cfg.gamma = 5;
  cfg.max_steps = 20;
  cfg.batch_size = 4;
  cfg.patience = 0;
  auto r = train_loop(ext, setup.curricula, setup.corpus.size(), cfg);
  EXPECT_EQ(r.steps.size(), 20u);
  EXPECT_EQ(r.validations.size(), 5u);
  // generate echoes the queries, so BLEU of query against reference is reported
  EXPECT_GE(r.validations[0].metrics[Metric::bleu], 0.0);
  EXPECT_DOUBLE_EQ(r.steps[0].loss, 2.0);
  EXPECT_DOUBLE_EQ(r.steps[1].loss, 1.0);
  EXPECT_EQ(ext.shutdown(), 0);
}

TEST(Protocol, ExternalLearnerFailureSurfacesFromTrainLoop) {
  auto setup = testing_util::sim_setup(30, 2);
  auto table = EmbeddingTable::hashed(8, 1, setup.corpus);
  ExternalLearner ext(learner("crash"), setup.corpus, setup.corpus, table, {});
  TrainConfig cfg;
  cfg.max_steps = 5;
  try {
    train_loop(ext, setup.curricula, setup.corpus.size(), cfg);
    FAIL();
  } catch (const LearnerExitedError& e) {
    // init = 1, validation generate = 2, first train_batch = 3
    EXPECT_EQ(e.seq(), 3u);
    EXPECT_NE(std::string(e.what()).find("at training step 1"), std::string::npos);
  }
}
