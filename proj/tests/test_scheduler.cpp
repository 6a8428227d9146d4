#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "helpers.hpp"

using namespace amcl;

TEST(Featurize, FreshRun) {
  SchedulerState s;
  auto x = featurize(s, 100);
  ASSERT_EQ(x.size(), kFeatureDim);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(x[j], 0.0);
  for (std::size_t j = 4; j < 4 + kNumMetrics; ++j) EXPECT_EQ(x[j], 0.5);
  for (std::size_t j = 4 + kNumMetrics; j < kFeatureDim; ++j) EXPECT_EQ(x[j], 0.0);
}

TEST(Featurize, Endpoints) {
  SchedulerState s;
  s.batch_count = 100;
  s.rho.fill(100);
  auto x = featurize(s, 100);
  EXPECT_EQ(x[0], 1.0);
  for (std::size_t j = kFeatureDim - kNumActions; j < kFeatureDim; ++j) EXPECT_EQ(x[j], 1.0);
  s.rho.fill(500);
  s.batch_count = 10000;
  x = featurize(s, 100);
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x.back(), 1.0);
  EXPECT_THROW(featurize(s, 0), ArgumentError);
}

TEST(Featurize, AlwaysInUnitInterval) {
  Rng rng(1);
  for (int it = 0; it < 500; ++it) {
    SchedulerState s;
    s.batch_count = rng.below(5000);
    s.avg_hist_loss = 10 * rng.normal();
    s.current_loss = 10 * rng.normal();
    s.margin = 2 * rng.normal();
    for (auto& m : s.last_metrics.values) m = 2 * rng.normal();
    for (auto& r : s.rho) r = rng.below(3000);
    for (double v : featurize(s, 1 + rng.below(2000))) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Policy, ZeroParamsAreUniform) {
  PolicyParams p;
  auto probs = policy_forward(p, featurize(SchedulerState{}, 10));
  for (double v : probs) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Policy, LargeLogitGapDominates) {
  PolicyParams p;
  p.bias[3] = 50;
  auto probs = policy_forward(p, std::vector<double>(kFeatureDim, 0.3));
  EXPECT_NEAR(probs[3], 1.0, 1e-20);
  EXPECT_LT(probs[0], 1e-21);
  EXPECT_THROW(policy_forward(p, std::vector<double>(3, 0.0)), ArgumentError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(2);
  for (int it = 0; it < 100; ++it) {
    std::vector<double> z(5), zs(5);
    for (std::size_t i = 0; i < 5; ++i) {
      z[i] = 30 * rng.normal();
      zs[i] = z[i] + 123.0;
    }
    auto p = softmax(z), q = softmax(zs);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(SampleAction, Examples) {
  const std::vector<double> point{1, 0, 0, 0, 0};
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_action(point, rng), 0u);
  const std::vector<double> uniform(5, 0.2);
  std::array<std::size_t, 5> counts{};
  Rng draws(4);
  for (int i = 0; i < 100000; ++i) ++counts[sample_action(uniform, draws)];
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c) / 100000, 0.2, 0.01);
  EXPECT_EQ(sample_action(uniform, std::uint64_t{99}), sample_action(uniform, std::uint64_t{99}));
  const std::vector<double> tail{0, 0, 0, 0.5, 0.5};
  for (int i = 0; i < 1000; ++i) EXPECT_GE(sample_action(tail, rng), 3u);
}

TEST(Reward, Examples) {
  EXPECT_EQ(reward(0.3, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(reward(0.4, 0.2), 1.0);
  EXPECT_EQ(reward(0.1, 0.0), 5.0);
  EXPECT_EQ(reward(-0.1, 0.0), -5.0);
  EXPECT_DOUBLE_EQ(reward(-0.2, -0.1), 1.0);  // sign flip: improvement over a negative trend
  EXPECT_DOUBLE_EQ(reward(0.1, -0.1), -2.0);
  EXPECT_EQ(reward(100, 1), 5.0);
  EXPECT_EQ(reward(-100, 1), -5.0);
}

TEST(Reward, AlwaysWithinClip) {
  Rng rng(5);
  for (int it = 0; it < 10000; ++it) {
    const double d = rng.normal() * std::pow(10.0, rng.normal() * 3);
    const double p = rng.normal() * std::pow(10.0, rng.normal() * 3);
    const double m = reward(d, p);
    EXPECT_TRUE(std::isfinite(m));
    EXPECT_LE(std::abs(m), 5.0);
  }
}

namespace {
Trajectory random_trajectory(Rng& rng, const PolicyParams& p, std::size_t len) {
  Trajectory t;
  for (std::size_t s = 0; s < len; ++s) {
    std::vector<double> x(p.features);
    for (auto& v : x) v = rng.uniform();
    const auto probs = policy_forward(p, x);
    const auto a = sample_action(probs, rng);
    t.steps.push_back({x, a, std::log(probs[a])});
  }
  return t;
}

double objective(const PolicyParams& p, const Trajectory& t, double v) {
  double j = 0;
  for (const auto& s : t.steps) j += v * std::log(policy_forward(p, s.features)[s.action]);
  return j;
}
}  // namespace

TEST(Reinforce, ZeroRewardLeavesParams) {
  Rng rng(6);
  PolicyParams p;
  for (auto& w : p.weights) w = rng.normal();
  auto t = random_trajectory(rng, p, 7);
  t.set_reward(0.0);
  EXPECT_EQ(reinforce_update(p, t, 0.5), p);
  EXPECT_THROW(t.set_reward(1.0), ArgumentError);
  Trajectory empty;
  empty.set_reward(1.0);
  EXPECT_THROW(reinforce_update(p, empty, 0.5), ArgumentError);
  Trajectory unrewarded;
  unrewarded.steps.push_back({});
  EXPECT_THROW(reinforce_update(p, unrewarded, 0.5), ArgumentError);
}

TEST(Reinforce, HandSizedTwoFeatureStep) {
  // Two actions, two features, theta = 0: pi = (1/2, 1/2).
  PolicyParams p(2, 2);
  Trajectory t;
  t.steps.push_back({{1.0, 2.0}, 0, std::log(0.5)});
  t.set_reward(2.0);
  auto q = reinforce_update(p, t, 0.1);
  // grad log pi(0) = (1 - 1/2) x for row 0, (0 - 1/2) x for row 1.
  EXPECT_DOUBLE_EQ(q.w(0, 0), 0.1 * 2 * 0.5 * 1);
  EXPECT_DOUBLE_EQ(q.w(0, 1), 0.1 * 2 * 0.5 * 2);
  EXPECT_DOUBLE_EQ(q.w(1, 0), -0.1 * 2 * 0.5 * 1);
  EXPECT_DOUBLE_EQ(q.w(1, 1), -0.1 * 2 * 0.5 * 2);
  EXPECT_DOUBLE_EQ(q.bias[0], 0.1);
  EXPECT_DOUBLE_EQ(q.bias[1], -0.1);
}

TEST(Reinforce, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int it = 0; it < 20; ++it) {
    PolicyParams p;
    for (auto& w : p.weights) w = 0.5 * rng.normal();
    for (auto& b : p.bias) b = 0.5 * rng.normal();
    const auto t = random_trajectory(rng, p, 1 + rng.below(10));
    const double v = rng.normal();
    const auto g = log_likelihood_gradient(p, t, v);
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.weights.size(); i += 3) {
      auto hi = p, lo = p;
      hi.weights[i] += h;
      lo.weights[i] -= h;
      const double fd = (objective(hi, t, v) - objective(lo, t, v)) / (2 * h);
      EXPECT_NEAR(g.weights[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (std::size_t a = 0; a < p.actions; ++a) {
      auto hi = p, lo = p;
      hi.bias[a] += h;
      lo.bias[a] -= h;
      const double fd = (objective(hi, t, v) - objective(lo, t, v)) / (2 * h);
      EXPECT_NEAR(g.bias[a], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Reinforce, OppositeRewardsGiveOppositeDeltas) {
  Rng rng(8);
  PolicyParams p;
  for (auto& w : p.weights) w = rng.normal();
  auto t1 = random_trajectory(rng, p, 5);
  auto t2 = t1;
  t1.set_reward(1.5);
  t2.set_reward(-1.5);
  auto a = reinforce_update(p, t1, 0.2), b = reinforce_update(p, t2, 0.2);
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    EXPECT_NEAR(a.weights[i] - p.weights[i], -(b.weights[i] - p.weights[i]), 1e-12);
  // Baseline equal to the reward cancels the update.
  EXPECT_EQ(reinforce_update(p, t1, 0.2, 1.5), p);
}

TEST(Modes, ParseAndName) {
  for (const char* m : {"adaptive", "random_policy", "anti", "none", "single:continuity"})
    EXPECT_EQ(mode_name(parse_mode(m)), m);
  EXPECT_EQ(parse_mode("random").mode, ScheduleMode::random_policy);
  EXPECT_EQ(parse_mode("single:query_relatedness").single, Attribute::query_relatedness);
  EXPECT_THROW(parse_mode("greedy"), ArgumentError);
  EXPECT_THROW(parse_mode("single:length"), ArgumentError);
}

namespace {
const testing_util::SimSetup& setup() {
  static const auto s = testing_util::sim_setup(300, 21);
  return s;
}

TrainConfig small_config(const char* mode, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.mode = parse_mode(mode);
  cfg.gamma = 10;
  cfg.progress = {0.01, 200};
  cfg.batch_size = 16;
  cfg.max_steps = 300;
  cfg.seed = seed;
  cfg.patience = 0;
  return cfg;
}

RunReport run(const TrainConfig& cfg, std::uint64_t noise_seed = 1) {
  SimulatedLearnerConfig lc;
  lc.noise_seed = noise_seed;
  SimulatedLearner learner(lc, setup().easiness);
  return train_loop(learner, setup().curricula, setup().corpus.size(), cfg);
}

std::string serialize(const RunReport& r) {
  std::ostringstream out;
  write_steps_jsonl(out, r);
  write_validations_jsonl(out, r);
  out << summary_json(r).dump();
  return out.str();
}
}  // namespace

TEST(TrainLoop, RhoCountsBatches) {
  for (const char* mode : {"adaptive", "random_policy", "anti", "single:specificity"}) {
    auto r = run(small_config(mode));
    EXPECT_EQ(r.steps.size(), 300u);
    EXPECT_EQ(std::accumulate(r.rho.begin(), r.rho.end(), std::uint64_t{0}), 300u) << mode;
    std::array<std::uint64_t, kNumActions> counted{};
    for (const auto& s : r.steps) ++counted[static_cast<std::size_t>(s.action)];
    EXPECT_EQ(counted, r.rho);
  }
}

TEST(TrainLoop, ValidatesEveryGamma) {
  auto r = run(small_config("adaptive"));
  ASSERT_EQ(r.validations.size(), 31u);
  for (std::size_t k = 0; k < r.validations.size(); ++k) EXPECT_EQ(r.validations[k].step, 10 * k);
  EXPECT_FALSE(r.validations[0].delta);
  EXPECT_TRUE(r.validations[1].delta);
  EXPECT_FALSE(r.validations[0].policy_updated);
}

TEST(TrainLoop, PrefixFollowsProgress) {
  auto r = run(small_config("adaptive"));
  const auto n = setup().corpus.size();
  for (const auto& s : r.steps) {
    const auto& c = setup().curricula[static_cast<std::size_t>(s.action)];
    EXPECT_EQ(s.prefix, std::clamp<std::size_t>(
                            static_cast<std::size_t>(std::ceil(s.progress * static_cast<double>(c.size()))), 1, c.size()));
    EXPECT_LE(s.prefix, n);
  }
}

TEST(TrainLoop, Deterministic) {
  EXPECT_EQ(serialize(run(small_config("adaptive", 3), 4)), serialize(run(small_config("adaptive", 3), 4)));
  EXPECT_NE(serialize(run(small_config("adaptive", 3), 4)), serialize(run(small_config("adaptive", 5), 4)));
}

TEST(TrainLoop, RandomModeNeverUpdates) {
  auto r = run(small_config("random_policy"));
  EXPECT_EQ(r.policy, PolicyParams{});
  for (const auto& v : r.validations) {
    EXPECT_FALSE(v.policy_updated);
    for (double p : v.action_distribution) EXPECT_EQ(p, 0.2);
  }
}

TEST(TrainLoop, AdaptiveUpdatesPolicy) {
  auto r = run(small_config("adaptive"));
  EXPECT_NE(r.policy, PolicyParams{});
  std::size_t updates = 0;
  for (const auto& v : r.validations) updates += v.policy_updated;
  EXPECT_GT(updates, 20u);
}

TEST(TrainLoop, SingleModeUsesOneCurriculum) {
  auto r = run(small_config("single:repetitiveness"));
  for (const auto& s : r.steps) EXPECT_EQ(s.action, static_cast<int>(Attribute::repetitiveness));
  EXPECT_EQ(r.rho[static_cast<std::size_t>(Attribute::repetitiveness)], 300u);
}

TEST(TrainLoop, NoneModeSamplesWholeCorpus) {
  auto r = run(small_config("none"));
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.action, -1);
    EXPECT_EQ(s.prefix, setup().corpus.size());
  }
  for (auto x : r.rho) EXPECT_EQ(x, 0u);
}

// Anti mode draws the first batch from the hard end of the easy-first order.
TEST(TrainLoop, AntiReversesCurricula) {
  struct Recorder final : Learner {
    std::vector<std::vector<std::size_t>> batches;
    TrainResult train_batch(std::span<const std::size_t> ids) override {
      batches.emplace_back(ids.begin(), ids.end());
      return {1.0, 0.0};
    }
    MetricVector validate() override { return {}; }
  };
  auto cfg = small_config("anti");
  cfg.max_steps = 1;
  Recorder rec;
  auto r = train_loop(rec, setup().curricula, setup().corpus.size(), cfg);
  const auto& c = setup().curricula[static_cast<std::size_t>(r.steps[0].action)];
  ASSERT_EQ(r.steps[0].prefix, 3u);  // ceil(0.01 * 300)
  for (auto id : rec.batches[0]) {
    const auto pos = std::find(c.order.begin(), c.order.end(), id) - c.order.begin();
    EXPECT_GE(pos, static_cast<long>(c.size()) - 3);
  }
}

TEST(TrainLoop, PatienceStopsEarly) {
  struct Declining final : Learner {
    double level = 1.0;
    TrainResult train_batch(std::span<const std::size_t>) override { return {1.0, 0.0}; }
    MetricVector validate() override {
      MetricVector m;
      m.values.fill(level);
      level -= 0.1;
      return m;
    }
  };
  auto cfg = small_config("adaptive");
  cfg.patience = 3;
  Declining d;
  auto r = train_loop(d, setup().curricula, setup().corpus.size(), cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.steps.size(), 30u);
}

TEST(TrainLoop, LearnerErrorsKeepTheirKind) {
  struct Dying final : Learner {
    int calls = 0;
    TrainResult train_batch(std::span<const std::size_t>) override {
      if (++calls == 4) throw LearnerExitedError("learner process exited with status 137", 9);
      return {1.0, 0.5};
    }
    MetricVector validate() override { return {}; }
  };
  Dying d;
  try {
    train_loop(d, setup().curricula, setup().corpus.size(), small_config("adaptive"));
    FAIL();
  } catch (const LearnerExitedError& e) {
    EXPECT_EQ(e.seq(), 9u);
    EXPECT_EQ(e.exit_code(), 8);
    EXPECT_EQ(std::string(e.what()), "learner process exited with status 137 at training step 4 (seq 9)");
  }
}

TEST(TrainLoop, ConfigErrors) {
  SimulatedLearner l({}, setup().easiness);
  auto cfg = small_config("adaptive");
  cfg.gamma = 0;
  EXPECT_THROW(train_loop(l, setup().curricula, 300, cfg), ArgumentError);
  cfg = small_config("adaptive");
  cfg.progress.c0 = 0;
  EXPECT_THROW(train_loop(l, setup().curricula, 300, cfg), ArgumentError);
  EXPECT_THROW(train_loop(l, {}, 300, small_config("adaptive")), ArgumentError);
}

TEST(Reports, CsvShapes) {
  auto r = run(small_config("adaptive"));
  std::ostringstream steps, vals;
  write_steps_csv(steps, r);
  write_validations_csv(vals, r);
  const auto steps_text = steps.str(), vals_text = vals.str();
  EXPECT_EQ(std::count(steps_text.begin(), steps_text.end(), '\n'), 301);
  EXPECT_EQ(std::count(vals_text.begin(), vals_text.end(), '\n'), 32);
  auto j = summary_json(r);
  EXPECT_EQ(j["steps_run"], 300);
  EXPECT_EQ(j["config"]["gamma"], 10);
}
