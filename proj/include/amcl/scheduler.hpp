#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amcl/attributes.hpp"
#include "amcl/curriculum.hpp"
#include "amcl/error.hpp"
#include "amcl/learner.hpp"
#include "amcl/metrics.hpp"
#include "amcl/rng.hpp"
#include "amcl/textio.hpp"

namespace amcl {

inline constexpr std::size_t kNumActions = kNumAttributes;
// batch count, mean loss, current loss, margin, 13 metrics, 5 progress counters
inline constexpr std::size_t kFeatureDim = 4 + kNumMetrics + kNumActions;

// Learning status observed by the policy.
struct SchedulerState {
  std::uint64_t batch_count = 0;
  double avg_hist_loss = 0.0;
  double current_loss = 0.0;
  double margin = 0.0;
  MetricVector last_metrics = [] {
    MetricVector m;
    m.values.fill(0.5);
    return m;
  }();  // normalized to [0, 1]
  std::array<std::uint64_t, kNumActions> rho{};
};

// Every component lands in [0, 1].
inline std::vector<double> featurize(const SchedulerState& s, std::uint64_t T) {
  if (T < 1) throw ArgumentError("featurize: T must be at least 1");
  std::vector<double> x;
  x.reserve(kFeatureDim);
  const double t = static_cast<double>(T);
  x.push_back(std::min(1.0, std::log1p(static_cast<double>(s.batch_count)) / std::log1p(t)));
  const double avg = std::max(0.0, s.avg_hist_loss), cur = std::max(0.0, s.current_loss);
  x.push_back(avg / (1.0 + avg));
  x.push_back(cur / (1.0 + cur));
  x.push_back(std::clamp(s.margin, 0.0, 1.0));
  for (double m : s.last_metrics.values) x.push_back(std::clamp(m, 0.0, 1.0));
  for (auto r : s.rho) x.push_back(std::min(1.0, static_cast<double>(r) / t));
  return x;
}

// Linear-softmax policy: pi(a | x) = softmax(W x + b).
struct PolicyParams {
  std::size_t actions = kNumActions;
  std::size_t features = kFeatureDim;
  std::vector<double> weights;  // actions x features, row-major
  std::vector<double> bias;

  PolicyParams() : PolicyParams(kNumActions, kFeatureDim) {}
  PolicyParams(std::size_t k, std::size_t d) : actions(k), features(d), weights(k * d, 0.0), bias(k, 0.0) {}

  double& w(std::size_t a, std::size_t j) { return weights[a * features + j]; }
  double w(std::size_t a, std::size_t j) const { return weights[a * features + j]; }

  bool operator==(const PolicyParams&) const = default;
};

inline std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - top));
  for (double& v : p) v /= z;
  return p;
}

inline std::vector<double> policy_logits(const PolicyParams& params, std::span<const double> x) {
  if (x.size() != params.features)
    throw ArgumentError("policy expects " + std::to_string(params.features) + " features, got " +
                        std::to_string(x.size()));
  std::vector<double> logits(params.bias);
  for (std::size_t a = 0; a < params.actions; ++a)
    for (std::size_t j = 0; j < params.features; ++j) logits[a] += params.w(a, j) * x[j];
  return logits;
}

inline std::vector<double> policy_forward(const PolicyParams& params, std::span<const double> x) {
  return softmax(policy_logits(params, x));
}

// Inverse-CDF categorical draw; never returns a zero-probability action.
inline std::size_t sample_action(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] <= 0.0) continue;
    cum += probs[a];
    last = a;
    if (u < cum) return a;
  }
  return last;
}

inline std::size_t sample_action(std::span<const double> probs, std::uint64_t seed) {
  Rng rng(seed);
  return sample_action(probs, rng);
}

struct RewardConfig {
  double epsilon = 1e-6;
  double clip = 5.0;
};

// m = delta / max(|delta_prev|, eps) * sign(delta_prev) - 1, clipped; sign(0) = +1.
inline double reward(double delta, double delta_prev, const RewardConfig& cfg = {}) {
  const double sign = delta_prev < 0.0 ? -1.0 : 1.0;
  const double m = delta / std::max(std::abs(delta_prev), cfg.epsilon) * sign - 1.0;
  return std::clamp(m, -cfg.clip, cfg.clip);
}

struct TrajectoryStep {
  std::vector<double> features;
  std::size_t action = 0;
  double log_prob = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::optional<double> terminal_reward;

  void set_reward(double m) {
    if (terminal_reward) throw ArgumentError("trajectory reward already set");
    terminal_reward = m;
  }
};

// Gradient of sum_t v * log pi(a_t | s_t); same layout as the parameters.
inline PolicyParams log_likelihood_gradient(const PolicyParams& params, const Trajectory& traj,
                                            double v) {
  PolicyParams g(params.actions, params.features);
  for (const auto& step : traj.steps) {
    const auto p = policy_forward(params, step.features);
    for (std::size_t a = 0; a < params.actions; ++a) {
      const double coeff = v * ((a == step.action ? 1.0 : 0.0) - p[a]);
      g.bias[a] += coeff;
      for (std::size_t j = 0; j < params.features; ++j) g.w(a, j) += coeff * step.features[j];
    }
  }
  return g;
}

// theta += lr * sum_t grad log pi(a_t | s_t) * v_t, with v_t = terminal reward - baseline.
inline PolicyParams reinforce_update(const PolicyParams& params, const Trajectory& traj,
                                     double learning_rate, double baseline = 0.0) {
  if (traj.steps.empty()) throw ArgumentError("reinforce_update: empty trajectory");
  if (!traj.terminal_reward) throw ArgumentError("reinforce_update: trajectory has no reward");
  const auto g = log_likelihood_gradient(params, traj, *traj.terminal_reward - baseline);
  PolicyParams out = params;
  for (std::size_t i = 0; i < out.weights.size(); ++i) out.weights[i] += learning_rate * g.weights[i];
  for (std::size_t a = 0; a < out.actions; ++a) out.bias[a] += learning_rate * g.bias[a];
  return out;
}

enum class ScheduleMode { adaptive, random_policy, anti, single, none };

struct ModeSpec {
  ScheduleMode mode = ScheduleMode::adaptive;
  Attribute single = Attribute::specificity;
};

inline ModeSpec parse_mode(std::string_view s) {
  if (s == "adaptive") return {ScheduleMode::adaptive};
  if (s == "random_policy" || s == "random") return {ScheduleMode::random_policy};
  if (s == "anti") return {ScheduleMode::anti};
  if (s == "none" || s == "vanilla") return {ScheduleMode::none};
  if (s.starts_with("single:")) return {ScheduleMode::single, parse_attribute(s.substr(7))};
  throw ArgumentError("unknown mode '" + std::string(s) + "'");
}

inline std::string mode_name(const ModeSpec& m) {
  switch (m.mode) {
    case ScheduleMode::adaptive: return "adaptive";
    case ScheduleMode::random_policy: return "random_policy";
    case ScheduleMode::anti: return "anti";
    case ScheduleMode::none: return "none";
    case ScheduleMode::single: return "single:" + std::string(attribute_name(m.single));
  }
  return "?";
}

struct TrainConfig {
  ModeSpec mode;
  std::uint64_t gamma = 50;         // validation / policy-update interval
  ProgressConfig progress{0.01, 1000};
  std::size_t batch_size = 32;
  std::uint64_t max_steps = 2000;
  std::uint64_t seed = 1;
  double policy_learning_rate = 0.03;
  std::size_t patience = 5;         // stop after this many consecutive negative deviations; 0 = never
  bool moving_average_baseline = false;
  double baseline_decay = 0.9;
  RewardConfig reward;
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(c.mode);
  j["gamma"] = c.gamma;
  j["c0"] = c.progress.c0;
  j["T"] = c.progress.T;
  j["batch_size"] = c.batch_size;
  j["max_steps"] = c.max_steps;
  j["seed"] = c.seed;
  j["policy_learning_rate"] = c.policy_learning_rate;
  j["patience"] = c.patience;
  j["moving_average_baseline"] = c.moving_average_baseline;
  j["baseline_decay"] = c.baseline_decay;
  j["reward_epsilon"] = c.reward.epsilon;
  j["reward_clip"] = c.reward.clip;
  return j;
}

struct StepRecord {
  std::uint64_t step = 0;
  int action = -1;            // -1 when no curriculum is used
  double progress = 1.0;      // f(rho) of the chosen curriculum before drawing
  std::size_t prefix = 0;     // ids eligible for this batch
  double loss = 0.0;
  double margin = 0.0;
};

struct ValidationRecord {
  std::uint64_t step = 0;
  MetricVector metrics;
  MetricVector normalized;
  std::optional<double> delta;
  double reward = 0.0;
  bool policy_updated = false;
  std::vector<double> action_distribution;
  std::optional<double> score;
};

struct RunReport {
  TrainConfig config;
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validations;
  std::array<std::uint64_t, kNumActions> rho{};
  PolicyParams policy;
  bool converged = false;

  std::optional<double> final_score() const {
    return validations.empty() ? std::nullopt : validations.back().score;
  }
};

namespace detail {
inline std::string at_step(const LearnerError& e, std::uint64_t step) {
  return e.message() + " at training step " + std::to_string(step);
}
}  // namespace detail

// Runs the scheduling loop: featurize, choose a curriculum, draw a batch from
// its f(rho) prefix, train, and every gamma steps validate, compute the
// deviation and reward, and apply a REINFORCE update. curricula must hold the
// five easy-first curricula in attribute order; anti mode reverses them.
inline RunReport train_loop(Learner& learner, std::vector<Curriculum> curricula,
                            std::size_t n_samples, const TrainConfig& cfg) {
  cfg.progress.validate();
  if (cfg.gamma < 1) throw ArgumentError("gamma must be at least 1");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be at least 1");
  const auto mode = cfg.mode.mode;
  if (mode != ScheduleMode::none && curricula.size() != kNumActions)
    throw ArgumentError("train_loop needs one curriculum per attribute");
  if (n_samples == 0) throw DataError("train_loop: empty training set");
  for (auto& c : curricula) {
    c.rho = 0;
    if (mode == ScheduleMode::anti && c.direction == Direction::easy_first) {
      std::reverse(c.order.begin(), c.order.end());
      c.direction = Direction::anti;
    }
  }
  const bool learns = mode == ScheduleMode::adaptive || mode == ScheduleMode::anti;

  Rng action_rng(derive_seed(cfg.seed, 1));
  Rng batch_rng(derive_seed(cfg.seed, 2));

  RunReport report;
  report.config = cfg;
  PolicyParams params;
  SchedulerState state;
  NormalizationState norm;
  Trajectory traj;
  double loss_sum = 0.0;
  double baseline = 0.0;
  bool have_baseline = false;
  std::optional<double> prev_delta;
  std::size_t negative_streak = 0;

  auto distribution = [&](const std::vector<double>& x) -> std::vector<double> {
    switch (mode) {
      case ScheduleMode::adaptive:
      case ScheduleMode::anti: return policy_forward(params, x);
      case ScheduleMode::random_policy: return std::vector<double>(kNumActions, 1.0 / kNumActions);
      case ScheduleMode::single: {
        std::vector<double> p(kNumActions, 0.0);
        p[static_cast<std::size_t>(cfg.mode.single)] = 1.0;
        return p;
      }
      case ScheduleMode::none: return {};
    }
    return {};
  };

  auto run_validation = [&](std::uint64_t step, bool allow_update) {
    ValidationRecord rec;
    rec.step = step;
    rec.metrics = learner.validate();
    norm.observe(rec.metrics);
    bool has_reward = false;
    if (!report.validations.empty()) {
      const double delta = deviation(rec.metrics, report.validations.back().metrics, norm);
      rec.delta = delta;
      if (prev_delta) {
        rec.reward = reward(delta, *prev_delta, cfg.reward);
        has_reward = true;
      }
      prev_delta = delta;
      negative_streak = delta < 0.0 ? negative_streak + 1 : 0;
    }
    if (learns && allow_update && !traj.steps.empty()) {
      traj.set_reward(rec.reward);
      const double b = cfg.moving_average_baseline && have_baseline ? baseline : 0.0;
      params = reinforce_update(params, traj, cfg.policy_learning_rate, b);
      rec.policy_updated = rec.reward != b;
      // the first scored round has no reward yet; keep it out of the baseline
      if (cfg.moving_average_baseline && has_reward) {
        baseline = have_baseline ? cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * rec.reward
                                 : rec.reward;
        have_baseline = true;
      }
    }
    traj = Trajectory{};
    rec.normalized = norm.normalize(rec.metrics);
    state.last_metrics = rec.normalized;
    rec.action_distribution = distribution(featurize(state, cfg.progress.T));
    rec.score = learner.score(rec.metrics);
    report.validations.push_back(std::move(rec));
  };

  run_validation(0, false);

  std::uint64_t step = 0;
  while (step < cfg.max_steps) {
    ++step;
    StepRecord rec;
    rec.step = step;
    std::vector<std::size_t> batch;
    if (mode == ScheduleMode::none) {
      batch.resize(cfg.batch_size);
      for (auto& id : batch) id = static_cast<std::size_t>(batch_rng.below(n_samples));
      rec.prefix = n_samples;
    } else {
      auto x = featurize(state, cfg.progress.T);
      const auto probs = distribution(x);
      const std::size_t a = sample_action(probs, action_rng);
      traj.steps.push_back({std::move(x), a, std::log(probs[a])});
      auto& cur = curricula[a];
      rec.action = static_cast<int>(a);
      rec.progress = progressing_function(cfg.progress, cur.rho);
      rec.prefix = prefix_size(cur, cfg.progress);
      batch = sample_batch(cur, cfg.progress, cfg.batch_size, batch_rng);
      state.rho[a] = cur.rho;
    }
    TrainResult res;
    try {
      res = learner.train_batch(batch);
    } catch (const LearnerTimeoutError& e) {
      throw LearnerTimeoutError(detail::at_step(e, step), e.seq());
    } catch (const LearnerExitedError& e) {
      throw LearnerExitedError(detail::at_step(e, step), e.seq());
    } catch (const LearnerReplyError& e) {
      throw LearnerReplyError(detail::at_step(e, step), e.seq());
    }
    rec.loss = res.loss;
    rec.margin = res.margin;
    loss_sum += res.loss;
    state.batch_count = step;
    state.current_loss = res.loss;
    state.avg_hist_loss = loss_sum / static_cast<double>(step);
    state.margin = res.margin;
    report.steps.push_back(rec);

    if (step % cfg.gamma == 0) {
      run_validation(step, true);
      if (cfg.patience > 0 && negative_streak >= cfg.patience) {
        report.converged = true;
        break;
      }
    }
  }
  if (report.validations.back().step != step) run_validation(step, false);

  for (std::size_t a = 0; a < curricula.size() && a < kNumActions; ++a) report.rho[a] = curricula[a].rho;
  report.policy = params;
  return report;
}

inline void write_steps_jsonl(std::ostream& out, const RunReport& r) {
  for (const auto& s : r.steps) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["action"] = s.action < 0 ? nlohmann::ordered_json(nullptr)
                               : nlohmann::ordered_json(attribute_name(kAllAttributes[static_cast<std::size_t>(s.action)]));
    j["f_rho"] = s.progress;
    j["prefix"] = s.prefix;
    j["loss"] = s.loss;
    j["margin"] = s.margin;
    out << j.dump() << '\n';
  }
}

inline void write_steps_csv(std::ostream& out, const RunReport& r) {
  out << "step,action,f_rho,prefix,loss,margin\n";
  for (const auto& s : r.steps)
    out << s.step << ','
        << (s.action < 0 ? std::string("none") : std::string(attribute_name(kAllAttributes[static_cast<std::size_t>(s.action)])))
        << ',' << format_double(s.progress) << ',' << s.prefix << ',' << format_double(s.loss) << ','
        << format_double(s.margin) << '\n';
}

inline void write_validations_jsonl(std::ostream& out, const RunReport& r) {
  for (const auto& v : r.validations) {
    nlohmann::ordered_json j;
    j["step"] = v.step;
    j["metrics"] = to_json(v.metrics);
    j["normalized"] = to_json(v.normalized);
    j["delta"] = v.delta ? nlohmann::ordered_json(*v.delta) : nlohmann::ordered_json(nullptr);
    j["reward"] = v.reward;
    j["policy_updated"] = v.policy_updated;
    j["action_distribution"] = v.action_distribution;
    j["score"] = v.score ? nlohmann::ordered_json(*v.score) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

inline void write_validations_csv(std::ostream& out, const RunReport& r) {
  out << "step";
  for (auto n : kMetricNames) out << ',' << n;
  out << ",delta,reward";
  for (auto n : kAttributeNames) out << ",pi_" << n;
  out << ",score\n";
  for (const auto& v : r.validations) {
    out << v.step;
    for (double m : v.metrics.values) out << ',' << format_double(m);
    out << ',' << (v.delta ? format_double(*v.delta) : "") << ',' << format_double(v.reward);
    for (std::size_t a = 0; a < kNumActions; ++a)
      out << ',' << (a < v.action_distribution.size() ? format_double(v.action_distribution[a]) : "");
    out << ',' << (v.score ? format_double(*v.score) : "") << '\n';
  }
}

inline nlohmann::ordered_json summary_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["config"] = to_json(r.config);
  j["steps_run"] = r.steps.size();
  j["converged"] = r.converged;
  j["rho"] = r.rho;
  j["final_metrics"] = to_json(r.validations.back().metrics);
  j["final_score"] = r.final_score() ? nlohmann::ordered_json(*r.final_score()) : nlohmann::ordered_json(nullptr);
  j["policy_weights"] = r.policy.weights;
  j["policy_bias"] = r.policy.bias;
  return j;
}

}  // namespace amcl
