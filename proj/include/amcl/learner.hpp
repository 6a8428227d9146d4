#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "amcl/attributes.hpp"
#include "amcl/corpus.hpp"
#include "amcl/embeddings.hpp"
#include "amcl/error.hpp"
#include "amcl/metrics.hpp"
#include "amcl/rng.hpp"

namespace amcl {

struct TrainResult {
  double loss = 0.0;
  double margin = 0.0;  // mean top-1 minus top-2 predicted probability, 0 if unknown
};

// What the scheduler drives. Sample ids index the training corpus.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual TrainResult train_batch(std::span<const std::size_t> ids) = 0;
  virtual MetricVector validate() = 0;
  // Scalar summary of a validation result in [0, 1], when the learner has one.
  virtual std::optional<double> score(const MetricVector&) const { return std::nullopt; }
};

struct SimulatedLearnerConfig {
  // Skill gain per unit batch easiness, per attribute.
  std::array<double, kNumAttributes> learning_rates{0.0015, 0.0015, 0.0001, 0.0001, 0.0001};
  std::array<double, kNumAttributes> initial_skill{0.0, 0.0, 0.0, 0.0, 0.0};
  double loss_noise = 0.01;
  double metric_noise = 0.0002;
  std::uint64_t noise_seed = 0;
  // Metric value at skill 0 and at skill 1.
  std::array<double, kNumMetrics> floors{0.001, 0.005, 0.03, 0.08, 0.80, 0.90, 0.93,
                                         0.55,  0.42,  0.62, 0.55, 6.0,  9.5};
  std::array<double, kNumMetrics> ceilings{0.009, 0.025, 0.16, 0.36, 0.97, 0.995, 0.998,
                                           0.70,  0.50,  0.72, 0.72, 7.6,  12.2};
};

// Deterministic stand-in for a dialogue model. Each attribute has a skill in
// [0, 1]; a batch raises skill i by lr_i * (mean batch easiness on i) * (1 - skill_i).
// Validation metrics are affine in the skills plus seeded noise.
class SimulatedLearner final : public Learner {
 public:
  using Easiness = std::array<double, kNumAttributes>;

  SimulatedLearner(SimulatedLearnerConfig cfg, std::vector<Easiness> easiness)
      : cfg_(cfg), easiness_(std::move(easiness)), skill_(cfg.initial_skill), rng_(cfg.noise_seed) {
    for (double& s : skill_) s = std::clamp(s, 0.0, 1.0);
  }

  TrainResult train_batch(std::span<const std::size_t> ids) override {
    std::vector<Easiness> rows;
    rows.reserve(ids.size());
    for (auto id : ids) rows.push_back(easiness_.at(id));
    return train_on(rows);
  }

  // One step on a batch described directly by per-sample easiness.
  TrainResult train_on(std::span<const Easiness> batch) {
    if (!batch.empty()) {
      for (std::size_t a = 0; a < kNumAttributes; ++a) {
        double mean = 0.0;
        for (const auto& row : batch) mean += row[a];
        mean /= static_cast<double>(batch.size());
        skill_[a] = std::clamp(skill_[a] + cfg_.learning_rates[a] * mean * (1.0 - skill_[a]), 0.0, 1.0);
      }
    }
    const double mean_skill = mean_of(skill_);
    TrainResult r;
    r.loss = std::max(0.0, 1.0 - mean_skill + cfg_.loss_noise * rng_.normal());
    r.margin = mean_skill;
    return r;
  }

  MetricVector validate() override {
    MetricVector m;
    for (std::size_t j = 0; j < kNumMetrics; ++j) {
      const double level = std::clamp(metric_level(j) + cfg_.metric_noise * rng_.normal(), 0.0, 1.0);
      m[j] = cfg_.floors[j] + (cfg_.ceilings[j] - cfg_.floors[j]) * level;
    }
    return m;
  }

  // Noise-free metrics for the current skills.
  MetricVector expected_metrics() const {
    MetricVector m;
    for (std::size_t j = 0; j < kNumMetrics; ++j)
      m[j] = cfg_.floors[j] + (cfg_.ceilings[j] - cfg_.floors[j]) * metric_level(j);
    return m;
  }

  // Mean of the metrics rescaled by their floors and ceilings.
  std::optional<double> score(const MetricVector& m) const override {
    double s = 0.0;
    for (std::size_t j = 0; j < kNumMetrics; ++j)
      s += (m[j] - cfg_.floors[j]) / (cfg_.ceilings[j] - cfg_.floors[j]);
    return s / static_cast<double>(kNumMetrics);
  }

  const std::array<double, kNumAttributes>& skill() const noexcept { return skill_; }
  const SimulatedLearnerConfig& config() const noexcept { return cfg_; }

  // Weight of attribute a in metric j: 0.4 on attribute j mod 5, 0.15 on each other.
  static double metric_weight(std::size_t j, std::size_t a) {
    return a == j % kNumAttributes ? 0.4 : 0.15;
  }

 private:
  double metric_level(std::size_t j) const {
    double level = 0.0;
    for (std::size_t a = 0; a < kNumAttributes; ++a) level += metric_weight(j, a) * skill_[a];
    return level;
  }

  static double mean_of(const std::array<double, kNumAttributes>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }

  SimulatedLearnerConfig cfg_;
  std::vector<Easiness> easiness_;
  std::array<double, kNumAttributes> skill_;
  Rng rng_;
};

// Child process whose stdin and stdout are both one end of a socket pair.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
      throw IoError(std::string("socketpair: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw IoError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::setpgid(0, 0);  // so a kill also reaches whatever sh spawns
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (fd_ >= 0) ::close(fd_);
    if (pid_ > 0 && !exit_status_) {
      // Give the child a moment to exit on EOF before killing it.
      for (int i = 0; i < 50 && !try_reap(); ++i) ::usleep(10000);
      if (!exit_status_) {
        ::kill(-pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
      }
    }
  }

  pid_t pid() const noexcept { return pid_; }

  // false if the peer is gone.
  bool write_all(std::string_view data) {
    while (!data.empty()) {
      const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  enum class ReadStatus { line, eof, timeout };

  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return ReadStatus::line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return ReadStatus::timeout;
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r == 0) return ReadStatus::timeout;
      char buf[4096];
      const auto n = ::recv(fd_, buf, sizeof buf, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return ReadStatus::eof;
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  void close_input() { ::shutdown(fd_, SHUT_WR); }

  // Blocks until the child exits; returns its exit code (128 + signal if killed).
  int wait() {
    if (exit_status_) return *exit_status_;
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    exit_status_ = decode(status);
    return *exit_status_;
  }

 private:
  bool try_reap() {
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == pid_) {
      exit_status_ = decode(status);
      return true;
    }
    return false;
  }

  static int decode(int status) {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return -1;
  }

  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  std::optional<int> exit_status_;
};

inline nlohmann::json tokens_json(const Tokens& t) { return nlohmann::json(t); }

// Synchronous line-delimited JSON client: one request in flight, every reply
// must echo the request's sequence number.
class LearnerClient {
 public:
  explicit LearnerClient(const std::string& command,
                         std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : process_(command), timeout_(timeout) {}

  nlohmann::json roundtrip(nlohmann::json request) {
    const std::uint64_t seq = next_seq_++;
    request["seq"] = seq;
    if (!process_.write_all(request.dump() + "\n"))
      throw LearnerExitedError("learner process is not accepting input", seq);
    std::string line;
    switch (process_.read_line(line, timeout_)) {
      case ChildProcess::ReadStatus::eof:
        throw LearnerExitedError("learner process exited with status " +
                                     std::to_string(process_.wait()),
                                 seq);
      case ChildProcess::ReadStatus::timeout:
        throw LearnerTimeoutError("no reply within " + std::to_string(timeout_.count()) + " ms", seq);
      case ChildProcess::ReadStatus::line:
        break;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw LearnerReplyError("malformed reply '" + line.substr(0, 200) + "'", seq);
    }
    if (!reply.is_object() || !reply.contains("seq") || !reply["seq"].is_number_unsigned())
      throw LearnerReplyError("reply lacks a sequence number", seq);
    if (reply["seq"].get<std::uint64_t>() != seq)
      throw LearnerReplyError("reply sequence " + reply["seq"].dump() + " does not match", seq);
    if (!reply.value("ok", false))
      throw LearnerReplyError("learner reported error: " + reply.value("error", std::string("?")), seq);
    return reply;
  }

  void init(const nlohmann::json& config) {
    roundtrip({{"kind", "init"}, {"config", config}});
  }

  TrainResult train_batch(const std::vector<const DialogueSample*>& samples) {
    nlohmann::json batch = nlohmann::json::array();
    for (const auto* s : samples)
      batch.push_back({{"id", s->id}, {"query", tokens_json(s->query)}, {"response", tokens_json(s->response)}});
    const std::uint64_t seq = next_seq_;
    auto reply = roundtrip({{"kind", "train_batch"}, {"samples", std::move(batch)}});
    TrainResult r;
    try {
      r.loss = reply.at("loss").get<double>();
      r.margin = reply.value("margin", 0.0);
    } catch (const nlohmann::json::exception&) {
      throw LearnerReplyError("train_batch reply lacks a numeric loss", seq);
    }
    if (!std::isfinite(r.loss) || r.loss < 0 || !(r.margin >= 0 && r.margin <= 1))
      throw LearnerReplyError("train_batch reply outside contract (loss >= 0, margin in [0,1])", seq);
    return r;
  }

  std::vector<Tokens> generate(const std::vector<Tokens>& queries) {
    nlohmann::json qs = nlohmann::json::array();
    for (const auto& q : queries) qs.push_back(tokens_json(q));
    const std::uint64_t seq = next_seq_;
    auto reply = roundtrip({{"kind", "generate"}, {"queries", std::move(qs)}});
    std::vector<Tokens> out;
    try {
      out = reply.at("responses").get<std::vector<Tokens>>();
    } catch (const nlohmann::json::exception&) {
      throw LearnerReplyError("generate reply lacks a responses list", seq);
    }
    if (out.size() != queries.size())
      throw LearnerReplyError("generate returned " + std::to_string(out.size()) + " responses for " +
                                  std::to_string(queries.size()) + " queries",
                              seq);
    return out;
  }

  // Sends shutdown and waits for the process; returns its exit code.
  int shutdown() {
    roundtrip({{"kind", "shutdown"}});
    process_.close_input();
    return process_.wait();
  }

  std::uint64_t next_seq() const noexcept { return next_seq_; }
  ChildProcess& process() noexcept { return process_; }

 private:
  ChildProcess process_;
  std::chrono::milliseconds timeout_;
  std::uint64_t next_seq_ = 1;
};

// Learner backed by an external process. Validation asks the process to
// generate responses for held-out queries and scores them here.
class ExternalLearner final : public Learner {
 public:
  ExternalLearner(const std::string& command, const Corpus& train, const Corpus& validation,
                  const EmbeddingTable& table, const nlohmann::json& init_config,
                  std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : client_(command, timeout), train_(train), validation_(validation), table_(table) {
    client_.init(init_config);
    for (const auto& s : validation_.samples()) {
      eval_.queries.push_back(s.query);
      eval_.references.push_back(s.response);
    }
  }

  ~ExternalLearner() override {
    try {
      if (!shut_down_) client_.shutdown();
    } catch (const Error&) {
    }
  }

  TrainResult train_batch(std::span<const std::size_t> ids) override {
    std::vector<const DialogueSample*> batch;
    batch.reserve(ids.size());
    for (auto id : ids) batch.push_back(&train_[id]);
    return client_.train_batch(batch);
  }

  MetricVector validate() override {
    eval_.hypotheses = client_.generate(eval_.queries);
    return compute_metrics(eval_, table_, train_);
  }

  int shutdown() {
    shut_down_ = true;
    return client_.shutdown();
  }

 private:
  LearnerClient client_;
  const Corpus& train_;
  const Corpus& validation_;
  const EmbeddingTable& table_;
  EvalSet eval_;
  bool shut_down_ = false;
};

}  // namespace amcl
