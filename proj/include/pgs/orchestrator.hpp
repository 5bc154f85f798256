#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/config.hpp"
#include "pgs/env/environment.hpp"
#include "pgs/evaluator.hpp"
#include "pgs/search.hpp"

namespace pgs {

/// max(B + 1, floor(B * phi)). Throws std::invalid_argument when B < 1 or phi <= 1.
std::uint64_t next_budget(std::uint64_t budget, double phi);

enum class LemmaStatus { Pending, Proven, Abandoned };
const char* to_string(LemmaStatus s);

struct LemmaState {
  std::string lemma;
  LemmaStatus status = LemmaStatus::Pending;
  NodeStatus root_status = NodeStatus::Open;  // of the latest finished search
  std::uint64_t attempts = 0;                 // searches started, crashes included
  std::uint64_t crashes = 0;
  std::uint64_t budget = 0;                   // budget of the next attempt
  std::uint64_t total_expansions = 0;
  std::uint64_t last_expansions = 0;
  std::size_t proof_size = 0;
  Micros env_time{0};
  bool in_flight = false;
};

/// Round-robin over lemmas. Proven, abandoned and in-flight lemmas are skipped.
/// Not thread-safe; the orchestrator guards it.
class Scheduler {
 public:
  Scheduler(std::vector<std::string> lemmas, std::uint64_t initial_budget);

  /// Index of the next lemma to search, marked in flight. nullopt when no
  /// lemma is currently available; complete() tells whether any ever will be.
  std::optional<std::size_t> next();
  /// Every lemma is proven or abandoned.
  bool complete() const;
  bool any_in_flight() const;

  /// Records a finished search. A failure grows the lemma's budget.
  void finish(std::size_t index, const SearchResult& result, double phi);
  /// Records a crashed search; the lemma is abandoned after `max_crashes`.
  void crash(std::size_t index, std::uint64_t max_crashes);

  const std::vector<LemmaState>& lemmas() const { return states_; }
  const LemmaState& at(std::size_t i) const { return states_.at(i); }

 private:
  std::vector<LemmaState> states_;
  std::size_t cursor_ = 0;
};

/// Runs every inference and training call on one thread, first come first
/// served. Each request sees the weights committed by the last finished task.
class EvaluationService {
 public:
  explicit EvaluationService(NetworkEvaluator& network);
  ~EvaluationService();
  EvaluationService(const EvaluationService&) = delete;
  EvaluationService& operator=(const EvaluationService&) = delete;

  EvaluatorOutput evaluate(std::span<const ProofMethod> methods);
  Losses train(std::span<const TrainingExample> batch, const TrainParams& params);
  /// Runs `fn` on the service thread with exclusive access to the network.
  void with_network(const std::function<void(NetworkEvaluator&)>& fn);
  void stop();

 private:
  void post(std::function<void()> task);
  void loop();

  NetworkEvaluator& network_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::thread thread_;
};

/// Evaluator handle a search worker uses to reach the shared service.
class ServiceEvaluator final : public Evaluator {
 public:
  explicit ServiceEvaluator(EvaluationService& service) : service_(service) {}
  EvaluatorOutput evaluate(std::span<const ProofMethod> methods) override { return service_.evaluate(methods); }
  std::string name() const override { return "network"; }

 private:
  EvaluationService& service_;
};

struct RunReport {
  std::vector<LemmaState> lemmas;
  std::uint64_t searches = 0;
  std::uint64_t proofs = 0;
  std::uint64_t crashes = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t examples_pushed = 0;
  std::optional<Losses> last_losses;
  std::string stop_reason;
  std::string checkpoint;  // path of the final checkpoint, empty if none
  std::chrono::duration<double> wall_clock{0};

  /// Deterministic for single-worker runs; wall-clock time is left out.
  nlohmann::json to_json() const;
  /// Human-readable table, one row per lemma.
  std::string to_table(bool include_wall_clock = true) const;
};

/// Builds the initial network: weights from paths.checkpoint when set,
/// otherwise a fresh model over the tokenizer at paths.tokenizer (character
/// level when empty).
NetworkEvaluator make_network(const Config& config);

/// Self-play training. Workers search lemmas in round-robin order and feed
/// the replay buffer; the trainer samples from it whenever it is ready.
/// With one worker, searching and training alternate deterministically.
/// Checkpoints and the report are written under paths.out_dir. Rethrows
/// TrainingDiverged after saving the last good weights.
RunReport train_loop(const Config& config, env::Environment& env, const std::vector<std::string>& lemmas);

}  // namespace pgs
