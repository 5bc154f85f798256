#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/env/environment.hpp"

namespace pgs::env {

enum class Polarity : std::uint8_t { Universal, Existential };

/// A hand-written calculus, mainly for fixtures. State 0 is the root unless
/// `root` says otherwise; methods are listed in heuristic order.
struct ExplicitGraph {
  struct Method {
    std::string id;
    std::string text;
    std::vector<std::uint32_t> children;
    std::int64_t latency_us = 100;
    bool diverges = false;
  };
  struct State {
    Terminal terminal = Terminal::None;
    std::vector<Method> methods;
  };
  std::uint32_t root = 0;
  std::vector<State> states;
};

/// Descriptor of one generated toy lemma.
struct ToyInstance {
  std::string lemma;
  std::uint64_t seed = 0;
  std::uint32_t depth = 6;
  std::uint32_t min_branching = 2;
  std::uint32_t max_branching = 4;
  double close_prob = 0.15;   // method closes the state directly
  double split_prob = 0.2;    // method causes a case split
  std::uint32_t max_split = 3;
  double duplicate_prob = 0.1;
  double informativeness = 0.5;
  Polarity polarity = Polarity::Universal;
  std::uint32_t max_states = 400;  // bound on non-terminal states
  double slow_prob = 0.0;     // latency between the default call and retry timeouts
  double diverge_prob = 0.0;  // method never returns
  std::optional<ExplicitGraph> explicit_graph;

  void validate() const;
};

nlohmann::json to_json(const ToyInstance& inst);
ToyInstance toy_instance_from_json(const nlohmann::json& j);
std::vector<ToyInstance> load_suite(const std::string& path);
void save_suite(const std::string& path, const std::vector<ToyInstance>& suite);

/// Fully materialized calculus of one lemma.
struct ToyCalculus {
  struct Method {
    std::string id;
    std::string text;
    std::vector<std::uint32_t> children;
    Micros latency{0};
    bool diverges = false;
  };
  struct State {
    Terminal terminal = Terminal::None;
    std::uint32_t level = 0;
    std::vector<Method> methods;  // heuristic order
  };

  std::string lemma;
  std::uint32_t root = 0;
  std::vector<State> states;

  static ToyCalculus generate(const ToyInstance& inst);

  std::size_t nonterminal_count() const;
  std::string payload_of(std::uint32_t state) const;
  EnvState env_state(std::uint32_t state) const;
};

/// Decodes a toy payload into (lemma, state index). Throws EnvError(Decode).
std::pair<std::string, std::uint32_t> decode_toy_payload(std::string_view payload);

/// Brute-force ground truth over a calculus.
struct OracleResult {
  std::vector<NodeStatus> status;  // Open = not resolvable
  std::vector<std::size_t> cost;   // minimal proof size; meaningful when resolved
  std::size_t reachable_nonterminal = 0;

  NodeStatus root_status(const ToyCalculus& c) const { return status[c.root]; }
};

class OracleRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-fixpoint AND/OR evaluation: an OR state is contradictory iff some
/// returning method has only contradictory children, solved iff some
/// returning method has a solved child. Refuses calculi with more than
/// `bound` non-terminal states.
OracleResult oracle_resolve(const ToyCalculus& calculus, std::size_t bound = 4096);
OracleResult oracle_resolve(const ToyInstance& instance, std::size_t bound = 4096);

/// Cost of proving `state` through method `m` under the oracle; nullopt when
/// that method cannot resolve it.
std::optional<std::size_t> method_cost(const ToyCalculus& c, const OracleResult& o,
                                       std::uint32_t state, std::size_t m);

/// In-process toy prover over a suite of lemmas. Read-only after construction.
class ToyEnvironment final : public Environment {
 public:
  explicit ToyEnvironment(const std::vector<ToyInstance>& suite);

  EnvState get_initial_system(std::string_view lemma) override;
  ExecResult execute_method(std::string_view payload, std::string_view method_id,
                            Micros timeout) override;
  CheckResult check_proof(const ProofTree& tree) override;

  const ToyCalculus& calculus(std::string_view lemma) const;
  std::vector<std::string> lemmas() const;

 private:
  std::map<std::string, ToyCalculus, std::less<>> calculi_;
};

/// Generator parameters for `gen`. Instance i gets seed `seed * 1000003 + i`.
struct SuiteParams {
  std::size_t count = 10;
  std::string prefix = "L";
  ToyInstance base;
};

std::vector<ToyInstance> generate_suite(std::uint64_t seed, const SuiteParams& params);
/// Every method text across the suite, sorted, duplicates kept.
std::vector<std::string> method_corpus(const std::vector<ToyInstance>& suite);

}  // namespace pgs::env
