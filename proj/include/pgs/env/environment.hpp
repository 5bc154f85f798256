#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pgs/proof_graph.hpp"

namespace pgs::env {

using Micros = std::chrono::microseconds;

enum class Terminal : std::uint8_t { None, Solved, Contradictory };

const char* to_string(Terminal t);
Terminal terminal_from_string(std::string_view s);
NodeStatus to_status(Terminal t);

/// A proof state as the client holds it. The payload is opaque and canonical.
struct EnvState {
  std::string payload;
  std::vector<ProofMethod> methods;  // heuristic order: methods[i].rank == i
  Terminal terminal = Terminal::None;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct ExecResult {
  bool timed_out = false;
  std::vector<EnvState> children;
  Micros elapsed{0};
};

/// Proof tree sent to the checker. Internal nodes name the applied method and
/// hold one slot per produced child; a null slot is a branch the proof does
/// not need (only legal under a solved case split).
struct ProofTree {
  std::string payload;
  Terminal terminal = Terminal::None;  // set on leaves only
  std::optional<std::string> method;
  std::vector<std::unique_ptr<ProofTree>> children;

  std::size_t size() const;  // number of method applications
};

struct CheckResult {
  bool valid = false;
  std::size_t proof_size = 0;
  std::string reason;  // location of the first failure when invalid
};

class EnvError : public std::runtime_error {
 public:
  enum class Code { NotFound, NotApplicable, Decode, Transport, Protocol };
  EnvError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }
  const char* code_name() const;

 private:
  Code code_;
};

/// The three-endpoint prover protocol. Every call is a pure function of its
/// arguments; implementations hold no per-client search state.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvState get_initial_system(std::string_view lemma) = 0;
  /// Applies `method_id` to the state. Returns timed_out=true if the call
  /// did not finish within `timeout`.
  virtual ExecResult execute_method(std::string_view payload, std::string_view method_id,
                                    Micros timeout) = 0;
  virtual CheckResult check_proof(const ProofTree& tree) = 0;
};

/// Replays `tree` against `env`, starting from the known `root` state.
/// Every edge is re-executed without a time limit; leaves must be terminal and
/// the tree must prove either a solution or a contradiction.
CheckResult replay_proof(Environment& env, const EnvState& root, const ProofTree& tree);

}  // namespace pgs::env
