#include "pgs/env/environment.hpp"

namespace pgs::env {

const char* to_string(Terminal t) {
  switch (t) {
    case Terminal::None: return "none";
    case Terminal::Solved: return "solved";
    case Terminal::Contradictory: return "contradictory";
  }
  return "?";
}

Terminal terminal_from_string(std::string_view s) {
  if (s == "none") return Terminal::None;
  if (s == "solved") return Terminal::Solved;
  if (s == "contradictory") return Terminal::Contradictory;
  throw EnvError(EnvError::Code::Protocol, "unknown terminal marker '" + std::string(s) + "'");
}

NodeStatus to_status(Terminal t) {
  switch (t) {
    case Terminal::Solved: return NodeStatus::Solved;
    case Terminal::Contradictory: return NodeStatus::Contradictory;
    case Terminal::None: break;
  }
  return NodeStatus::Open;
}

const char* EnvError::code_name() const {
  switch (code_) {
    case Code::NotFound: return "not_found";
    case Code::NotApplicable: return "not_applicable";
    case Code::Decode: return "decode";
    case Code::Transport: return "transport";
    case Code::Protocol: return "protocol";
  }
  return "?";
}

std::size_t ProofTree::size() const {
  std::size_t n = method ? 1 : 0;
  for (const auto& c : children) {
    if (c) n += c->size();
  }
  return n;
}

namespace {

struct Replay {
  Environment& env;
  std::string failure;

  // Returns the status the subtree proves, or Open on failure.
  NodeStatus check(const EnvState& state, const ProofTree& node, const std::string& where) {
    if (node.payload != state.payload) return fail(where, "state payload differs from the calculus");
    if (!node.method) {
      if (!node.children.empty()) return fail(where, "leaf carries children");
      if (state.terminal == Terminal::None) return fail(where, "leaf is not terminal");
      if (node.terminal != state.terminal) return fail(where, "leaf terminal marker is forged");
      return to_status(state.terminal);
    }
    if (state.terminal != Terminal::None) return fail(where, "method applied to a terminal state");
    ExecResult res;
    try {
      res = env.execute_method(state.payload, *node.method, Micros::max());
    } catch (const EnvError& e) {
      return fail(where, std::string("method '") + *node.method + "' rejected: " + e.what());
    }
    if (res.timed_out) return fail(where, "method '" + *node.method + "' does not terminate");
    if (res.children.empty()) {
      if (!node.children.empty()) return fail(where, "method has no children but tree lists some");
      return NodeStatus::Contradictory;
    }
    if (res.children.size() != node.children.size()) {
      return fail(where, "child count mismatch for method '" + *node.method + "'");
    }
    bool all_contradictory = true;
    bool any_solved = false;
    for (std::size_t i = 0; i < res.children.size(); ++i) {
      const std::string here = where + "/" + *node.method + "#" + std::to_string(i);
      if (!node.children[i]) {
        all_contradictory = false;
        continue;
      }
      const NodeStatus s = check(res.children[i], *node.children[i], here);
      if (s == NodeStatus::Open) return NodeStatus::Open;
      if (s == NodeStatus::Solved) any_solved = true;
      if (s != NodeStatus::Contradictory) all_contradictory = false;
    }
    if (any_solved) return NodeStatus::Solved;
    if (all_contradictory) return NodeStatus::Contradictory;
    return fail(where, "case split neither solved nor fully contradicted");
  }

  NodeStatus fail(const std::string& where, const std::string& why) {
    if (failure.empty()) failure = (where.empty() ? std::string("/") : where) + ": " + why;
    return NodeStatus::Open;
  }
};

}  // namespace

CheckResult replay_proof(Environment& env, const EnvState& root, const ProofTree& tree) {
  Replay r{env, {}};
  const NodeStatus s = r.check(root, tree, "");
  CheckResult out;
  out.valid = is_resolved(s);
  out.proof_size = tree.size();
  out.reason = r.failure;
  return out;
}

}  // namespace pgs::env
