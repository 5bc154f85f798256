#include <algorithm>
#include <limits>

#include "pgs/env/toy.hpp"

namespace pgs::env {

namespace {

constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();

std::size_t saturating_add(std::size_t a, std::size_t b) { return (a > kInf - b) ? kInf : a + b; }

struct Candidate {
  std::size_t contradictory = kInf;
  std::size_t solved = kInf;
};

Candidate evaluate_method(const ToyCalculus::Method& m, const std::vector<NodeStatus>& status,
                          const std::vector<std::size_t>& cost) {
  Candidate c;
  if (m.diverges) return c;
  if (m.children.empty()) {
    c.contradictory = 1;
    return c;
  }
  bool all_contradictory = true;
  std::size_t sum = 1;
  std::size_t best_solved = kInf;
  for (auto child : m.children) {
    if (status[child] == NodeStatus::Contradictory) {
      sum = saturating_add(sum, cost[child]);
    } else {
      all_contradictory = false;
    }
    if (status[child] == NodeStatus::Solved) best_solved = std::min(best_solved, cost[child]);
  }
  if (all_contradictory) c.contradictory = sum;
  if (best_solved != kInf) c.solved = saturating_add(best_solved, 1);
  return c;
}

}  // namespace

OracleResult oracle_resolve(const ToyCalculus& calculus, std::size_t bound) {
  const std::size_t n = calculus.states.size();
  if (calculus.nonterminal_count() > bound) {
    throw OracleRefusal("calculus has " + std::to_string(calculus.nonterminal_count()) +
                        " states, above the oracle bound of " + std::to_string(bound));
  }
  OracleResult out;
  out.status.assign(n, NodeStatus::Open);
  std::vector<std::size_t> cost(n, kInf);
  for (std::size_t s = 0; s < n; ++s) {
    if (calculus.states[s].terminal != Terminal::None) {
      out.status[s] = to_status(calculus.states[s].terminal);
      cost[s] = 0;
    }
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t s = 0; s < n; ++s) {
      const auto& state = calculus.states[s];
      if (state.terminal != Terminal::None) continue;
      Candidate best;
      for (const auto& m : state.methods) {
        const Candidate c = evaluate_method(m, out.status, cost);
        best.contradictory = std::min(best.contradictory, c.contradictory);
        best.solved = std::min(best.solved, c.solved);
      }
      NodeStatus next = out.status[s];
      if (next == NodeStatus::Open) {
        if (best.contradictory != kInf) {
          next = NodeStatus::Contradictory;
        } else if (best.solved != kInf) {
          next = NodeStatus::Solved;
        }
      }
      const std::size_t next_cost =
          next == NodeStatus::Contradictory ? best.contradictory : next == NodeStatus::Solved ? best.solved : kInf;
      if (next != out.status[s] || next_cost < cost[s]) {
        out.status[s] = next;
        cost[s] = std::min(cost[s], next_cost);
        changed = true;
      }
    }
  }
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::uint32_t> stack{calculus.root};
  while (!stack.empty()) {
    const auto s = stack.back();
    stack.pop_back();
    if (seen[s]) continue;
    seen[s] = 1;
    if (calculus.states[s].terminal == Terminal::None) ++out.reachable_nonterminal;
    for (const auto& m : calculus.states[s].methods) {
      if (m.diverges) continue;
      for (auto c : m.children) stack.push_back(c);
    }
  }
  out.cost = std::move(cost);
  return out;
}

OracleResult oracle_resolve(const ToyInstance& instance, std::size_t bound) {
  return oracle_resolve(ToyCalculus::generate(instance), bound);
}

std::optional<std::size_t> method_cost(const ToyCalculus& c, const OracleResult& o, std::uint32_t state,
                                       std::size_t m) {
  const NodeStatus s = o.status.at(state);
  if (!is_resolved(s)) return std::nullopt;
  const Candidate cand = evaluate_method(c.states.at(state).methods.at(m), o.status, o.cost);
  const std::size_t v = s == NodeStatus::Contradictory ? cand.contradictory : cand.solved;
  if (v == kInf) return std::nullopt;
  return v;
}

}  // namespace pgs::env
