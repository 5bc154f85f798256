#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgs/env/toy.hpp"
#include "pgs/proof_graph.hpp"

namespace pgs::test {

inline env::ExplicitGraph::Method method(std::string id, std::vector<std::uint32_t> children,
                                         std::int64_t latency_us = 100) {
  env::ExplicitGraph::Method m;
  m.id = id;
  m.text = "apply " + id;
  m.children = std::move(children);
  m.latency_us = latency_us;
  return m;
}

inline env::ExplicitGraph::Method diverging(std::string id) {
  env::ExplicitGraph::Method m = method(std::move(id), {});
  m.diverges = true;
  return m;
}

inline env::ExplicitGraph::State open_state(std::vector<env::ExplicitGraph::Method> methods) {
  env::ExplicitGraph::State s;
  s.methods = std::move(methods);
  return s;
}

inline env::ExplicitGraph::State terminal_state(env::Terminal t) {
  env::ExplicitGraph::State s;
  s.terminal = t;
  return s;
}

inline env::ToyInstance explicit_instance(std::string lemma, env::ExplicitGraph g) {
  env::ToyInstance inst;
  inst.lemma = std::move(lemma);
  inst.explicit_graph = std::move(g);
  return inst;
}

/// Interns a fresh open OR state with `n` methods and marks it expanded with
/// one unmaterialized edge per method.
inline NodeRef expanded_state(SearchGraph& g, const std::string& payload, std::size_t n) {
  std::vector<ProofMethod> methods;
  for (std::size_t i = 0; i < n; ++i) {
    methods.push_back({"m" + std::to_string(i), "t" + std::to_string(i), static_cast<std::uint32_t>(i)});
  }
  const NodeRef r = g.intern_state(payload, methods).ref;
  OrNode& node = g.or_node(r);
  node.expanded = true;
  for (const ProofMethod& m : node.methods) {
    EdgeStats e;
    e.method = m;
    e.prior = 1.0 / static_cast<double>(n);
    node.edges.push_back(e);
  }
  return r;
}

inline NodeRef terminal_node(SearchGraph& g, const std::string& payload, NodeStatus s) {
  return g.intern_state(payload, {}, s).ref;
}

inline std::string data_path(const std::string& name) { return std::string(PGS_TEST_DATA_DIR) + "/" + name; }

}  // namespace pgs::test
