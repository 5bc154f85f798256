#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/digest.hpp"

namespace pgs {

/// One applicable action at a state, as reported by the environment.
struct ProofMethod {
  std::string id;
  std::string text;
  std::uint32_t rank = 0;  // position in the environment's heuristic ordering

  friend bool operator==(const ProofMethod&, const ProofMethod&) = default;
};

enum class NodeStatus : std::uint8_t { Open, Solved, Contradictory, Stuck };

inline bool is_resolved(NodeStatus s) {
  return s == NodeStatus::Solved || s == NodeStatus::Contradictory;
}
const char* to_string(NodeStatus s);

enum class NodeKind : std::uint8_t { Or, And };

struct NodeRef {
  NodeKind kind = NodeKind::Or;
  std::uint32_t index = 0;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

/// What an OR edge currently points at.
enum class EdgeChild : std::uint8_t {
  Unmaterialized,  // method not yet executed
  Excluded,        // timed out twice or would close a cycle
  Empty,           // method produced zero children: contradictory by design
  Node,            // single OR child or an AND node for a case split
};

struct EdgeStats {
  ProofMethod method;
  std::uint64_t visits = 0;  // N(s,a)
  double reward = -1.0;      // R(s,a)
  double prior = 0.0;        // blended p(a|s)
  EdgeChild child_kind = EdgeChild::Unmaterialized;
  NodeRef child;
  bool hard_timeout = false;
};

struct OrNode {
  StateKey key;
  std::string payload;
  std::vector<ProofMethod> methods;
  bool terminal = false;  // environment-declared terminal state
  bool expanded = false;
  double v_net = 0.0;
  double value = 0.0;
  NodeStatus status = NodeStatus::Open;
  std::vector<EdgeStats> edges;
  std::uint64_t visit_total = 0;
  std::vector<NodeRef> parents;
};

struct AndNode {
  std::vector<NodeRef> children;  // always OR nodes
  std::vector<std::uint64_t> child_visits;
  NodeStatus status = NodeStatus::Open;
  double value = 1.0;
  NodeRef parent;  // the OR node whose edge produced this split
  std::uint32_t parent_edge = 0;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CycleError : public GraphError {
 public:
  using GraphError::GraphError;
};

class InvariantViolation : public GraphError {
 public:
  using GraphError::GraphError;
};

struct InternResult {
  NodeRef ref;
  bool was_new = false;
};

/// AND/OR search DAG with transposition interning. Single-writer.
class SearchGraph {
 public:
  struct Options {
    bool dedup = true;
    double stuck_value = -50.0;
  };

  SearchGraph() : SearchGraph(Options{}) {}
  explicit SearchGraph(Options options);

  /// Interns an OR state. With dedup enabled, an equal payload returns the
  /// existing node. Terminal states start resolved with value 1.
  InternResult intern_state(std::string payload, std::vector<ProofMethod> methods,
                            NodeStatus terminal_status = NodeStatus::Open);

  void set_root(NodeRef root) { root_ = root; }
  NodeRef root() const { return root_; }

  /// Points edge `edge` of OR node `parent` at `child`. Throws CycleError if
  /// `parent` is reachable from `child`.
  void link_child(NodeRef parent, std::size_t edge, NodeRef child);
  /// Creates an AND node under edge `edge` of `parent` over `children`.
  /// Throws CycleError (and leaves the graph unchanged) if any child reaches `parent`.
  NodeRef link_split(NodeRef parent, std::size_t edge, const std::vector<NodeRef>& children);
  void mark_empty(NodeRef parent, std::size_t edge);
  void mark_excluded(NodeRef parent, std::size_t edge);

  /// Sets a terminal status. Idempotent; conflicting terminal statuses and
  /// Open as a target are rejected with InvariantViolation.
  void set_status(NodeRef ref, NodeStatus status);
  NodeStatus status(NodeRef ref) const;
  double value(NodeRef ref) const;

  /// Re-derives the status of `ref` and, transitively, its ancestors.
  /// Newly resolved OR nodes are appended to the resolved log.
  void refresh_status(NodeRef ref);
  /// Status `ref` would take given its children, without changing it.
  NodeStatus derived_status(NodeRef ref) const;
  std::vector<NodeRef> take_newly_resolved();

  /// True if a directed path leads from `from` to `to` (or from == to).
  bool reaches(NodeRef from, NodeRef to) const;
  /// Every node of the graph, children before parents. Throws CycleError if
  /// the graph is not a DAG.
  std::vector<NodeRef> topological_order() const;
  /// `start` and all its ancestors, children before parents.
  std::vector<NodeRef> ancestors_bottom_up(NodeRef start) const;

  double shared_fraction() const;
  std::uint64_t intern_calls() const { return intern_calls_; }
  std::uint64_t shared_hits() const { return shared_hits_; }

  OrNode& or_node(NodeRef ref) { return or_nodes_.at(check(ref, NodeKind::Or).index); }
  const OrNode& or_node(NodeRef ref) const { return or_nodes_.at(check(ref, NodeKind::Or).index); }
  AndNode& and_node(NodeRef ref) { return and_nodes_.at(check(ref, NodeKind::And).index); }
  const AndNode& and_node(NodeRef ref) const {
    return and_nodes_.at(check(ref, NodeKind::And).index);
  }
  std::size_t or_count() const { return or_nodes_.size(); }
  std::size_t and_count() const { return and_nodes_.size(); }
  const Options& options() const { return options_; }

  /// Children of a node (an OR node's materialized edge targets, an AND node's children).
  std::vector<NodeRef> children(NodeRef ref) const;

  nlohmann::json to_json() const;

 private:
  static const NodeRef& check(const NodeRef& ref, NodeKind kind);
  NodeStatus& status_ref(NodeRef ref);
  std::vector<NodeRef> parents(NodeRef ref) const;

  Options options_;
  std::vector<OrNode> or_nodes_;
  std::vector<AndNode> and_nodes_;
  std::unordered_map<StateKey, std::uint32_t> transpositions_;
  NodeRef root_;
  std::uint64_t intern_calls_ = 0;
  std::uint64_t shared_hits_ = 0;
  std::vector<NodeRef> newly_resolved_;
};

}  // namespace pgs
