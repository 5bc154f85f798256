#include "pgs/proof_graph.hpp"

#include <algorithm>

namespace pgs {

const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Open: return "open";
    case NodeStatus::Solved: return "solved";
    case NodeStatus::Contradictory: return "contradictory";
    case NodeStatus::Stuck: return "stuck";
  }
  return "?";
}

SearchGraph::SearchGraph(Options options) : options_(options) {}

const NodeRef& SearchGraph::check(const NodeRef& ref, NodeKind kind) {
  if (ref.kind != kind) throw GraphError("node reference has the wrong kind");
  return ref;
}

InternResult SearchGraph::intern_state(std::string payload, std::vector<ProofMethod> methods,
                                       NodeStatus terminal_status) {
  ++intern_calls_;
  StateKey key = StateKey::of(payload);
  if (options_.dedup) {
    if (auto it = transpositions_.find(key); it != transpositions_.end()) {
      ++shared_hits_;
      return {NodeRef{NodeKind::Or, it->second}, false};
    }
  }
  const auto index = static_cast<std::uint32_t>(or_nodes_.size());
  OrNode& node = or_nodes_.emplace_back();
  node.key = key;
  node.payload = std::move(payload);
  node.methods = std::move(methods);
  if (terminal_status != NodeStatus::Open) {
    if (!is_resolved(terminal_status)) throw InvariantViolation("terminal states must be resolved");
    node.terminal = true;
    node.status = terminal_status;
    node.value = 1.0;
    node.v_net = 1.0;
  }
  if (options_.dedup) transpositions_.emplace(key, index);
  return {NodeRef{NodeKind::Or, index}, true};
}

void SearchGraph::link_child(NodeRef parent, std::size_t edge, NodeRef child) {
  OrNode& p = or_node(parent);
  if (edge >= p.edges.size()) throw GraphError("edge index out of range");
  if (reaches(child, parent)) throw CycleError("edge would close a cycle");
  EdgeStats& e = p.edges[edge];
  e.child_kind = EdgeChild::Node;
  e.child = child;
  auto& ps = or_node(child).parents;
  if (std::find(ps.begin(), ps.end(), parent) == ps.end()) ps.push_back(parent);
}

NodeRef SearchGraph::link_split(NodeRef parent, std::size_t edge,
                                const std::vector<NodeRef>& children) {
  OrNode& p = or_node(parent);
  if (edge >= p.edges.size()) throw GraphError("edge index out of range");
  if (children.size() < 2) throw GraphError("a case split needs at least two children");
  for (const NodeRef& c : children) {
    if (reaches(c, parent)) throw CycleError("case split would close a cycle");
  }
  const NodeRef ref{NodeKind::And, static_cast<std::uint32_t>(and_nodes_.size())};
  AndNode& a = and_nodes_.emplace_back();
  a.children = children;
  a.child_visits.assign(children.size(), 0);
  a.parent = parent;
  a.parent_edge = static_cast<std::uint32_t>(edge);
  for (const NodeRef& c : children) {
    auto& ps = or_node(c).parents;
    if (std::find(ps.begin(), ps.end(), ref) == ps.end()) ps.push_back(ref);
  }
  EdgeStats& e = or_node(parent).edges[edge];
  e.child_kind = EdgeChild::Node;
  e.child = ref;
  return ref;
}

void SearchGraph::mark_empty(NodeRef parent, std::size_t edge) {
  or_node(parent).edges.at(edge).child_kind = EdgeChild::Empty;
}

void SearchGraph::mark_excluded(NodeRef parent, std::size_t edge) {
  or_node(parent).edges.at(edge).child_kind = EdgeChild::Excluded;
}

NodeStatus& SearchGraph::status_ref(NodeRef ref) {
  return ref.kind == NodeKind::Or ? or_node(ref).status : and_node(ref).status;
}

NodeStatus SearchGraph::status(NodeRef ref) const {
  return ref.kind == NodeKind::Or ? or_node(ref).status : and_node(ref).status;
}

double SearchGraph::value(NodeRef ref) const {
  return ref.kind == NodeKind::Or ? or_node(ref).value : and_node(ref).value;
}

void SearchGraph::set_status(NodeRef ref, NodeStatus status) {
  if (status == NodeStatus::Open) throw InvariantViolation("cannot reopen a node");
  NodeStatus& current = status_ref(ref);
  if (current == status) return;
  if (current != NodeStatus::Open) {
    throw InvariantViolation(std::string("conflicting status transition ") + to_string(current) +
                             " -> " + to_string(status));
  }
  current = status;
  if (status == NodeStatus::Stuck) {
    if (ref.kind == NodeKind::Or) {
      or_node(ref).value = options_.stuck_value;
    } else {
      and_node(ref).value = options_.stuck_value;
    }
  }
  if (ref.kind == NodeKind::Or && is_resolved(status)) newly_resolved_.push_back(ref);
}

NodeStatus SearchGraph::derived_status(NodeRef ref) const {
  if (ref.kind == NodeKind::Or) {
    const OrNode& n = or_node(ref);
    if (n.status != NodeStatus::Open || n.terminal || !n.expanded) return n.status;
    bool solved = false;
    bool live = false;
    for (const EdgeStats& e : n.edges) {
      switch (e.child_kind) {
        case EdgeChild::Empty: return NodeStatus::Contradictory;
        case EdgeChild::Unmaterialized: live = true; break;
        case EdgeChild::Excluded: break;
        case EdgeChild::Node: {
          const NodeStatus cs = status(e.child);
          if (cs == NodeStatus::Contradictory) return NodeStatus::Contradictory;
          if (cs == NodeStatus::Solved) solved = true;
          if (cs == NodeStatus::Open) live = true;
          break;
        }
      }
    }
    if (solved) return NodeStatus::Solved;
    return live ? NodeStatus::Open : NodeStatus::Stuck;
  }
  const AndNode& a = and_node(ref);
  if (a.status != NodeStatus::Open) return a.status;
  bool all_contradictory = true;
  bool live = false;
  for (const NodeRef& c : a.children) {
    const NodeStatus cs = status(c);
    if (cs == NodeStatus::Solved) return NodeStatus::Solved;
    if (cs != NodeStatus::Contradictory) all_contradictory = false;
    if (cs == NodeStatus::Open) live = true;
  }
  if (all_contradictory) return NodeStatus::Contradictory;
  return live ? NodeStatus::Open : NodeStatus::Stuck;
}

void SearchGraph::refresh_status(NodeRef ref) {
  std::vector<NodeRef> work{ref};
  while (!work.empty()) {
    const NodeRef cur = work.back();
    work.pop_back();
    const NodeStatus next = derived_status(cur);
    if (next == status(cur)) continue;
    set_status(cur, next);
    for (const NodeRef& p : parents(cur)) work.push_back(p);
  }
}

std::vector<NodeRef> SearchGraph::take_newly_resolved() {
  std::vector<NodeRef> out;
  out.swap(newly_resolved_);
  return out;
}

std::vector<NodeRef> SearchGraph::children(NodeRef ref) const {
  std::vector<NodeRef> out;
  if (ref.kind == NodeKind::Or) {
    for (const EdgeStats& e : or_node(ref).edges) {
      if (e.child_kind == EdgeChild::Node) out.push_back(e.child);
    }
  } else {
    out = and_node(ref).children;
  }
  return out;
}

std::vector<NodeRef> SearchGraph::parents(NodeRef ref) const {
  if (ref.kind == NodeKind::Or) return or_node(ref).parents;
  return {and_node(ref).parent};
}

namespace {

struct Marks {
  std::vector<std::uint8_t> or_marks;
  std::vector<std::uint8_t> and_marks;
  std::uint8_t& at(NodeRef r) {
    return r.kind == NodeKind::Or ? or_marks[r.index] : and_marks[r.index];
  }
};

}  // namespace

bool SearchGraph::reaches(NodeRef from, NodeRef to) const {
  Marks seen{std::vector<std::uint8_t>(or_nodes_.size()), std::vector<std::uint8_t>(and_nodes_.size())};
  std::vector<NodeRef> stack{from};
  while (!stack.empty()) {
    const NodeRef cur = stack.back();
    stack.pop_back();
    if (cur == to) return true;
    if (seen.at(cur)) continue;
    seen.at(cur) = 1;
    for (const NodeRef& c : children(cur)) stack.push_back(c);
  }
  return false;
}

std::vector<NodeRef> SearchGraph::topological_order() const {
  // 0 = unvisited, 1 = on stack, 2 = done
  Marks marks{std::vector<std::uint8_t>(or_nodes_.size()), std::vector<std::uint8_t>(and_nodes_.size())};
  std::vector<NodeRef> order;
  order.reserve(or_nodes_.size() + and_nodes_.size());
  auto visit_from = [&](NodeRef start) {
    if (marks.at(start) != 0) return;
    std::vector<std::pair<NodeRef, std::vector<NodeRef>>> stack;
    marks.at(start) = 1;
    stack.emplace_back(start, children(start));
    while (!stack.empty()) {
      auto& [node, pending] = stack.back();
      if (pending.empty()) {
        marks.at(node) = 2;
        order.push_back(node);
        stack.pop_back();
        continue;
      }
      const NodeRef next = pending.back();
      pending.pop_back();
      const std::uint8_t m = marks.at(next);
      if (m == 1) throw CycleError("search graph contains a cycle");
      if (m == 0) {
        marks.at(next) = 1;
        stack.emplace_back(next, children(next));
      }
    }
  };
  for (std::uint32_t i = 0; i < or_nodes_.size(); ++i) visit_from({NodeKind::Or, i});
  for (std::uint32_t i = 0; i < and_nodes_.size(); ++i) visit_from({NodeKind::And, i});
  return order;
}

std::vector<NodeRef> SearchGraph::ancestors_bottom_up(NodeRef start) const {
  Marks marks{std::vector<std::uint8_t>(or_nodes_.size()), std::vector<std::uint8_t>(and_nodes_.size())};
  std::vector<NodeRef> post;
  std::vector<std::pair<NodeRef, std::vector<NodeRef>>> stack;
  marks.at(start) = 1;
  stack.emplace_back(start, parents(start));
  while (!stack.empty()) {
    auto& [node, pending] = stack.back();
    if (pending.empty()) {
      post.push_back(node);
      stack.pop_back();
      continue;
    }
    const NodeRef next = pending.back();
    pending.pop_back();
    if (marks.at(next) == 0) {
      marks.at(next) = 1;
      stack.emplace_back(next, parents(next));
    }
  }
  std::reverse(post.begin(), post.end());
  return post;
}

double SearchGraph::shared_fraction() const {
  if (intern_calls_ == 0) return 0.0;
  return static_cast<double>(shared_hits_) / static_cast<double>(intern_calls_);
}

namespace {

std::string ref_id(NodeRef r) {
  return (r.kind == NodeKind::Or ? "o" : "a") + std::to_string(r.index);
}

const char* child_kind_name(EdgeChild k) {
  switch (k) {
    case EdgeChild::Unmaterialized: return "unmaterialized";
    case EdgeChild::Excluded: return "excluded";
    case EdgeChild::Empty: return "empty";
    case EdgeChild::Node: return "node";
  }
  return "?";
}

}  // namespace

nlohmann::json SearchGraph::to_json() const {
  using nlohmann::json;
  json ors = json::array();
  for (std::uint32_t i = 0; i < or_nodes_.size(); ++i) {
    const OrNode& n = or_nodes_[i];
    json edges = json::array();
    for (const EdgeStats& e : n.edges) {
      json je{{"method", e.method.id},       {"text", e.method.text},
              {"rank", e.method.rank},       {"visits", e.visits},
              {"reward", e.reward},          {"prior", e.prior},
              {"child_kind", child_kind_name(e.child_kind)},
              {"hard_timeout", e.hard_timeout}};
      if (e.child_kind == EdgeChild::Node) je["child"] = ref_id(e.child);
      edges.push_back(std::move(je));
    }
    ors.push_back(json{{"id", ref_id({NodeKind::Or, i})},
                       {"key", n.key.hex()},
                       {"status", to_string(n.status)},
                       {"terminal", n.terminal},
                       {"expanded", n.expanded},
                       {"v_net", n.v_net},
                       {"value", n.value},
                       {"visit_total", n.visit_total},
                       {"edges", std::move(edges)}});
  }
  json ands = json::array();
  for (std::uint32_t i = 0; i < and_nodes_.size(); ++i) {
    const AndNode& a = and_nodes_[i];
    json kids = json::array();
    for (const NodeRef& c : a.children) kids.push_back(ref_id(c));
    ands.push_back(json{{"id", ref_id({NodeKind::And, i})},
                        {"status", to_string(a.status)},
                        {"value", a.value},
                        {"parent", ref_id(a.parent)},
                        {"children", std::move(kids)},
                        {"child_visits", a.child_visits}});
  }
  return json{{"root", ref_id(root_)},
              {"or_nodes", std::move(ors)},
              {"and_nodes", std::move(ands)},
              {"stats",
               {{"intern_calls", intern_calls_},
                {"shared_hits", shared_hits_},
                {"shared_fraction", shared_fraction()}}}};
}

}  // namespace pgs
