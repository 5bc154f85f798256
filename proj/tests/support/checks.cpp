#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pgs/evaluator.hpp"
#include "pgs/search.hpp"

namespace pgs::test {

namespace {

struct Supported {
  bool open = false;
  bool solved = false;
  bool contradictory = false;
  bool stuck = false;
};

// Which statuses the children of `r` justify, straight from the rules.
Supported supported(const SearchGraph& g, NodeRef r) {
  Supported s;
  if (r.kind == NodeKind::Or) {
    const OrNode& n = g.or_node(r);
    bool live = false;
    for (const EdgeStats& e : n.edges) {
      if (e.child_kind == EdgeChild::Empty) s.contradictory = true;
      if (e.child_kind == EdgeChild::Unmaterialized) live = true;
      if (e.child_kind == EdgeChild::Node) {
        const NodeStatus cs = g.status(e.child);
        s.contradictory |= cs == NodeStatus::Contradictory;
        s.solved |= cs == NodeStatus::Solved;
        live |= cs == NodeStatus::Open;
      }
    }
    if (!n.expanded) live = true;
    s.open = !s.contradictory && !s.solved && live;
    s.stuck = !s.contradictory && !s.solved && !live;
    return s;
  }
  const AndNode& a = g.and_node(r);
  bool all_contra = true;
  bool live = false;
  for (const NodeRef c : a.children) {
    const NodeStatus cs = g.status(c);
    s.solved |= cs == NodeStatus::Solved;
    all_contra = all_contra && cs == NodeStatus::Contradictory;
    live |= cs == NodeStatus::Open;
  }
  s.contradictory = all_contra;
  s.open = !s.solved && !all_contra && live;
  s.stuck = !s.solved && !all_contra && !live;
  return s;
}

bool allowed(const Supported& s, NodeStatus st) {
  switch (st) {
    case NodeStatus::Open: return s.open;
    case NodeStatus::Solved: return s.solved;
    case NodeStatus::Contradictory: return s.contradictory;
    case NodeStatus::Stuck: return s.stuck;
  }
  return false;
}

std::string name(NodeRef r) { return (r.kind == NodeKind::Or ? "or" : "and") + std::to_string(r.index); }

}  // namespace

double reference_or_backup(const SearchGraph& g, NodeRef r) {
  const OrNode& n = g.or_node(r);
  double sum = n.v_net;
  double count = 1.0;
  for (const EdgeStats& e : n.edges) {
    if (e.visits == 0) continue;
    double child = g.options().stuck_value;
    if (e.child_kind == EdgeChild::Empty) child = 1.0;
    if (e.child_kind == EdgeChild::Node) child = g.value(e.child);
    sum += static_cast<double>(e.visits) * (e.reward + child);
    count += static_cast<double>(e.visits);
  }
  return sum / count;
}

double reference_and_backup(const SearchGraph& g, NodeRef r) {
  const AndNode& a = g.and_node(r);
  std::vector<double> vals;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (a.child_visits[i] > 0 && g.status(a.children[i]) != NodeStatus::Contradictory) {
      vals.push_back(g.value(a.children[i]));
    }
  }
  return vals.empty() ? 1.0 : *std::min_element(vals.begin(), vals.end());
}

FuzzReport fuzz_status_algebra(std::size_t cases, std::uint64_t seed) {
  FuzzReport rep;
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto violation = [&](const std::string& what) {
    if (rep.violations++ == 0) rep.first_violation = what;
  };

  for (std::size_t c = 0; c < cases; ++c) {
    ++rep.cases;
    SearchGraph g;
    std::vector<NodeRef> nodes;
    const std::size_t n_open = 2 + pick(9);
    for (std::size_t i = 0; i < n_open; ++i) {
      std::vector<ProofMethod> methods;
      const std::size_t m = 1 + pick(3);
      for (std::size_t k = 0; k < m; ++k) methods.push_back({"m" + std::to_string(k), "t", static_cast<std::uint32_t>(k)});
      const NodeRef r = g.intern_state("s" + std::to_string(i), methods).ref;
      OrNode& node = g.or_node(r);
      node.expanded = true;
      node.v_net = uni(-3.0, 1.0);
      node.value = node.v_net;
      for (const ProofMethod& pm : node.methods) {
        EdgeStats e;
        e.method = pm;
        e.prior = 1.0 / static_cast<double>(m);
        node.edges.push_back(e);
      }
      nodes.push_back(r);
    }
    const std::size_t n_term = pick(4);
    std::vector<NodeRef> terminals;
    for (std::size_t i = 0; i < n_term; ++i) {
      const NodeStatus ts = pick(2) == 0 ? NodeStatus::Solved : NodeStatus::Contradictory;
      terminals.push_back(g.intern_state("t" + std::to_string(i), {}, ts).ref);
    }
    std::vector<NodeRef> targets = nodes;
    targets.insert(targets.end(), terminals.begin(), terminals.end());
    g.set_root(nodes.front());

    std::vector<NodeStatus> or_prev, and_prev;
    const std::size_t ops = 4 + pick(20);
    for (std::size_t op = 0; op < ops; ++op) {
      // An open expanded node with an unmaterialized edge.
      std::vector<std::pair<NodeRef, std::size_t>> slots;
      for (const NodeRef r : nodes) {
        const OrNode& n = g.or_node(r);
        for (std::size_t e = 0; e < n.edges.size(); ++e) {
          if (n.edges[e].child_kind == EdgeChild::Unmaterialized) slots.emplace_back(r, e);
        }
      }
      if (slots.empty()) break;
      ++rep.operations;
      const auto [parent, edge] = slots[pick(slots.size())];
      const double kind = uni(0.0, 1.0);
      try {
        if (kind < 0.15) {
          g.mark_empty(parent, edge);
        } else if (kind < 0.3) {
          g.mark_excluded(parent, edge);
        } else if (kind < 0.7) {
          g.link_child(parent, edge, targets[pick(targets.size())]);
        } else {
          std::vector<NodeRef> kids;
          const std::size_t k = 2 + pick(2);
          for (std::size_t i = 0; i < k; ++i) {
            const NodeRef t = targets[pick(targets.size())];
            if (std::find(kids.begin(), kids.end(), t) == kids.end()) kids.push_back(t);
          }
          if (kids.size() < 2) {
            g.link_child(parent, edge, kids.front());
          } else {
            const NodeRef a = g.link_split(parent, edge, kids);
            g.refresh_status(a);
          }
        }
      } catch (const CycleError&) {
        g.mark_excluded(parent, edge);
      }
      g.refresh_status(parent);

      // Random visits and rewards, then the backup recomputation.
      for (const NodeRef r : nodes) {
        OrNode& n = g.or_node(r);
        for (EdgeStats& e : n.edges) {
          if (e.child_kind == EdgeChild::Unmaterialized || e.child_kind == EdgeChild::Excluded) continue;
          if (uni(0.0, 1.0) < 0.5) {
            e.visits += 1 + pick(3);
            e.reward = -1.0 - uni(0.0, 0.5);
          }
        }
      }
      for (std::uint32_t i = 0; i < g.and_count(); ++i) {
        AndNode& a = g.and_node({NodeKind::And, i});
        for (auto& v : a.child_visits) {
          if (uni(0.0, 1.0) < 0.5) v += 1;
        }
      }
      for (const NodeRef r : g.topological_order()) {
        if (g.status(r) == NodeStatus::Stuck) continue;
        if (r.kind == NodeKind::Or) {
          OrNode& n = g.or_node(r);
          if (n.terminal || !n.expanded) continue;
          n.value = or_backup_value(g, r);
          const double err = std::abs(n.value - reference_or_backup(g, r));
          rep.max_backup_error = std::max(rep.max_backup_error, err);
          if (err > 1e-9) violation("OR backup mismatch at " + name(r));
        } else {
          AndNode& a = g.and_node(r);
          a.value = and_backup_value(g, r);
          const double err = std::abs(a.value - reference_and_backup(g, r));
          rep.max_backup_error = std::max(rep.max_backup_error, err);
          if (err > 1e-9) violation("AND backup mismatch at " + name(r));
        }
      }

      // Status invariants over every node.
      for (std::uint32_t i = 0; i < g.or_count(); ++i) {
        const NodeRef r{NodeKind::Or, i};
        const OrNode& n = g.or_node(r);
        if (i < or_prev.size() && or_prev[i] != NodeStatus::Open && or_prev[i] != n.status) {
          violation("resolved status changed at " + name(r));
        }
        if (n.terminal) continue;
        if (!allowed(supported(g, r), n.status)) {
          std::ostringstream msg;
          msg << "case " << c << " op " << op << ": " << name(r) << " is " << to_string(n.status)
              << " but its children do not support it";
          violation(msg.str());
        }
      }
      for (std::uint32_t i = 0; i < g.and_count(); ++i) {
        const NodeRef r{NodeKind::And, i};
        const NodeStatus st = g.status(r);
        if (i < and_prev.size() && and_prev[i] != NodeStatus::Open && and_prev[i] != st) {
          violation("resolved status changed at " + name(r));
        }
        if (!allowed(supported(g, r), st)) {
          std::ostringstream msg;
          msg << "case " << c << " op " << op << ": " << name(r) << " is " << to_string(st)
              << " but its children do not support it";
          violation(msg.str());
        }
      }
      or_prev.clear();
      for (std::uint32_t i = 0; i < g.or_count(); ++i) or_prev.push_back(g.status({NodeKind::Or, i}));
      and_prev.clear();
      for (std::uint32_t i = 0; i < g.and_count(); ++i) and_prev.push_back(g.status({NodeKind::And, i}));
    }
  }
  return rep;
}

GradCheckReport finite_difference_check(const nn::ModelConfig& config, std::uint64_t seed, double h) {
  NetworkEvaluator net(nn::Tokenizer{}, config, seed);
  std::mt19937_64 rng(seed + 1);
  const char* words[] = {"simp", "induct", "case", "split", "rewrite", "solve", "contra", "goal"};
  std::vector<TrainingExample> batch;
  for (int b = 0; b < 3; ++b) {
    TrainingExample ex;
    const std::size_t n = 2 + static_cast<std::size_t>(b);
    for (std::size_t i = 0; i < n; ++i) {
      ex.methods.push_back({"m" + std::to_string(i), std::string(words[rng() % 8]) + " " + words[rng() % 8],
                            static_cast<std::uint32_t>(i)});
    }
    ex.action = static_cast<std::uint32_t>(rng() % n);
    ex.value_target = -1.5 + 0.5 * b;
    batch.push_back(std::move(ex));
  }
  TrainParams tp;
  tp.value_weight = 1.0;
  net.compute_gradients(batch, tp);
  std::vector<nn::Matrix> analytic;
  for (const nn::Parameter& p : net.model().parameters()) analytic.push_back(p.grad);

  GradCheckReport rep;
  auto& params = net.model().parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    ++rep.tensors;
    for (std::size_t k = 0; k < params[t].value.size(); ++k) {
      ++rep.entries;
      double& w = params[t].value.data[k];
      const double orig = w;
      w = orig + h;
      const double up = net.compute_gradients(batch, tp).total();
      w = orig - h;
      const double down = net.compute_gradients(batch, tp).total();
      w = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t].data[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > rep.max_relative_error) {
        rep.max_relative_error = rel;
        rep.worst_tensor = params[t].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return rep;
}

}  // namespace pgs::test
