#include "pgs/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "pgs/env/wire.hpp"

namespace pgs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

env::Terminal terminal_of(NodeStatus s) {
  return s == NodeStatus::Solved ? env::Terminal::Solved : env::Terminal::Contradictory;
}

}  // namespace

const char* to_string(SelectionRule r) {
  return r == SelectionRule::ExpDiscountPUCT ? "exp_discount_puct" : "classic_puct";
}

SelectionRule selection_rule_from_string(const std::string& s) {
  if (s == "exp_discount_puct") return SelectionRule::ExpDiscountPUCT;
  if (s == "classic_puct") return SelectionRule::ClassicPUCT;
  throw std::invalid_argument("unknown selection rule '" + s + "' (expected exp_discount_puct or classic_puct)");
}

void SearchHyperparams::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("search: " + what); };
  if (!(gamma > 0.0 && gamma <= 1.0)) bad("gamma must lie in (0, 1]");
  if (!(c_base > 0.0)) bad("c_base must be positive");
  if (c_init < 0.0) bad("c_init must be nonnegative");
  if (c_and < 0.0) bad("c_and must be nonnegative");
  if (delta < 0.0) bad("delta must be nonnegative");
  if (top_n < 1) bad("top_n must be >= 1");
  if (call_timeout.count() <= 0) bad("call_timeout must be positive");
  if (retry_timeout < call_timeout) bad("retry_timeout must be >= call_timeout");
  if (classic_c < 0.0) bad("classic_c must be nonnegative");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (!(exponent_clamp > 0.0)) bad("exponent_clamp must be positive");
}

double exploration_coefficient(std::uint64_t visit_total, std::uint64_t n_edge, double c_base, double c_init) {
  const double n = static_cast<double>(visit_total);
  return (std::log((n + c_base + 1.0) / c_base) + c_init) * std::sqrt(n) / (static_cast<double>(n_edge) + 1.0);
}

double exploration_coefficient(std::uint64_t visit_total, std::uint64_t n_edge, const SearchHyperparams& p) {
  return exploration_coefficient(visit_total, n_edge, p.c_base, p.c_init);
}

double value_score(double v, double gamma, double clamp) {
  const double exponent = std::clamp(-1.0 - v, -clamp, clamp);
  return std::pow(gamma, exponent);
}

double puct_or_score(double v_edge, double prior, double coeff, double gamma, double clamp) {
  return value_score(v_edge, gamma, clamp) + coeff * prior;
}

double puct_and_score(double v_child, double coeff, double c_and, std::size_t arity, double gamma, double clamp) {
  if (arity == 0) throw std::invalid_argument("AND arity must be positive");
  return value_score(v_child, gamma, clamp) + c_and * coeff / static_cast<double>(arity);
}

double classic_puct_score(double v_sum, std::uint64_t n_edge, std::uint64_t n_parent, double prior, double c) {
  const double q = v_sum / static_cast<double>(std::max<std::uint64_t>(n_edge, 1));
  return q + c * std::sqrt(static_cast<double>(n_parent)) / (1.0 + static_cast<double>(n_edge)) * prior;
}

namespace {

// V(s,a) of a visited edge's target.
double edge_target_value(const SearchGraph& g, const EdgeStats& e) {
  switch (e.child_kind) {
    case EdgeChild::Node: return g.value(e.child);
    case EdgeChild::Empty: return 1.0;
    case EdgeChild::Excluded:
    case EdgeChild::Unmaterialized: break;
  }
  return g.options().stuck_value;
}

}  // namespace

double or_backup_value(const SearchGraph& g, NodeRef or_ref) {
  const OrNode& n = g.or_node(or_ref);
  double num = n.v_net;
  double den = 1.0;
  for (const EdgeStats& e : n.edges) {
    if (e.visits == 0) continue;
    const double w = static_cast<double>(e.visits);
    num += w * (e.reward + edge_target_value(g, e));
    den += w;
  }
  return num / den;
}

double and_backup_value(const SearchGraph& g, NodeRef and_ref) {
  const AndNode& a = g.and_node(and_ref);
  double v = 1.0;
  bool any = false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (a.child_visits[i] == 0) continue;
    if (g.status(a.children[i]) == NodeStatus::Contradictory) continue;
    const double cv = g.value(a.children[i]);
    v = any ? std::min(v, cv) : cv;
    any = true;
  }
  return any ? v : 1.0;
}

ValueTargets compute_value_targets(const SearchGraph& g) {
  ValueTargets vt;
  vt.or_values.assign(g.or_count(), kNaN);
  vt.and_values.assign(g.and_count(), kNaN);
  for (const NodeRef r : g.topological_order()) {
    const NodeStatus s = g.status(r);
    if (!is_resolved(s)) continue;
    if (r.kind == NodeKind::Or) {
      const OrNode& n = g.or_node(r);
      if (n.terminal) {
        vt.or_values[r.index] = 1.0;
        continue;
      }
      double best = kNaN;
      for (const EdgeStats& e : n.edges) {
        double child = kNaN;
        if (e.child_kind == EdgeChild::Empty && s == NodeStatus::Contradictory) {
          child = 1.0;
        } else if (e.child_kind == EdgeChild::Node && g.status(e.child) == s) {
          child = vt.at(e.child);
        }
        if (std::isnan(child)) continue;
        const double cand = e.reward + child;
        if (std::isnan(best) || cand > best) best = cand;
      }
      vt.or_values[r.index] = best;
    } else {
      const AndNode& a = g.and_node(r);
      double agg = kNaN;
      for (const NodeRef c : a.children) {
        if (g.status(c) != s) continue;
        const double cv = vt.at(c);
        if (std::isnan(agg)) {
          agg = cv;
        } else {
          agg = s == NodeStatus::Contradictory ? std::min(agg, cv) : std::max(agg, cv);
        }
      }
      vt.and_values[r.index] = agg;
    }
  }
  return vt;
}

std::optional<std::size_t> best_resolving_edge(const SearchGraph& g, const ValueTargets& vt, NodeRef or_ref) {
  const OrNode& n = g.or_node(or_ref);
  if (n.terminal || !is_resolved(n.status)) return std::nullopt;
  std::optional<std::size_t> best;
  double best_v = 0.0;
  for (std::size_t i = 0; i < n.edges.size(); ++i) {
    const EdgeStats& e = n.edges[i];
    double child = kNaN;
    if (e.child_kind == EdgeChild::Empty && n.status == NodeStatus::Contradictory) {
      child = 1.0;
    } else if (e.child_kind == EdgeChild::Node && g.status(e.child) == n.status) {
      child = vt.at(e.child);
    }
    if (std::isnan(child)) continue;
    const double cand = e.reward + child;
    if (!best || cand > best_v) {
      best = i;
      best_v = cand;
    }
  }
  return best;
}

std::vector<TrainingExample> extract_examples(const SearchGraph& g, const std::vector<NodeRef>& nodes,
                                              const std::string& origin) {
  std::vector<TrainingExample> out;
  if (nodes.empty()) return out;
  const ValueTargets vt = compute_value_targets(g);
  for (const NodeRef r : nodes) {
    if (r.kind != NodeKind::Or) continue;
    const OrNode& n = g.or_node(r);
    if (n.terminal) continue;
    const auto a = best_resolving_edge(g, vt, r);
    if (!a) continue;
    TrainingExample ex;
    ex.methods = n.methods;
    ex.action = static_cast<std::uint32_t>(*a);
    ex.value_target = vt.at(r);
    ex.origin = origin.empty() ? n.key.hex() : origin + ":" + n.key.hex();
    out.push_back(std::move(ex));
  }
  return out;
}

std::unique_ptr<env::ProofTree> build_proof_tree(const SearchGraph& g, const ValueTargets& vt, NodeRef or_ref) {
  const OrNode& n = g.or_node(or_ref);
  if (!is_resolved(n.status)) throw GraphError("proof tree requested for an unresolved node");
  auto t = std::make_unique<env::ProofTree>();
  t->payload = n.payload;
  if (n.terminal) {
    t->terminal = terminal_of(n.status);
    return t;
  }
  const auto a = best_resolving_edge(g, vt, or_ref);
  if (!a) throw InvariantViolation("resolved node without a resolving edge");
  const EdgeStats& e = n.edges[*a];
  t->method = e.method.id;
  if (e.child_kind == EdgeChild::Empty) return t;
  if (e.child.kind == NodeKind::Or) {
    t->children.push_back(build_proof_tree(g, vt, e.child));
    return t;
  }
  const AndNode& split = g.and_node(e.child);
  if (n.status == NodeStatus::Contradictory) {
    for (const NodeRef c : split.children) t->children.push_back(build_proof_tree(g, vt, c));
    return t;
  }
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < split.children.size(); ++i) {
    if (g.status(split.children[i]) != NodeStatus::Solved) continue;
    if (!pick || vt.at(split.children[i]) > vt.at(split.children[*pick])) pick = i;
  }
  if (!pick) throw InvariantViolation("solved case split without a solved child");
  for (std::size_t i = 0; i < split.children.size(); ++i) {
    t->children.push_back(i == *pick ? build_proof_tree(g, vt, split.children[i]) : nullptr);
  }
  return t;
}

nlohmann::json SearchResult::to_json(bool include_wall_clock) const {
  nlohmann::json j{{"lemma", lemma},
                   {"status", pgs::to_string(root_status)},
                   {"expansions", expansions},
                   {"iterations", iterations},
                   {"env_calls", env_calls},
                   {"examples", examples_emitted},
                   {"shared_fraction", shared_fraction},
                   {"or_nodes", or_nodes},
                   {"and_nodes", and_nodes},
                   {"env_time_us", env_time.count()},
                   {"failed_validation", failed_validation}};
  if (proof) {
    j["proof_size"] = proof->size();
    j["proof"] = env::wire::to_json(*proof);
  }
  if (check) j["check"] = env::wire::to_json(*check);
  if (include_wall_clock) j["wall_clock_s"] = wall_clock.count();
  return j;
}

Search::Search(env::Environment& env, Evaluator& evaluator, SearchHyperparams params, RewardParams reward)
    : env_(env),
      evaluator_(evaluator),
      params_(params),
      reward_(reward),
      graph_(SearchGraph::Options{params.dedup, params.stuck_value}) {
  params_.validate();
  reward_.validate();
}

NodeRef Search::init_root(const std::string& lemma) {
  lemma_ = lemma;
  env::EnvState root = env_.get_initial_system(lemma);
  const NodeStatus ts = env::to_status(root.terminal);
  const InternResult r = graph_.intern_state(std::move(root.payload), std::move(root.methods), ts);
  graph_.set_root(r.ref);
  return r.ref;
}

std::optional<std::size_t> Search::select_or_edge(NodeRef or_ref) const {
  const OrNode& n = graph_.or_node(or_ref);
  std::optional<std::size_t> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n.edges.size(); ++i) {
    const EdgeStats& e = n.edges[i];
    if (e.child_kind == EdgeChild::Excluded || e.child_kind == EdgeChild::Empty) continue;
    if (e.child_kind == EdgeChild::Node && graph_.status(e.child) != NodeStatus::Open) continue;
    double score = 0.0;
    if (params_.selection_rule == SelectionRule::ClassicPUCT) {
      const double v_sum = e.visits == 0 ? 0.0 : static_cast<double>(e.visits) * (e.reward + edge_target_value(graph_, e));
      score = classic_puct_score(v_sum, e.visits, n.visit_total, e.prior, params_.classic_c);
    } else {
      const double v_edge = e.visits == 0 ? n.value - params_.delta : e.reward + edge_target_value(graph_, e);
      const double coeff = exploration_coefficient(n.visit_total, e.visits, params_);
      score = puct_or_score(v_edge, e.prior, coeff, params_.gamma, params_.exponent_clamp);
    }
    if (!best || score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

std::optional<std::size_t> Search::select_and_child(NodeRef and_ref) const {
  const AndNode& a = graph_.and_node(and_ref);
  std::uint64_t total = 0;
  for (auto v : a.child_visits) total += v;
  std::optional<std::size_t> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (graph_.status(a.children[i]) != NodeStatus::Open) continue;
    const double v = a.child_visits[i] == 0 ? 1.0 : graph_.value(a.children[i]);
    const double coeff = exploration_coefficient(total, a.child_visits[i], params_);
    const double score = puct_and_score(v, coeff, params_.c_and, a.children.size(), params_.gamma, params_.exponent_clamp);
    if (!best || score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

Search::Path Search::select_path() {
  Path path;
  NodeRef cur = graph_.root();
  std::size_t path_max = 0;
  while (true) {
    if (graph_.status(cur) != NodeStatus::Open) break;
    if (cur.kind == NodeKind::And) {
      const auto pick = select_and_child(cur);
      if (!pick) {
        graph_.refresh_status(cur);
        if (graph_.status(cur) == NodeStatus::Open) throw InvariantViolation("open AND node without open children");
        break;
      }
      path.steps.push_back({cur, *pick});
      cur = graph_.and_node(cur).children[*pick];
      continue;
    }
    OrNode& n = graph_.or_node(cur);
    if (!n.expanded) {
      path.needs_expansion = true;
      break;
    }
    path_max = std::max(path_max, n.methods.size());
    const auto pick = select_or_edge(cur);
    if (!pick) {
      graph_.refresh_status(cur);
      if (graph_.status(cur) == NodeStatus::Open) throw InvariantViolation("open OR node without selectable edges");
      break;
    }
    EdgeStats* e = &graph_.or_node(cur).edges[*pick];
    if (e->child_kind == EdgeChild::Unmaterialized) {
      materialize(cur, *pick, path_max);
      e = &graph_.or_node(cur).edges[*pick];
      if (e->child_kind == EdgeChild::Excluded) continue;  // re-select at the same node
      path.steps.push_back({cur, *pick});
      if (e->child_kind == EdgeChild::Empty) break;
      cur = e->child;
      continue;
    }
    path.steps.push_back({cur, *pick});
    cur = e->child;
  }
  path.leaf = cur;
  return path;
}

void Search::expand(NodeRef or_ref, std::size_t path_max_branching) {
  ++expansions_;
  OrNode& n = graph_.or_node(or_ref);
  if (n.expanded || n.terminal) throw GraphError("expand() on an expanded or terminal node");
  trace_.push_back(n.key.hex());
  const EvaluatorOutput out = evaluator_.evaluate(n.methods);
  if (out.log_priors.size() != n.methods.size()) throw std::runtime_error("evaluator returned the wrong prior count");
  if (!std::isfinite(out.value)) throw std::runtime_error("evaluator returned a non-finite value");
  std::vector<std::uint32_t> ranks;
  ranks.reserve(n.methods.size());
  for (const ProofMethod& m : n.methods) ranks.push_back(m.rank);
  const std::vector<double> priors =
      n.methods.empty() ? std::vector<double>{}
                        : blend_with_heuristic(out.log_priors, ranks, params_.lambda, params_.temperature);
  n.v_net = out.value;
  n.value = out.value;
  n.expanded = true;
  n.edges.clear();
  for (std::size_t i = 0; i < n.methods.size(); ++i) {
    EdgeStats e;
    e.method = n.methods[i];
    e.prior = priors[i];
    n.edges.push_back(std::move(e));
  }
  std::vector<std::size_t> order(n.methods.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return priors[a] > priors[b]; });
  const std::size_t branching = std::max(path_max_branching, n.methods.size());
  const std::size_t eager = std::min<std::size_t>(params_.top_n, order.size());
  for (std::size_t k = 0; k < eager; ++k) {
    materialize(or_ref, order[k], branching);
    if (graph_.status(or_ref) != NodeStatus::Open) break;
  }
  graph_.refresh_status(or_ref);
}

void Search::materialize(NodeRef or_ref, std::size_t edge, std::size_t path_max_branching) {
  const std::string payload = graph_.or_node(or_ref).payload;
  const std::string method = graph_.or_node(or_ref).edges.at(edge).method.id;
  ++env_calls_;
  env::ExecResult res = env_.execute_method(payload, method, params_.call_timeout);
  env_time_ += res.elapsed;
  bool hard = false;
  if (res.timed_out) {
    ++env_calls_;
    res = env_.execute_method(payload, method, params_.retry_timeout);
    env_time_ += res.elapsed;
    hard = true;
    if (res.timed_out) {
      spdlog::debug("method {} excluded after retry", method);
      graph_.mark_excluded(or_ref, edge);
      graph_.refresh_status(or_ref);
      return;
    }
  }
  attach_children(or_ref, edge, res, path_max_branching, hard);
  graph_.refresh_status(or_ref);
}

void Search::attach_children(NodeRef or_ref, std::size_t edge, const env::ExecResult& res,
                             std::size_t path_max_branching, bool hard) {
  auto set_reward = [&](double r) {
    EdgeStats& e = graph_.or_node(or_ref).edges[edge];
    e.reward = r;
    e.hard_timeout = hard;
  };
  if (res.children.empty()) {
    graph_.mark_empty(or_ref, edge);
    set_reward(edge_reward(EdgeKind::Terminal, 0, 0, hard, reward_));
    return;
  }
  std::vector<NodeRef> kids;
  kids.reserve(res.children.size());
  for (const env::EnvState& c : res.children) {
    kids.push_back(graph_.intern_state(c.payload, c.methods, env::to_status(c.terminal)).ref);
  }
  try {
    if (kids.size() == 1) {
      graph_.link_child(or_ref, edge, kids[0]);
      const OrNode& child = graph_.or_node(kids[0]);
      if (child.terminal) {
        set_reward(edge_reward(EdgeKind::Terminal, 0, 0, hard, reward_));
      } else {
        const double b = branching_penalty(child.methods.size(), std::max<std::size_t>(path_max_branching, 1));
        const double t = soft_time_penalty(res.elapsed, reward_.t_clip);
        set_reward(edge_reward(EdgeKind::Normal, b, t, hard, reward_));
      }
    } else {
      graph_.link_split(or_ref, edge, kids);
      set_reward(edge_reward(EdgeKind::ToAnd, 0, 0, hard, reward_));
    }
  } catch (const CycleError&) {
    spdlog::debug("edge {} excluded: it would close a cycle", graph_.or_node(or_ref).edges[edge].method.id);
    graph_.mark_excluded(or_ref, edge);
    return;
  }
  if (graph_.or_node(or_ref).edges[edge].child.kind == NodeKind::And) {
    graph_.refresh_status(graph_.or_node(or_ref).edges[edge].child);
  }
}

void Search::recompute_values(NodeRef from) {
  for (const NodeRef r : graph_.ancestors_bottom_up(from)) {
    const NodeStatus s = graph_.status(r);
    if (s == NodeStatus::Stuck) continue;
    if (r.kind == NodeKind::Or) {
      OrNode& n = graph_.or_node(r);
      if (n.terminal || !n.expanded) continue;
      n.value = or_backup_value(graph_, r);
    } else {
      graph_.and_node(r).value = and_backup_value(graph_, r);
    }
  }
}

void Search::backup(const Path& path) {
  for (const Step& s : path.steps) {
    if (s.node.kind == NodeKind::Or) {
      OrNode& n = graph_.or_node(s.node);
      ++n.edges[s.slot].visits;
      ++n.visit_total;
    } else {
      ++graph_.and_node(s.node).child_visits[s.slot];
    }
  }
  recompute_values(path.leaf);
}

void Search::extract() {
  const std::vector<NodeRef> fresh = graph_.take_newly_resolved();
  if (fresh.empty()) return;
  for (TrainingExample& ex : extract_examples(graph_, fresh, lemma_)) {
    ++examples_emitted_;
    if (sink_) sink_(ex);
    if (collect_) examples_.push_back(std::move(ex));
  }
}

SearchResult Search::run(const std::string& lemma, std::uint64_t budget) {
  if (budget < 1) throw std::invalid_argument("search budget must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const NodeRef root = init_root(lemma);
  SearchResult result;
  result.lemma = lemma;
  while (graph_.status(root) == NodeStatus::Open && expansions_ < budget) {
    ++result.iterations;
    Path path = select_path();
    if (path.needs_expansion) {
      std::size_t path_max = 0;
      for (const Step& s : path.steps) {
        if (s.node.kind == NodeKind::Or) path_max = std::max(path_max, graph_.or_node(s.node).methods.size());
      }
      expand(path.leaf, path_max);
    }
    backup(path);
    extract();
  }
  extract();
  result.root_status = graph_.status(root);
  if (is_resolved(result.root_status)) {
    const ValueTargets vt = compute_value_targets(graph_);
    result.proof = build_proof_tree(graph_, vt, root);
    result.check = env_.check_proof(*result.proof);
    if (!result.check->valid) {
      result.failed_validation = true;
      spdlog::error("proof for {} failed validation: {}", lemma, result.check->reason);
    }
  }
  result.expansions = expansions_;
  result.env_calls = env_calls_;
  result.env_time = env_time_;
  result.examples_emitted = examples_emitted_;
  result.examples = std::move(examples_);
  result.shared_fraction = graph_.shared_fraction();
  result.or_nodes = graph_.or_count();
  result.and_nodes = graph_.and_count();
  result.expansion_trace = std::move(trace_);
  result.wall_clock = std::chrono::steady_clock::now() - start;
  return result;
}

SearchResult run_search(env::Environment& env, Evaluator& evaluator, const std::string& lemma, std::uint64_t budget,
                        const SearchHyperparams& params, const RewardParams& reward, ExampleSink sink) {
  Search s(env, evaluator, params, reward);
  if (sink) s.set_example_sink(std::move(sink));
  return s.run(lemma, budget);
}

}  // namespace pgs
