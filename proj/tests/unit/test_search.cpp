#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "pgs/env/toy.hpp"
#include "pgs/search.hpp"

using namespace pgs;
using namespace pgs::test;

namespace {

// Counts execute_method calls on the way to a toy prover.
class CountingEnv final : public env::Environment {
 public:
  explicit CountingEnv(env::Environment& inner) : inner_(inner) {}
  env::EnvState get_initial_system(std::string_view lemma) override { return inner_.get_initial_system(lemma); }
  env::ExecResult execute_method(std::string_view p, std::string_view m, Micros t) override {
    ++calls;
    return inner_.execute_method(p, m, t);
  }
  env::CheckResult check_proof(const env::ProofTree& t) override { return inner_.check_proof(t); }
  std::size_t calls = 0;

 private:
  env::Environment& inner_;
};

env::ToyInstance generated(std::uint64_t seed, std::uint32_t depth, double dup = 0.1,
                           env::Polarity pol = env::Polarity::Universal) {
  env::ToyInstance inst;
  inst.lemma = "G" + std::to_string(seed);
  inst.seed = seed;
  inst.depth = depth;
  inst.duplicate_prob = dup;
  inst.polarity = pol;
  return inst;
}

// Best R + v over every resolving path, by plain recursion without memoization.
double brute_force_target(const SearchGraph& g, NodeRef r) {
  const NodeStatus s = g.status(r);
  if (r.kind == NodeKind::And) {
    const AndNode& a = g.and_node(r);
    double agg = std::nan("");
    for (const NodeRef c : a.children) {
      if (g.status(c) != s) continue;
      const double v = brute_force_target(g, c);
      if (std::isnan(agg)) agg = v;
      agg = s == NodeStatus::Contradictory ? std::min(agg, v) : std::max(agg, v);
    }
    return agg;
  }
  const OrNode& n = g.or_node(r);
  if (n.terminal) return 1.0;
  double best = -INFINITY;
  for (const EdgeStats& e : n.edges) {
    if (e.child_kind == EdgeChild::Empty && s == NodeStatus::Contradictory) best = std::max(best, e.reward + 1.0);
    if (e.child_kind == EdgeChild::Node && g.status(e.child) == s) {
      best = std::max(best, e.reward + brute_force_target(g, e.child));
    }
  }
  return best;
}

SearchHyperparams quiet_params() {
  SearchHyperparams p;
  return p;
}

RewardParams zero_penalties() {
  RewardParams r;
  r.alpha = 0;
  r.beta = 0;
  r.tau = 0;
  return r;
}

}  // namespace

TEST_CASE("exploration coefficient") {
  CHECK(exploration_coefficient(0, 0, 19652, 1.25) == 0.0);
  CHECK(exploration_coefficient(0, 7, 19652, 1.25) == 0.0);
  CHECK(exploration_coefficient(1, 0, 1, 1) == doctest::Approx(std::log(3.0) + 1.0));
  CHECK(exploration_coefficient(1, 0, 1, 1) == doctest::Approx(2.0986).epsilon(1e-4));
  CHECK(exploration_coefficient(4, 1, 19652, 1.25) == doctest::Approx(1.25025).epsilon(1e-5));
}

TEST_CASE("OR score") {
  for (double g : {0.1, 0.5, 0.9, 1.0}) CHECK(puct_or_score(-1.0, 0.0, 0.0, g) == doctest::Approx(1.0));
  CHECK(puct_or_score(0.0, 0.0, 0.0, 0.5) == doctest::Approx(2.0));
  CHECK(puct_or_score(0.0, 0.3, 0.0, 0.5) == doctest::Approx(2.0));
  // gamma = 1: only the exploration term separates actions.
  for (double v : {-10.0, -1.0, 0.0, 3.0}) CHECK(puct_or_score(v, 0.25, 2.0, 1.0) == doctest::Approx(1.5));
  // The exponent is clamped rather than overflowing.
  CHECK(std::isfinite(puct_or_score(-5000.0, 0.1, 1.0, 0.9)));
}

TEST_CASE("AND score") {
  CHECK(puct_and_score(-1.0, 3.0, 0.0, 4, 0.9) == doctest::Approx(1.0));
  CHECK(puct_and_score(-2.0, 1.0, 2.0, 4, 0.9) == doctest::Approx(1.4));
  // Exploration over an AND node uses the uniform prior 1/|A|.
  CHECK(puct_and_score(-0.5, 0.8, 1.0, 3, 0.9) == doctest::Approx(puct_or_score(-0.5, 1.0 / 3.0, 0.8, 0.9)));
}

TEST_CASE("classic PUCT score") {
  CHECK(classic_puct_score(0.0, 0, 0, 0.7, 1.25) == 0.0);
  CHECK(classic_puct_score(-2.0, 2, 4, 0.0, 1.25) == doctest::Approx(-1.0));
  CHECK(classic_puct_score(0.0, 2, 9, 0.5, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("select_path follows the only edge") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("a", {1})}), open_state({method("b", {2})}), terminal_state(env::Terminal::Contradictory)};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  Search s(env, ev, quiet_params(), RewardParams{});
  const NodeRef root = s.init_root("X");
  Search::Path p = s.select_path();
  CHECK(p.needs_expansion);
  CHECK(p.leaf == root);
  s.expand(root, 0);
  p = s.select_path();
  REQUIRE(p.steps.size() == 1);
  CHECK(p.steps[0].node == root);
  CHECK(p.steps[0].slot == 0);
  CHECK(p.needs_expansion);
  CHECK(s.graph().or_node(p.leaf).payload == env.calculus("X").payload_of(1));
}

TEST_CASE("select_path prefers an unvisited edge over a poor visited one") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("a", {1}), method("b", {2})}), open_state({method("c", {3})}),
               open_state({method("d", {3})}), terminal_state(env::Terminal::Contradictory)};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  SearchHyperparams params = quiet_params();
  Search s(env, ev, params, RewardParams{});
  const NodeRef root = s.init_root("X");
  s.expand(root, 0);
  SearchGraph& g = s.graph();
  OrNode& n = g.or_node(root);
  REQUIRE(n.edges.size() == 2);
  REQUIRE(n.edges[0].prior == doctest::Approx(n.edges[1].prior));
  n.edges[0].visits = 1;
  n.edges[0].reward = -1.0;
  g.or_node(n.edges[0].child).value = -4.0;  // V(s,a) = R + V = -5
  n.visit_total = 1;

  // Direct comparison of the two scores at gamma 0.9.
  const double visited = puct_or_score(-5.0, 0.5, exploration_coefficient(1, 1, params), 0.9);
  const double fresh = puct_or_score(n.value - params.delta, 0.5, exploration_coefficient(1, 0, params), 0.9);
  CHECK(fresh > visited);

  const Search::Path p = s.select_path();
  REQUIRE_FALSE(p.steps.empty());
  CHECK(p.steps[0].slot == 1);
}

TEST_CASE("select_path skips contradictory AND children") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("split", {1, 2})}), terminal_state(env::Terminal::Contradictory),
               open_state({method("c", {1})})};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  Search s(env, ev, quiet_params(), RewardParams{});
  const NodeRef root = s.init_root("X");
  s.expand(root, 0);
  const EdgeStats& e = s.graph().or_node(root).edges[0];
  REQUIRE(e.child.kind == NodeKind::And);
  CHECK(s.graph().status(e.child) == NodeStatus::Open);
  const Search::Path p = s.select_path();
  REQUIRE(p.steps.size() == 2);
  CHECK(p.steps[1].node == e.child);
  CHECK(p.steps[1].slot == 1);
}

TEST_CASE("select_path breaks ties between unvisited AND children by index") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("split", {1, 2, 3})}), open_state({method("a", {4})}),
               open_state({method("b", {4})}), open_state({method("c", {4})}),
               terminal_state(env::Terminal::Contradictory)};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  Search s(env, ev, quiet_params(), RewardParams{});
  const NodeRef root = s.init_root("X");
  s.expand(root, 0);
  const Search::Path p = s.select_path();
  REQUIRE(p.steps.size() == 2);
  CHECK(p.steps[1].slot == 0);
}

TEST_CASE("expansion of a method with zero children") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("close", {})})};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev(-3.0);
  Search s(env, ev, quiet_params(), RewardParams{});
  const NodeRef root = s.init_root("X");
  s.expand(root, 0);
  const SearchGraph& g = s.graph();
  CHECK(g.or_node(root).edges[0].child_kind == EdgeChild::Empty);
  CHECK(g.status(root) == NodeStatus::Contradictory);
  // The empty child is worth 1: (v_net + N (R + 1)) / (1 + N) with v_net = -3.
  s.graph().or_node(root).edges[0].visits = 1;
  CHECK(or_backup_value(g, root) == doctest::Approx((-3.0 + (-1.0 + 1.0)) / 2.0));
}

TEST_CASE("expansion of a method with three children creates an AND node") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("split", {1, 2, 3})}), open_state({method("a", {})}),
               open_state({method("b", {})}), open_state({method("c", {})})};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  Search s(env, ev, quiet_params(), RewardParams{});
  const NodeRef root = s.init_root("X");
  s.expand(root, 0);
  const EdgeStats& e = s.graph().or_node(root).edges[0];
  REQUIRE(e.child_kind == EdgeChild::Node);
  REQUIRE(e.child.kind == NodeKind::And);
  CHECK(s.graph().and_node(e.child).children.size() == 3);
  CHECK(e.reward == -1.0);
  CHECK(s.graph().value(e.child) == 1.0);
}

TEST_CASE("expansion materializes exactly top_n edges") {
  env::ExplicitGraph eg;
  std::vector<env::ExplicitGraph::Method> ms;
  for (int i = 0; i < 5; ++i) ms.push_back(method("m" + std::to_string(i), {1}));
  eg.states = {open_state(ms), open_state({method("x", {})})};
  env::ToyEnvironment toy({explicit_instance("X", eg)});
  CountingEnv env(toy);
  UniformEvaluator ev;
  SearchHyperparams params = quiet_params();
  params.top_n = 2;
  params.dedup = false;
  Search s(env, ev, params, RewardParams{});
  const NodeRef root = s.init_root("X");
  s.expand(root, 0);
  CHECK(env.calls == 2);
  std::size_t materialized = 0;
  for (const EdgeStats& e : s.graph().or_node(root).edges) materialized += e.child_kind != EdgeChild::Unmaterialized;
  CHECK(materialized == 2);
}

TEST_CASE("OR backup formula") {
  SearchGraph g;
  const NodeRef r = expanded_state(g, "r", 2);
  const NodeRef a = expanded_state(g, "a", 1);
  const NodeRef b = expanded_state(g, "b", 1);
  g.link_child(r, 0, a);
  g.link_child(r, 1, b);
  g.or_node(a).value = -1.0;
  g.or_node(b).value = 0.0;
  OrNode& n = g.or_node(r);
  n.v_net = -2.0;
  n.edges[0].visits = 2;
  n.edges[0].reward = -1.0;
  n.edges[1].visits = 1;
  n.edges[1].reward = -1.0;
  CHECK(or_backup_value(g, r) == doctest::Approx(-1.75));
}

TEST_CASE("AND backup takes the minimum over visited children") {
  SearchGraph g;
  const NodeRef r = expanded_state(g, "r", 1);
  const NodeRef a = expanded_state(g, "a", 1);
  const NodeRef b = expanded_state(g, "b", 1);
  const NodeRef c = expanded_state(g, "c", 1);
  const NodeRef split = g.link_split(r, 0, {a, b, c});
  SUBCASE("all unvisited") { CHECK(and_backup_value(g, split) == 1.0); }
  SUBCASE("two visited, one unvisited") {
    g.or_node(a).value = -3.0;
    g.or_node(b).value = -1.0;
    g.or_node(c).value = -9.0;
    g.and_node(split).child_visits = {1, 2, 0};
    CHECK(and_backup_value(g, split) == -3.0);
  }
}

TEST_CASE("value target of a node one step from a terminal") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("a", {1})}), terminal_state(env::Terminal::Contradictory)};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  const SearchResult r = run_search(env, ev, "X", 10, quiet_params(), RewardParams{});
  CHECK(r.root_status == NodeStatus::Contradictory);
  REQUIRE(r.examples.size() == 1);
  CHECK(r.examples[0].value_target == 0.0);
  CHECK(r.examples[0].action == 0);
}

TEST_CASE("value target along a chain of three OR nodes") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("a", {1}, 0)}), open_state({method("b", {2}, 0)}),
               open_state({method("c", {3}, 0)}), terminal_state(env::Terminal::Contradictory)};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  Search s(env, ev, quiet_params(), zero_penalties());
  const SearchResult r = s.run("X", 10);
  CHECK(r.root_status == NodeStatus::Contradictory);
  const ValueTargets vt = compute_value_targets(s.graph());
  CHECK(vt.at(s.graph().root()) == -2.0);
  REQUIRE(r.examples.size() == 3);
}

TEST_CASE("value targets agree with exhaustive path enumeration") {
  SUBCASE("hand-built diamond") {
    env::ExplicitGraph eg;
    // 0 -> {1, 2}; 1 -> 3; 2 -> 3 or 4; 3 -> terminal; 4 -> 3 (longer way round)
    eg.states = {open_state({method("a", {1}), method("b", {2})}), open_state({method("c", {3})}),
                 open_state({method("d", {4}), method("e", {3})}), open_state({method("f", {5})}),
                 open_state({method("g", {3})}), terminal_state(env::Terminal::Contradictory)};
    env::ToyEnvironment env({explicit_instance("X", eg)});
    UniformEvaluator ev;
    SearchHyperparams params = quiet_params();
    params.top_n = 8;
    Search s(env, ev, params, RewardParams{});
    s.run("X", 50);
    const SearchGraph& g = s.graph();
    CHECK(g.shared_hits() > 0);
    const ValueTargets vt = compute_value_targets(g);
    std::size_t checked = 0;
    for (const NodeRef r : g.topological_order()) {
      if (!is_resolved(g.status(r))) continue;
      CHECK(vt.at(r) == brute_force_target(g, r));
      ++checked;
    }
    CHECK(checked >= 5);
  }
  SUBCASE("generated duplicate-heavy instances") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const env::ToyInstance inst =
          generated(seed, 5, 0.4, seed % 2 ? env::Polarity::Universal : env::Polarity::Existential);
      env::ToyEnvironment env({inst});
      UniformEvaluator ev;
      Search s(env, ev, quiet_params(), RewardParams{});
      s.run(inst.lemma, 400);
      const SearchGraph& g = s.graph();
      const ValueTargets vt = compute_value_targets(g);
      for (const NodeRef r : g.topological_order()) {
        if (!is_resolved(g.status(r))) continue;
        CHECK(vt.at(r) == brute_force_target(g, r));
      }
    }
  }
}

TEST_CASE("search agrees with the oracle and its proof validates") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const env::ToyInstance inst =
        generated(seed, 4, 0.1, seed % 2 ? env::Polarity::Universal : env::Polarity::Existential);
    env::ToyEnvironment env({inst});
    const env::OracleResult o = env::oracle_resolve(inst);
    UniformEvaluator ev;
    const SearchResult r = run_search(env, ev, inst.lemma, 2 * std::max<std::size_t>(o.reachable_nonterminal, 1),
                                      quiet_params(), RewardParams{});
    CHECK(r.root_status == o.root_status(env.calculus(inst.lemma)));
    if (is_resolved(r.root_status)) {
      REQUIRE(r.check.has_value());
      CHECK(r.check->valid);
      CHECK_FALSE(r.failed_validation);
    }
  }
}

TEST_CASE("budget 1 on a three-level instance leaves the root open") {
  env::ExplicitGraph eg;
  eg.states = {open_state({method("a", {1}), method("b", {1, 2})}), open_state({method("c", {3})}),
               open_state({method("d", {3})}), open_state({method("e", {4})}),
               terminal_state(env::Terminal::Contradictory)};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  const SearchResult r = run_search(env, ev, "X", 1, quiet_params(), RewardParams{});
  CHECK(r.root_status == NodeStatus::Open);
  CHECK(r.proof == nullptr);
  CHECK(r.expansions == 1);
}

TEST_CASE("search is deterministic") {
  const env::ToyInstance inst = generated(42, 7, 0.3);
  env::ToyEnvironment env({inst});
  UniformEvaluator ev;
  SearchHyperparams params = quiet_params();
  params.lambda = 0.5;
  const SearchResult a = run_search(env, ev, inst.lemma, 300, params, RewardParams{});
  const SearchResult b = run_search(env, ev, inst.lemma, 300, params, RewardParams{});
  CHECK(a.expansion_trace == b.expansion_trace);
  CHECK(a.to_json(false) == b.to_json(false));
  CHECK(a.examples == b.examples);
}

TEST_CASE("duplicate injection yields shared nodes on nearly every seed") {
  std::size_t with_sharing = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    // No direct closes, so the search has to reach the leaves.
    env::ToyInstance inst = generated(1000 + seed, 6, 0.3);
    inst.close_prob = 0.0;
    env::ToyEnvironment env({inst});
    UniformEvaluator ev;
    const SearchResult r = run_search(env, ev, inst.lemma, 200, quiet_params(), RewardParams{});
    with_sharing += r.shared_fraction > 0.0;
  }
  CHECK(with_sharing >= 48);
}

TEST_CASE("a stuck root ends the search") {
  env::ExplicitGraph eg;
  eg.states = {open_state({diverging("a"), diverging("b")})};
  env::ToyEnvironment env({explicit_instance("X", eg)});
  UniformEvaluator ev;
  const SearchResult r = run_search(env, ev, "X", 100, quiet_params(), RewardParams{});
  CHECK(r.root_status == NodeStatus::Stuck);
  CHECK(r.expansions == 1);
}
