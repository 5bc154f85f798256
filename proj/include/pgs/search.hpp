#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/env/environment.hpp"
#include "pgs/evaluator.hpp"
#include "pgs/proof_graph.hpp"
#include "pgs/reward.hpp"
#include "pgs/training_example.hpp"

namespace pgs {

enum class SelectionRule { ExpDiscountPUCT, ClassicPUCT };

const char* to_string(SelectionRule r);
SelectionRule selection_rule_from_string(const std::string& s);

struct SearchHyperparams {
  double gamma = 0.9;
  double c_base = 19652.0;
  double c_init = 1.25;
  double c_and = 1.0;
  double delta = 0.1;
  std::uint32_t top_n = 2;
  Micros call_timeout{1'000'000};
  Micros retry_timeout{5'000'000};
  SelectionRule selection_rule = SelectionRule::ExpDiscountPUCT;
  double classic_c = 1.25;   // exploration constant of the classic rule
  double lambda = 0.0;       // rank-bias weight
  double temperature = 1.0;  // blending temperature
  double exponent_clamp = 60.0;
  double stuck_value = -50.0;
  bool dedup = true;

  void validate() const;
};

/// [ln((N + c_base + 1)/c_base) + c_init] * sqrt(N) / (n_edge + 1), N = visit_total.
double exploration_coefficient(std::uint64_t visit_total, std::uint64_t n_edge, double c_base, double c_init);
double exploration_coefficient(std::uint64_t visit_total, std::uint64_t n_edge, const SearchHyperparams& p);

/// gamma^(-1 - V) with the exponent clamped to [-clamp, clamp].
double value_score(double v, double gamma, double clamp = 60.0);
double puct_or_score(double v_edge, double prior, double coeff, double gamma, double clamp = 60.0);
double puct_and_score(double v_child, double coeff, double c_and, std::size_t arity, double gamma,
                      double clamp = 60.0);
double classic_puct_score(double v_sum, std::uint64_t n_edge, std::uint64_t n_parent, double prior, double c);

/// V(s) recomputed from the node's edges and v_net:
/// (v_net + sum N*(R + V_child)) / (1 + sum N).
double or_backup_value(const SearchGraph& g, NodeRef or_ref);
/// Minimum over visited non-contradictory children; 1 when there are none.
double and_backup_value(const SearchGraph& g, NodeRef and_ref);

/// Network-free value targets for every resolved node, indexed like the
/// graph's node arrays (NaN for unresolved nodes). Terminal children count
/// 1, an OR node takes the best R + v_t over edges resolved with its own
/// status, a contradictory AND the minimum over its children and a solved AND
/// the best solved child.
struct ValueTargets {
  std::vector<double> or_values;
  std::vector<double> and_values;
  double at(NodeRef r) const { return r.kind == NodeKind::Or ? or_values.at(r.index) : and_values.at(r.index); }
};
ValueTargets compute_value_targets(const SearchGraph& g);

/// Index of the edge that resolves `or_ref` with the best target; ties go to
/// the lowest index. nullopt for unresolved or terminal nodes.
std::optional<std::size_t> best_resolving_edge(const SearchGraph& g, const ValueTargets& vt, NodeRef or_ref);

/// One example per resolved, non-terminal OR node in `nodes`.
std::vector<TrainingExample> extract_examples(const SearchGraph& g, const std::vector<NodeRef>& nodes,
                                              const std::string& origin = {});

/// Proof tree of a resolved OR node following best resolving edges. At a
/// solved case split only the best solved child is kept; the other slots stay
/// empty.
std::unique_ptr<env::ProofTree> build_proof_tree(const SearchGraph& g, const ValueTargets& vt, NodeRef or_ref);

struct SearchResult {
  std::string lemma;
  NodeStatus root_status = NodeStatus::Open;
  std::unique_ptr<env::ProofTree> proof;
  std::optional<env::CheckResult> check;
  bool failed_validation = false;
  std::uint64_t expansions = 0;
  std::uint64_t iterations = 0;
  std::uint64_t env_calls = 0;
  std::uint64_t examples_emitted = 0;
  std::vector<TrainingExample> examples;
  double shared_fraction = 0.0;
  std::size_t or_nodes = 0;
  std::size_t and_nodes = 0;
  Micros env_time{0};  // sum of environment-reported call durations
  std::chrono::duration<double> wall_clock{0};
  std::vector<std::string> expansion_trace;  // state keys in expansion order

  std::size_t proof_size() const { return proof ? proof->size() : 0; }
  /// `include_wall_clock` toggles the only nondeterministic field.
  nlohmann::json to_json(bool include_wall_clock = true) const;
};

using ExampleSink = std::function<void(const TrainingExample&)>;

/// One Monte Carlo graph search over a lemma. Owns its graph.
class Search {
 public:
  Search(env::Environment& env, Evaluator& evaluator, SearchHyperparams params, RewardParams reward);

  /// Examples are passed to `sink` as soon as their state resolves.
  void set_example_sink(ExampleSink sink) { sink_ = std::move(sink); }
  void set_collect_examples(bool on) { collect_ = on; }

  SearchResult run(const std::string& lemma, std::uint64_t budget);

  const SearchGraph& graph() const { return graph_; }
  SearchGraph& graph() { return graph_; }

  // Phases, exposed for tests.
  struct Step {
    NodeRef node;
    std::size_t slot = 0;  // edge index at OR nodes, child index at AND nodes
  };
  struct Path {
    std::vector<Step> steps;
    NodeRef leaf;
    bool needs_expansion = false;
  };
  NodeRef init_root(const std::string& lemma);
  /// Descends from the root; materializes unmaterialized edges on the way.
  Path select_path();
  /// Evaluates the node, creates its edges and materializes the top_n edges.
  void expand(NodeRef or_ref, std::size_t path_max_branching);
  void backup(const Path& path);
  /// Drains newly resolved nodes into examples.
  void extract();

  std::uint64_t expansions() const { return expansions_; }

 private:
  void materialize(NodeRef or_ref, std::size_t edge, std::size_t path_max_branching);
  void attach_children(NodeRef or_ref, std::size_t edge, const env::ExecResult& res, std::size_t path_max_branching,
                       bool hard);
  std::optional<std::size_t> select_or_edge(NodeRef or_ref) const;
  std::optional<std::size_t> select_and_child(NodeRef and_ref) const;
  void recompute_values(NodeRef from);

  env::Environment& env_;
  Evaluator& evaluator_;
  SearchHyperparams params_;
  RewardParams reward_;
  SearchGraph graph_;
  ExampleSink sink_;
  bool collect_ = true;
  std::string lemma_;
  std::uint64_t expansions_ = 0;
  std::uint64_t env_calls_ = 0;
  Micros env_time_{0};
  std::vector<TrainingExample> examples_;
  std::uint64_t examples_emitted_ = 0;
  std::vector<std::string> trace_;
};

SearchResult run_search(env::Environment& env, Evaluator& evaluator, const std::string& lemma, std::uint64_t budget,
                        const SearchHyperparams& params, const RewardParams& reward, ExampleSink sink = {});

}  // namespace pgs
