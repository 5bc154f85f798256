#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/config.hpp"
#include "pgs/env/environment.hpp"
#include "pgs/env/toy.hpp"
#include "pgs/orchestrator.hpp"
#include "pgs/search.hpp"

namespace pgs::cli {

/// Error with a process exit code, reported as a JSON error object.
class CommandError : public std::runtime_error {
 public:
  CommandError(std::string code, const std::string& what, int exit_code = 1)
      : std::runtime_error(what), code_(std::move(code)), exit_code_(exit_code) {}
  const std::string& code() const { return code_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string code_;
  int exit_code_;
};

struct GenOptions {
  std::uint64_t seed = 7;
  env::SuiteParams suite;
  std::size_t tokenizer_merges = 256;
  std::string out_dir = ".";
};

struct GenOutput {
  std::string suite_path;
  std::string corpus_path;
  std::string tokenizer_path;
  std::size_t instances = 0;
  std::size_t corpus_lines = 0;
  std::string tokenizer_hash;

  nlohmann::json to_json() const;
};

/// Writes suite.json, corpus.txt and tokenizer.json into out_dir.
GenOutput cmd_gen(const GenOptions& options);

/// The prover named by the config: a remote one when a URL is set, otherwise
/// the in-process toy prover over env.suite. `url_override` (the --env-url
/// flag) wins over PGS_ENV_URL, which wins over env.url.
std::unique_ptr<env::Environment> make_environment(const Config& config, const std::string& url_override = {});
/// The URL make_environment would connect to, empty for the in-process prover.
std::string effective_env_url(const Config& config, const std::string& url_override = {});
/// Lemma ids of the run: run.lemmas when given, else every lemma of env.suite.
std::vector<std::string> resolve_lemmas(const Config& config);

/// Prior source of a search. `heuristic` uses equal logits and a positive
/// lambda; `checkpoint` loads a trained network. A "/tree" suffix turns
/// state deduplication off.
struct ModeSpec {
  enum class Prior { Uniform, Heuristic, Checkpoint };
  std::string name;
  Prior prior = Prior::Uniform;
  std::string checkpoint;  // empty: paths.checkpoint
  bool tree = false;
};

/// Parses "uniform", "heuristic", "checkpoint" or "checkpoint=PATH", each
/// optionally followed by "/tree".
ModeSpec parse_mode(const std::string& text);

/// Lambda used by the heuristic-only mode when the config leaves it at 0.
inline constexpr double kDefaultHeuristicLambda = 1.0;

/// Evaluator and search parameters for one mode. Throws CommandError when
/// the checkpoint cannot be loaded.
struct PreparedMode {
  ModeSpec spec;
  std::unique_ptr<Evaluator> evaluator;
  SearchHyperparams search;
};
PreparedMode prepare_mode(const ModeSpec& spec, const Config& config);

SearchResult cmd_search(const Config& config, env::Environment& env, const std::string& lemma, const ModeSpec& mode,
                        std::uint64_t budget);

struct EvalRun {
  std::string lemma;
  NodeStatus status = NodeStatus::Open;
  bool valid = false;  // resolved and the proof checked
  std::uint64_t expansions = 0;
  std::size_t proof_size = 0;
  double shared_fraction = 0.0;
};

struct ModeSummary {
  std::size_t solved = 0;
  double median_expansions = 0.0;  // over solved lemmas
  double median_proof_size = 0.0;  // over solved lemmas
  double mean_shared_fraction = 0.0;
  double median_shared_fraction = 0.0;
  // Over lemmas every mode solved.
  double common_median_expansions = 0.0;
  double common_median_proof_size = 0.0;
  std::optional<bool> sound;  // solved set within the oracle's, when known
};

struct EvalReport {
  std::vector<std::string> lemmas;
  std::uint64_t budget = 0;
  std::vector<ModeSpec> modes;
  std::vector<std::vector<EvalRun>> runs;  // [mode][lemma]
  std::vector<ModeSummary> summaries;
  std::size_t common_solved = 0;
  // Oracle column, present with the in-process prover.
  std::optional<std::vector<NodeStatus>> oracle_status;
  std::optional<std::vector<std::size_t>> oracle_cost;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

double median(std::vector<double> xs);

/// Searches every lemma once per mode at the same budget. `oracle`, when
/// given, adds the brute-force column and the soundness check.
EvalReport cmd_eval(const Config& config, env::Environment& env, const std::vector<std::string>& lemmas,
                    const std::vector<ModeSpec>& modes, std::uint64_t budget,
                    const env::ToyEnvironment* oracle = nullptr);

RunReport cmd_train(const Config& config, env::Environment& env);

/// Checks a proof file: either a search result with a "proof" member or a bare proof tree.
env::CheckResult cmd_check(env::Environment& env, const std::string& proof_path);

/// Serves env.suite over HTTP until the process is stopped.
void cmd_serve_mock(const Config& config, const std::string& bind);

/// Entry point of the `pgs` binary.
int run(int argc, char** argv);

}  // namespace pgs::cli
