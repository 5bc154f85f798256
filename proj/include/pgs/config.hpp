#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/evaluator.hpp"
#include "pgs/json_util.hpp"
#include "pgs/nn/model.hpp"
#include "pgs/replay_buffer.hpp"
#include "pgs/reward.hpp"
#include "pgs/search.hpp"

namespace pgs {

struct BudgetParams {
  std::uint64_t initial = 100;  // B0
  double growth = 1.3;          // phi

  void validate() const;
};

struct RunParams {
  std::size_t workers = 1;
  std::vector<std::string> lemmas;  // empty: every lemma of the suite
  std::uint64_t max_searches = 400;
  std::uint64_t max_proofs = UINT64_MAX;  // 0 stops before the first search
  double wall_clock_s = 0.0;              // 0: no cap
  std::uint64_t checkpoint_every = 500;   // train steps; 0 disables periodic checkpoints
  std::uint64_t max_steps_per_search = 64;  // single-worker lockstep cap
  std::uint64_t max_crashes_per_lemma = 3;

  void validate() const;
};

struct EnvParams {
  std::string suite;  // suite file for the in-process toy prover
  std::string url;    // remote prover; overrides `suite` when set
};

struct PathsParams {
  std::string out_dir = "run";
  std::string tokenizer;   // tokenizer JSON; empty: character-level
  std::string checkpoint;  // initial weights for train, weights for search/eval
};

/// Everything a command needs. Every field has a default; a config file
/// only lists what it changes and may not contain unknown keys.
struct Config {
  std::uint64_t seed = 7;
  RunParams run;
  SearchHyperparams search;
  RewardParams reward;
  nn::ModelConfig model;
  BufferParams buffer;
  BudgetParams budget;
  TrainParams train;
  EnvParams env;
  PathsParams paths;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Strict parse; unknown keys and type errors raise ConfigError.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::string& path);

/// The prover URL from the config, overridden by PGS_ENV_URL when set.
std::string resolve_env_url(const Config& c);

}  // namespace pgs
