#include "pgs/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "pgs/env/http.hpp"

namespace pgs {

namespace {

Micros seconds_to_micros(double s, const char* what) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError(std::string(what) + " must be a nonnegative number of seconds");
  return Micros{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

double micros_to_seconds(Micros m) { return static_cast<double>(m.count()) / 1e6; }

template <typename F>
void validated(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void read_search(const nlohmann::json& j, SearchHyperparams& s) {
  constexpr const char* w = "search";
  require_known_keys(j,
                     {"gamma", "c_base", "c_init", "c_and", "delta", "top_n", "call_timeout_s", "retry_timeout_s",
                      "selection_rule", "classic_c", "lambda", "temperature", "exponent_clamp", "stuck_value", "dedup"},
                     w);
  read_opt(j, "gamma", s.gamma, w);
  read_opt(j, "c_base", s.c_base, w);
  read_opt(j, "c_init", s.c_init, w);
  read_opt(j, "c_and", s.c_and, w);
  read_opt(j, "delta", s.delta, w);
  read_opt(j, "top_n", s.top_n, w);
  if (j.contains("call_timeout_s")) s.call_timeout = seconds_to_micros(j["call_timeout_s"].get<double>(), "search.call_timeout_s");
  if (j.contains("retry_timeout_s")) s.retry_timeout = seconds_to_micros(j["retry_timeout_s"].get<double>(), "search.retry_timeout_s");
  if (j.contains("selection_rule")) {
    std::string r;
    read_opt(j, "selection_rule", r, w);
    validated([&] { s.selection_rule = selection_rule_from_string(r); });
  }
  read_opt(j, "classic_c", s.classic_c, w);
  read_opt(j, "lambda", s.lambda, w);
  read_opt(j, "temperature", s.temperature, w);
  read_opt(j, "exponent_clamp", s.exponent_clamp, w);
  read_opt(j, "stuck_value", s.stuck_value, w);
  read_opt(j, "dedup", s.dedup, w);
}

void read_reward(const nlohmann::json& j, RewardParams& r) {
  constexpr const char* w = "reward";
  require_known_keys(j, {"beta", "alpha", "tau", "t_clip_s", "hard_penalty"}, w);
  read_opt(j, "beta", r.beta, w);
  read_opt(j, "alpha", r.alpha, w);
  read_opt(j, "tau", r.tau, w);
  if (j.contains("t_clip_s")) r.t_clip = seconds_to_micros(j["t_clip_s"].get<double>(), "reward.t_clip_s");
  read_opt(j, "hard_penalty", r.hard_penalty, w);
}

void read_buffer(const nlohmann::json& j, BufferParams& b) {
  constexpr const char* w = "buffer";
  require_known_keys(j, {"capacity", "max_draws", "min_fill"}, w);
  read_opt(j, "capacity", b.capacity, w);
  read_opt(j, "max_draws", b.max_draws, w);
  read_opt(j, "min_fill", b.min_fill, w);
}

void read_budget(const nlohmann::json& j, BudgetParams& b) {
  constexpr const char* w = "budget";
  require_known_keys(j, {"initial", "growth"}, w);
  read_opt(j, "initial", b.initial, w);
  read_opt(j, "growth", b.growth, w);
}

void read_train(const nlohmann::json& j, TrainParams& t) {
  constexpr const char* w = "train";
  require_known_keys(j, {"lr", "beta1", "beta2", "eps", "clip_norm", "batch_size", "value_weight"}, w);
  read_opt(j, "lr", t.lr, w);
  read_opt(j, "beta1", t.beta1, w);
  read_opt(j, "beta2", t.beta2, w);
  read_opt(j, "eps", t.eps, w);
  read_opt(j, "clip_norm", t.clip_norm, w);
  read_opt(j, "batch_size", t.batch_size, w);
  read_opt(j, "value_weight", t.value_weight, w);
}

void read_run(const nlohmann::json& j, RunParams& r) {
  constexpr const char* w = "run";
  require_known_keys(j,
                     {"workers", "lemmas", "max_searches", "max_proofs", "wall_clock_s", "checkpoint_every",
                      "max_steps_per_search", "max_crashes_per_lemma"},
                     w);
  read_opt(j, "workers", r.workers, w);
  read_opt(j, "lemmas", r.lemmas, w);
  read_opt(j, "max_searches", r.max_searches, w);
  read_opt(j, "max_proofs", r.max_proofs, w);
  read_opt(j, "wall_clock_s", r.wall_clock_s, w);
  read_opt(j, "checkpoint_every", r.checkpoint_every, w);
  read_opt(j, "max_steps_per_search", r.max_steps_per_search, w);
  read_opt(j, "max_crashes_per_lemma", r.max_crashes_per_lemma, w);
}

}  // namespace

void BudgetParams::validate() const {
  if (initial < 1) throw std::invalid_argument("budget.initial must be >= 1");
  if (!(growth > 1.0)) throw std::invalid_argument("budget.growth must be > 1");
}

void RunParams::validate() const {
  if (workers < 1) throw std::invalid_argument("run.workers must be >= 1");
  if (wall_clock_s < 0.0) throw std::invalid_argument("run.wall_clock_s must be nonnegative");
}

void Config::validate() const {
  validated([&] {
    run.validate();
    search.validate();
    reward.validate();
    model.validate();
    buffer.validate();
    budget.validate();
    train.validate();
  });
}

nlohmann::json Config::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["run"] = {{"workers", run.workers},
              {"lemmas", run.lemmas},
              {"max_searches", run.max_searches},
              {"max_proofs", run.max_proofs},
              {"wall_clock_s", run.wall_clock_s},
              {"checkpoint_every", run.checkpoint_every},
              {"max_steps_per_search", run.max_steps_per_search},
              {"max_crashes_per_lemma", run.max_crashes_per_lemma}};
  j["search"] = {{"gamma", search.gamma},
                 {"c_base", search.c_base},
                 {"c_init", search.c_init},
                 {"c_and", search.c_and},
                 {"delta", search.delta},
                 {"top_n", search.top_n},
                 {"call_timeout_s", micros_to_seconds(search.call_timeout)},
                 {"retry_timeout_s", micros_to_seconds(search.retry_timeout)},
                 {"selection_rule", pgs::to_string(search.selection_rule)},
                 {"classic_c", search.classic_c},
                 {"lambda", search.lambda},
                 {"temperature", search.temperature},
                 {"exponent_clamp", search.exponent_clamp},
                 {"stuck_value", search.stuck_value},
                 {"dedup", search.dedup}};
  j["reward"] = {{"beta", reward.beta},
                 {"alpha", reward.alpha},
                 {"tau", reward.tau},
                 {"t_clip_s", micros_to_seconds(reward.t_clip)},
                 {"hard_penalty", reward.hard_penalty}};
  j["model"] = model.to_json();
  j["buffer"] = {{"capacity", buffer.capacity}, {"max_draws", buffer.max_draws}, {"min_fill", buffer.min_fill}};
  j["budget"] = {{"initial", budget.initial}, {"growth", budget.growth}};
  j["train"] = {{"lr", train.lr},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"eps", train.eps},
                {"clip_norm", train.clip_norm},
                {"batch_size", train.batch_size},
                {"value_weight", train.value_weight}};
  j["env"] = {{"suite", env.suite}, {"url", env.url}};
  j["paths"] = {{"out_dir", paths.out_dir}, {"tokenizer", paths.tokenizer}, {"checkpoint", paths.checkpoint}};
  return j;
}

Config config_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"seed", "run", "search", "reward", "model", "buffer", "budget", "train", "env", "paths"},
                     "config");
  Config c;
  try {
    read_opt(j, "seed", c.seed, "config");
    if (j.contains("run")) read_run(j["run"], c.run);
    if (j.contains("search")) read_search(j["search"], c.search);
    if (j.contains("reward")) read_reward(j["reward"], c.reward);
    if (j.contains("model")) c.model = nn::ModelConfig::from_json(j["model"]);
    if (j.contains("buffer")) read_buffer(j["buffer"], c.buffer);
    if (j.contains("budget")) read_budget(j["budget"], c.budget);
    if (j.contains("train")) read_train(j["train"], c.train);
    if (j.contains("env")) {
      require_known_keys(j["env"], {"suite", "url"}, "env");
      read_opt(j["env"], "suite", c.env.suite, "env");
      read_opt(j["env"], "url", c.env.url, "env");
    }
    if (j.contains("paths")) {
      require_known_keys(j["paths"], {"out_dir", "tokenizer", "checkpoint"}, "paths");
      read_opt(j["paths"], "out_dir", c.paths.out_dir, "paths");
      read_opt(j["paths"], "tokenizer", c.paths.tokenizer, "paths");
      read_opt(j["paths"], "checkpoint", c.paths.checkpoint, "paths");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string resolve_env_url(const Config& c) {
  if (const char* v = std::getenv(env::kEnvUrlVariable); v != nullptr && *v != '\0') return v;
  return c.env.url;
}

}  // namespace pgs
