#include "pgs/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pgs/env/http.hpp"
#include "pgs/env/wire.hpp"
#include "pgs/nn/checkpoint.hpp"
#include "pgs/nn/tokenizer.hpp"

namespace pgs::cli {

namespace fs = std::filesystem;

nlohmann::json GenOutput::to_json() const {
  return {{"suite", suite_path},
          {"corpus", corpus_path},
          {"tokenizer", tokenizer_path},
          {"instances", instances},
          {"corpus_lines", corpus_lines},
          {"tokenizer_hash", tokenizer_hash}};
}

GenOutput cmd_gen(const GenOptions& options) {
  if (options.suite.count == 0) throw CommandError("usage", "gen needs at least one instance", 2);
  std::vector<env::ToyInstance> suite;
  try {
    suite = env::generate_suite(options.seed, options.suite);
  } catch (const std::invalid_argument& e) {
    throw CommandError("usage", std::string("refusing to generate: ") + e.what(), 2);
  }
  fs::create_directories(options.out_dir);
  GenOutput out;
  const fs::path dir(options.out_dir);
  out.suite_path = (dir / "suite.json").string();
  out.corpus_path = (dir / "corpus.txt").string();
  out.tokenizer_path = (dir / "tokenizer.json").string();
  env::save_suite(out.suite_path, suite);
  const std::vector<std::string> corpus = env::method_corpus(suite);
  {
    std::ofstream c(out.corpus_path, std::ios::binary | std::ios::trunc);
    if (!c) throw CommandError("file", "cannot write '" + out.corpus_path + "'");
    for (const std::string& line : corpus) c << line << '\n';
  }
  const nn::Tokenizer tok = nn::Tokenizer::train(corpus, options.tokenizer_merges);
  tok.save(out.tokenizer_path);
  out.instances = suite.size();
  out.corpus_lines = corpus.size();
  out.tokenizer_hash = tok.hash();
  return out;
}

std::string effective_env_url(const Config& config, const std::string& url_override) {
  if (!url_override.empty()) return url_override;
  return resolve_env_url(config);
}

std::unique_ptr<env::Environment> make_environment(const Config& config, const std::string& url_override) {
  const std::string url = effective_env_url(config, url_override);
  if (!url.empty()) return std::make_unique<env::HttpEnvironment>(url);
  if (config.env.suite.empty()) {
    throw CommandError("usage", "no prover configured: set env.suite (--suite), env.url (--env-url) or PGS_ENV_URL", 2);
  }
  if (!fs::exists(config.env.suite)) throw CommandError("file", "suite file not found: '" + config.env.suite + "'");
  return std::make_unique<env::ToyEnvironment>(env::load_suite(config.env.suite));
}

std::vector<std::string> resolve_lemmas(const Config& config) {
  if (!config.run.lemmas.empty()) return config.run.lemmas;
  if (config.env.suite.empty()) throw CommandError("usage", "no lemmas: set run.lemmas or env.suite", 2);
  if (!fs::exists(config.env.suite)) throw CommandError("file", "suite file not found: '" + config.env.suite + "'");
  std::vector<std::string> out;
  for (const env::ToyInstance& inst : env::load_suite(config.env.suite)) out.push_back(inst.lemma);
  if (out.empty()) throw CommandError("usage", "suite '" + config.env.suite + "' is empty", 2);
  return out;
}

ModeSpec parse_mode(const std::string& text) {
  ModeSpec m;
  m.name = text;
  std::string base = text;
  constexpr std::string_view kTree = "/tree";
  if (base.size() > kTree.size() && base.compare(base.size() - kTree.size(), kTree.size(), kTree) == 0) {
    m.tree = true;
    base.resize(base.size() - kTree.size());
  }
  if (base == "uniform") {
    m.prior = ModeSpec::Prior::Uniform;
  } else if (base == "heuristic") {
    m.prior = ModeSpec::Prior::Heuristic;
  } else if (base == "checkpoint") {
    m.prior = ModeSpec::Prior::Checkpoint;
  } else if (base.rfind("checkpoint=", 0) == 0) {
    m.prior = ModeSpec::Prior::Checkpoint;
    m.checkpoint = base.substr(std::string_view("checkpoint=").size());
    if (m.checkpoint.empty()) throw CommandError("usage", "empty checkpoint path in mode '" + text + "'", 2);
  } else {
    throw CommandError("usage", "unknown mode '" + text + "' (expected uniform, heuristic or checkpoint[=PATH], "
                                "optionally with /tree)", 2);
  }
  return m;
}

PreparedMode prepare_mode(const ModeSpec& spec, const Config& config) {
  PreparedMode p;
  p.spec = spec;
  p.search = config.search;
  p.search.dedup = config.search.dedup && !spec.tree;
  switch (spec.prior) {
    case ModeSpec::Prior::Uniform:
      p.evaluator = std::make_unique<UniformEvaluator>();
      break;
    case ModeSpec::Prior::Heuristic:
      p.evaluator = std::make_unique<UniformEvaluator>();
      if (!(p.search.lambda > 0.0)) p.search.lambda = kDefaultHeuristicLambda;
      break;
    case ModeSpec::Prior::Checkpoint: {
      const std::string path = spec.checkpoint.empty() ? config.paths.checkpoint : spec.checkpoint;
      if (path.empty()) throw CommandError("usage", "checkpoint mode needs --checkpoint or paths.checkpoint", 2);
      if (!fs::exists(path)) throw CommandError("file", "checkpoint file not found: '" + path + "'");
      try {
        nn::Checkpoint ck = nn::load_checkpoint(path);
        p.evaluator = std::make_unique<NetworkEvaluator>(std::move(ck.tokenizer), std::move(ck.model));
      } catch (const std::exception& e) {
        throw CommandError("file", "cannot load checkpoint '" + path + "': " + e.what());
      }
      break;
    }
  }
  return p;
}

SearchResult cmd_search(const Config& config, env::Environment& env, const std::string& lemma, const ModeSpec& mode,
                        std::uint64_t budget) {
  PreparedMode p = prepare_mode(mode, config);
  Search search(env, *p.evaluator, p.search, config.reward);
  search.set_collect_examples(false);
  return search.run(lemma, budget);
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

EvalReport cmd_eval(const Config& config, env::Environment& env, const std::vector<std::string>& lemmas,
                    const std::vector<ModeSpec>& modes, std::uint64_t budget, const env::ToyEnvironment* oracle) {
  if (lemmas.empty()) throw CommandError("usage", "eval needs a non-empty suite", 2);
  if (modes.empty()) throw CommandError("usage", "eval needs at least one mode", 2);
  EvalReport rep;
  rep.lemmas = lemmas;
  rep.budget = budget;
  rep.modes = modes;
  for (const ModeSpec& spec : modes) {
    PreparedMode p = prepare_mode(spec, config);
    std::vector<EvalRun> runs;
    for (const std::string& lemma : lemmas) {
      Search search(env, *p.evaluator, p.search, config.reward);
      search.set_collect_examples(false);
      const SearchResult r = search.run(lemma, budget);
      EvalRun run;
      run.lemma = lemma;
      run.status = r.root_status;
      run.valid = is_resolved(r.root_status) && !r.failed_validation && r.proof != nullptr;
      run.expansions = r.expansions;
      run.proof_size = r.proof_size();
      run.shared_fraction = r.shared_fraction;
      spdlog::info("{} {}: {} in {} expansions", spec.name, lemma, pgs::to_string(r.root_status), r.expansions);
      runs.push_back(std::move(run));
    }
    rep.runs.push_back(std::move(runs));
  }

  if (oracle != nullptr) {
    std::vector<NodeStatus> st;
    std::vector<std::size_t> cost;
    for (const std::string& lemma : lemmas) {
      const env::ToyCalculus& c = oracle->calculus(lemma);
      const env::OracleResult o = env::oracle_resolve(c);
      st.push_back(o.root_status(c));
      cost.push_back(o.cost[c.root]);
    }
    rep.oracle_status = std::move(st);
    rep.oracle_cost = std::move(cost);
  }

  std::vector<bool> common(lemmas.size(), true);
  for (const auto& runs : rep.runs) {
    for (std::size_t i = 0; i < runs.size(); ++i) common[i] = common[i] && runs[i].valid;
  }
  rep.common_solved = static_cast<std::size_t>(std::count(common.begin(), common.end(), true));
  for (const auto& runs : rep.runs) {
    ModeSummary s;
    std::vector<double> exps, sizes, shared, cexps, csizes;
    double shared_sum = 0.0;
    bool sound = true;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const EvalRun& r = runs[i];
      shared_sum += r.shared_fraction;
      if (!r.valid) continue;
      ++s.solved;
      exps.push_back(static_cast<double>(r.expansions));
      sizes.push_back(static_cast<double>(r.proof_size));
      shared.push_back(r.shared_fraction);
      if (common[i]) {
        cexps.push_back(static_cast<double>(r.expansions));
        csizes.push_back(static_cast<double>(r.proof_size));
      }
      if (rep.oracle_status && (*rep.oracle_status)[i] != r.status) sound = false;
    }
    s.median_expansions = median(exps);
    s.median_proof_size = median(sizes);
    s.median_shared_fraction = median(shared);
    s.mean_shared_fraction = runs.empty() ? 0.0 : shared_sum / static_cast<double>(runs.size());
    s.common_median_expansions = median(cexps);
    s.common_median_proof_size = median(csizes);
    if (rep.oracle_status) s.sound = sound;
    rep.summaries.push_back(s);
  }
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json ms = nlohmann::json::array();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const ModeSummary& s = summaries[m];
    nlohmann::json runs_j = nlohmann::json::array();
    for (const EvalRun& r : runs[m]) {
      runs_j.push_back({{"lemma", r.lemma},
                        {"status", pgs::to_string(r.status)},
                        {"valid", r.valid},
                        {"expansions", r.expansions},
                        {"proof_size", r.proof_size},
                        {"shared_fraction", r.shared_fraction}});
    }
    nlohmann::json j{{"mode", modes[m].name},
                     {"solved", s.solved},
                     {"median_expansions", s.median_expansions},
                     {"median_proof_size", s.median_proof_size},
                     {"mean_shared_fraction", s.mean_shared_fraction},
                     {"median_shared_fraction", s.median_shared_fraction},
                     {"common_median_expansions", s.common_median_expansions},
                     {"common_median_proof_size", s.common_median_proof_size},
                     {"runs", std::move(runs_j)}};
    if (s.sound) j["sound"] = *s.sound;
    ms.push_back(std::move(j));
  }
  nlohmann::json out{{"budget", budget}, {"lemmas", lemmas.size()}, {"common_solved", common_solved}, {"modes", ms}};
  if (oracle_status) {
    std::size_t solved = 0;
    std::vector<double> costs;
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < lemmas.size(); ++i) {
      const bool r = is_resolved((*oracle_status)[i]);
      if (r) {
        ++solved;
        costs.push_back(static_cast<double>((*oracle_cost)[i]));
      }
      per.push_back({{"lemma", lemmas[i]}, {"status", pgs::to_string((*oracle_status)[i])},
                     {"min_proof_size", r ? nlohmann::json((*oracle_cost)[i]) : nlohmann::json()}});
    }
    out["oracle"] = {{"solved", solved}, {"median_proof_size", median(costs)}, {"lemmas", std::move(per)}};
  }
  return out;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << std::left << std::setw(24) << "mode" << std::right << std::setw(8) << "solved" << std::setw(10) << "med exp"
      << std::setw(11) << "med proof" << std::setw(9) << "shared" << std::setw(12) << "common exp" << std::setw(13)
      << "common proof" << std::setw(7) << "sound" << '\n';
  out << std::fixed << std::setprecision(1);
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const ModeSummary& s = summaries[m];
    out << std::left << std::setw(24) << modes[m].name << std::right << std::setw(8)
        << (std::to_string(s.solved) + "/" + std::to_string(lemmas.size())) << std::setw(10) << s.median_expansions
        << std::setw(11) << s.median_proof_size << std::setw(9) << std::setprecision(3) << s.mean_shared_fraction
        << std::setprecision(1) << std::setw(12) << s.common_median_expansions << std::setw(13)
        << s.common_median_proof_size << std::setw(7) << (s.sound ? (*s.sound ? "yes" : "NO") : "-") << '\n';
  }
  if (oracle_status) {
    std::size_t solved = 0;
    std::vector<double> costs;
    for (std::size_t i = 0; i < lemmas.size(); ++i) {
      if (is_resolved((*oracle_status)[i])) {
        ++solved;
        costs.push_back(static_cast<double>((*oracle_cost)[i]));
      }
    }
    out << std::left << std::setw(24) << "oracle" << std::right << std::setw(8)
        << (std::to_string(solved) + "/" + std::to_string(lemmas.size())) << std::setw(10) << "-" << std::setw(11)
        << median(costs) << std::setw(9) << "-" << std::setw(12) << "-" << std::setw(13) << "-" << std::setw(7) << "-"
        << '\n';
  }
  out << "budget " << budget << ", solved by every mode: " << common_solved << '\n';
  return out.str();
}

RunReport cmd_train(const Config& config, env::Environment& env) {
  return train_loop(config, env, resolve_lemmas(config));
}

env::CheckResult cmd_check(env::Environment& env, const std::string& proof_path) {
  std::ifstream in(proof_path);
  if (!in) throw CommandError("file", "cannot open proof file '" + proof_path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CommandError("usage", "proof file is not JSON: " + std::string(e.what()), 2);
  }
  const nlohmann::json* tree = &j;
  if (j.is_object() && j.contains("proof")) tree = &j["proof"];
  else if (j.is_object() && j.contains("tree")) tree = &j["tree"];
  else if (j.is_object() && j.contains("status") && !j.contains("state")) {
    throw CommandError("usage", "search result in '" + proof_path + "' holds no proof", 2);
  }
  std::unique_ptr<env::ProofTree> t;
  try {
    t = env::wire::proof_tree_from_json(*tree);
  } catch (const std::exception& e) {
    throw CommandError("usage", "malformed proof tree: " + std::string(e.what()), 2);
  }
  return env.check_proof(*t);
}

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

}  // namespace

void cmd_serve_mock(const Config& config, const std::string& bind) {
  if (config.env.suite.empty()) throw CommandError("usage", "serve-mock needs a suite (--suite or env.suite)", 2);
  if (!fs::exists(config.env.suite)) throw CommandError("file", "suite file not found: '" + config.env.suite + "'");
  const auto [host, port] = env::parse_bind_address(bind);
  auto toy = std::make_shared<env::ToyEnvironment>(env::load_suite(config.env.suite));
  env::MockServer server(toy);
  server.start(host, port);
  std::cout << nlohmann::json{{"listening", (host.empty() ? std::string("0.0.0.0") : host) + ":" +
                                                std::to_string(server.port())},
                              {"lemmas", toy->lemmas().size()}}
                   .dump()
            << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
}

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> budget;
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::string env_url;
  std::string checkpoint;
  std::string out;
  std::string suite;
  std::string log_level;
};

Config build_config(const Globals& g, bool out_is_dir) {
  Config c = g.config.empty() ? Config{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.workers) c.run.workers = *g.workers;
  if (g.budget) c.budget.initial = *g.budget;
  if (g.lambda) c.search.lambda = *g.lambda;
  if (g.gamma) c.search.gamma = *g.gamma;
  if (!g.env_url.empty()) c.env.url = g.env_url;
  if (!g.checkpoint.empty()) c.paths.checkpoint = g.checkpoint;
  if (!g.suite.empty()) c.env.suite = g.suite;
  if (out_is_dir && !g.out.empty()) c.paths.out_dir = g.out;
  c.validate();
  return c;
}

void emit(const nlohmann::json& j, const std::string& out_path) {
  const std::string text = j.dump(2);
  std::cout << text << std::endl;
  if (!out_path.empty()) {
    const fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw CommandError("file", "cannot write '" + out_path + "'");
    f << text << '\n';
  }
}

int fail(const std::string& code, const std::string& message, int exit_code) {
  std::cout << env::wire::error_json(code, message).dump() << std::endl;
  return exit_code;
}

void setup_logging(const std::string& level, const std::string& fallback) {
  auto logger = spdlog::get("pgs");
  if (!logger) logger = spdlog::stderr_color_mt("pgs");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level.empty() ? fallback : level));
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Monte Carlo graph search over AND/OR proof spaces"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "RNG seed (generation seed for gen)");
  app.add_option("--workers", g.workers, "search workers for train");
  app.add_option("--budget", g.budget, "node expansion budget (initial budget for train)");
  app.add_option("--lambda", g.lambda, "heuristic rank bias");
  app.add_option("--gamma", g.gamma, "value discount of the selection score");
  app.add_option("--env-url", g.env_url, "remote prover URL (overrides PGS_ENV_URL)");
  app.add_option("--checkpoint", g.checkpoint, "checkpoint file");
  app.add_option("--out", g.out, "output file (output directory for gen and train)");
  app.add_option("--suite", g.suite, "suite file for the in-process prover");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  GenOptions gen;
  std::string polarity = "universal";
  auto* gen_cmd = app.add_subcommand("gen", "generate a toy suite, corpus and tokenizer");
  gen_cmd->add_option("--count", gen.suite.count, "number of instances")->capture_default_str();
  gen_cmd->add_option("--prefix", gen.suite.prefix, "lemma id prefix")->capture_default_str();
  gen_cmd->add_option("--depth", gen.suite.base.depth)->capture_default_str();
  gen_cmd->add_option("--min-branching", gen.suite.base.min_branching)->capture_default_str();
  gen_cmd->add_option("--max-branching", gen.suite.base.max_branching)->capture_default_str();
  gen_cmd->add_option("--close-prob", gen.suite.base.close_prob)->capture_default_str();
  gen_cmd->add_option("--split-prob", gen.suite.base.split_prob)->capture_default_str();
  gen_cmd->add_option("--max-split", gen.suite.base.max_split)->capture_default_str();
  gen_cmd->add_option("--duplicate-prob", gen.suite.base.duplicate_prob)->capture_default_str();
  gen_cmd->add_option("--informativeness", gen.suite.base.informativeness)->capture_default_str();
  gen_cmd->add_option("--polarity", polarity, "universal or existential")->capture_default_str();
  gen_cmd->add_option("--max-states", gen.suite.base.max_states, "bound on non-terminal states")
      ->capture_default_str();
  gen_cmd->add_option("--slow-prob", gen.suite.base.slow_prob)->capture_default_str();
  gen_cmd->add_option("--diverge-prob", gen.suite.base.diverge_prob)->capture_default_str();
  gen_cmd->add_option("--merges", gen.tokenizer_merges, "tokenizer merges")->capture_default_str();

  std::string lemma;
  std::string mode = "uniform";
  auto* search_cmd = app.add_subcommand("search", "run one search and print the result");
  search_cmd->add_option("--lemma", lemma, "lemma id")->required();
  search_cmd->add_option("--mode", mode, "uniform, heuristic or checkpoint[=PATH], optionally /tree")
      ->capture_default_str();

  std::vector<std::string> modes{"uniform", "heuristic"};
  bool with_oracle = false;
  std::vector<std::string> eval_lemmas;
  auto* eval_cmd = app.add_subcommand("eval", "compare prior sources over a suite");
  eval_cmd->add_option("--modes", modes, "modes to compare")->delimiter(',')->capture_default_str();
  eval_cmd->add_flag("--oracle", with_oracle, "add the brute-force oracle column");
  eval_cmd->add_option("--lemmas", eval_lemmas, "restrict to these lemmas")->delimiter(',');

  auto* train_cmd = app.add_subcommand("train", "self-play training");

  std::string bind = "127.0.0.1:8080";
  auto* serve_cmd = app.add_subcommand("serve-mock", "serve the toy prover over HTTP");
  serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();

  std::string proof_path;
  auto* check_cmd = app.add_subcommand("check", "check a stored proof");
  check_cmd->add_option("--proof", proof_path, "search result or proof tree JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  std::string url_for_errors;
  try {
    if (*gen_cmd) {
      setup_logging(g.log_level, "warn");
      if (g.seed) gen.seed = *g.seed;
      if (!g.config.empty()) gen.seed = g.seed.value_or(load_config(g.config).seed);
      if (polarity == "universal") {
        gen.suite.base.polarity = env::Polarity::Universal;
      } else if (polarity == "existential") {
        gen.suite.base.polarity = env::Polarity::Existential;
      } else {
        return fail("usage", "polarity must be universal or existential", 2);
      }
      gen.out_dir = g.out.empty() ? "." : g.out;
      emit(cmd_gen(gen).to_json(), "");
      return 0;
    }
    if (*serve_cmd) {
      setup_logging(g.log_level, "info");
      cmd_serve_mock(build_config(g, false), bind);
      return 0;
    }
    const bool train = static_cast<bool>(*train_cmd);
    setup_logging(g.log_level, train ? "info" : "warn");
    const Config cfg = build_config(g, train);
    url_for_errors = effective_env_url(cfg, g.env_url);
    std::unique_ptr<env::Environment> env = make_environment(cfg, g.env_url);
    const std::uint64_t budget = g.budget.value_or(cfg.budget.initial);
    if (*search_cmd) {
      const SearchResult r = cmd_search(cfg, *env, lemma, parse_mode(mode), budget);
      emit(r.to_json(), g.out);
      return 0;
    }
    if (*eval_cmd) {
      std::vector<ModeSpec> specs;
      for (const std::string& m : modes) specs.push_back(parse_mode(m));
      Config ecfg = cfg;
      if (!eval_lemmas.empty()) ecfg.run.lemmas = eval_lemmas;
      const auto* toy = dynamic_cast<const env::ToyEnvironment*>(env.get());
      if (with_oracle && toy == nullptr) {
        return fail("usage", "the oracle column needs the in-process prover", 2);
      }
      const EvalReport rep = cmd_eval(ecfg, *env, resolve_lemmas(ecfg), specs, budget, with_oracle ? toy : nullptr);
      std::cerr << rep.to_table();
      emit(rep.to_json(), g.out.empty() ? "" : g.out);
      return 0;
    }
    if (train) {
      const RunReport rep = cmd_train(cfg, *env);
      std::cerr << rep.to_table();
      emit(rep.to_json(), "");
      return 0;
    }
    if (*check_cmd) {
      const env::CheckResult r = cmd_check(*env, proof_path);
      emit(env::wire::to_json(r), g.out);
      return r.valid ? 0 : 1;
    }
    return fail("usage", "no command given", 2);
  } catch (const CommandError& e) {
    return fail(e.code(), e.what(), e.exit_code());
  } catch (const env::EnvError& e) {
    if (e.code() == env::EnvError::Code::Transport) {
      return fail("connection",
                  std::string(e.what()) + "; check that a prover is listening at " + url_for_errors +
                      " (start one with `pgs serve-mock --suite FILE`), then retry, or unset PGS_ENV_URL and "
                      "pass --suite to use the in-process prover",
                  3);
    }
    return fail(std::string("env.") + e.code_name(), e.what(), 1);
  } catch (const TrainingDiverged& e) {
    return fail("diverged", e.what(), 4);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("usage", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
}

}  // namespace pgs::cli
