#include <doctest.h>

#include <stdexcept>

#include <signal.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pgs/cli/commands.hpp"
#include "pgs/config.hpp"
#include "pgs/env/http.hpp"

using namespace pgs;
using namespace pgs::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pgs_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct Proc {
  int exit_code = -1;
  std::string out;
};

// Runs the pgs binary with stderr discarded and returns its exit code and stdout.
Proc pgs_cmd(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + " " + std::string(PGS_BINARY) + " " + args + " 2>/dev/null";
  Proc p;
  FILE* f = popen(cmd.c_str(), "r");
  REQUIRE(f != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), f)) > 0) p.out.append(buf.data(), n);
  const int status = pclose(f);
  p.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return p;
}

GenOutput small_suite(const std::string& dir, env::Polarity pol = env::Polarity::Universal, std::size_t count = 6) {
  GenOptions g;
  g.seed = 3;
  g.suite.count = count;
  g.suite.base.depth = 4;
  g.suite.base.polarity = pol;
  g.tokenizer_merges = 32;
  g.out_dir = dir;
  return cmd_gen(g);
}

Config config_for(const GenOutput& gen) {
  Config c;
  c.env.suite = gen.suite_path;
  return c;
}

}  // namespace

TEST_CASE("gen is deterministic") {
  const std::string a = fresh_dir("gen_a");
  const std::string b = fresh_dir("gen_b");
  const GenOutput ga = small_suite(a);
  const GenOutput gb = small_suite(b);
  CHECK(slurp(ga.suite_path) == slurp(gb.suite_path));
  CHECK(slurp(ga.corpus_path) == slurp(gb.corpus_path));
  CHECK(slurp(ga.tokenizer_path) == slurp(gb.tokenizer_path));
  CHECK(ga.tokenizer_hash == gb.tokenizer_hash);
}

TEST_CASE("gen writes the requested number of instances") {
  GenOptions g;
  g.suite.count = 200;
  g.tokenizer_merges = 16;
  g.out_dir = fresh_dir("gen200");
  const GenOutput out = cmd_gen(g);
  CHECK(out.instances == 200);
  CHECK(env::load_suite(out.suite_path).size() == 200);
}

TEST_CASE("gen refuses parameters outside the state bound") {
  GenOptions g;
  g.out_dir = fresh_dir("gen_bad");
  g.suite.base.max_states = 100000;
  try {
    cmd_gen(g);
    FAIL("expected a refusal");
  } catch (const CommandError& e) {
    CHECK(e.exit_code() == 2);
  }
  CHECK_FALSE(fs::exists(fs::path(g.out_dir) / "suite.json"));
  const Proc p = pgs_cmd("gen --max-states 0 --out " + g.out_dir);
  CHECK(p.exit_code == 2);
  CHECK(json::parse(p.out).contains("error"));
}

TEST_CASE("search modes") {
  const GenOutput gen = small_suite(fresh_dir("search"), env::Polarity::Existential);
  const Config cfg = config_for(gen);
  auto env = make_environment(cfg);
  auto* toy = dynamic_cast<env::ToyEnvironment*>(env.get());
  REQUIRE(toy != nullptr);
  const std::string lemma = toy->lemmas().front();
  const env::OracleResult o = env::oracle_resolve(toy->calculus(lemma));
  REQUIRE(o.root_status(toy->calculus(lemma)) == NodeStatus::Solved);

  SUBCASE("uniform solves an oracle-confirmed instance") {
    const SearchResult r = cmd_search(cfg, *env, lemma, parse_mode("uniform"), 500);
    CHECK(r.root_status == NodeStatus::Solved);
    CHECK(r.check->valid);
  }
  SUBCASE("heuristic and tree modes") {
    CHECK(cmd_search(cfg, *env, lemma, parse_mode("heuristic"), 500).root_status == NodeStatus::Solved);
    const SearchResult t = cmd_search(cfg, *env, lemma, parse_mode("uniform/tree"), 500);
    CHECK(t.root_status == NodeStatus::Solved);
    CHECK(t.shared_fraction == 0.0);
  }
  SUBCASE("a missing checkpoint is a file error") {
    try {
      cmd_search(cfg, *env, lemma, parse_mode("checkpoint=/nonexistent/model.pgsck"), 10);
      FAIL("expected an error");
    } catch (const CommandError& e) {
      CHECK(e.code() == "file");
    }
    const Proc p = pgs_cmd("search --suite " + gen.suite_path + " --lemma " + lemma +
                           " --mode checkpoint=/nonexistent/model.pgsck");
    CHECK(p.exit_code != 0);
    CHECK(json::parse(p.out)["error"]["code"] == "file");
  }
  SUBCASE("budget 1 leaves the root open") {
    const Proc p = pgs_cmd("search --suite " + gen.suite_path + " --lemma " + lemma + " --budget 1");
    REQUIRE(p.exit_code == 0);
    CHECK(json::parse(p.out)["status"] == "open");
  }
  SUBCASE("unknown modes are usage errors") {
    CHECK_THROWS_AS(parse_mode("magic"), CommandError);
    const Proc p = pgs_cmd("search --suite " + gen.suite_path + " --lemma " + lemma + " --mode magic");
    CHECK(p.exit_code == 2);
  }
}

TEST_CASE("eval") {
  const GenOutput gen = small_suite(fresh_dir("eval"));
  const Config cfg = config_for(gen);
  auto env = make_environment(cfg);
  const std::vector<std::string> lemmas = resolve_lemmas(cfg);

  SUBCASE("two identical modes give identical columns") {
    const EvalReport r = cmd_eval(cfg, *env, lemmas, {parse_mode("uniform"), parse_mode("uniform")}, 200);
    REQUIRE(r.summaries.size() == 2);
    const json j = r.to_json();
    CHECK(j["modes"][0] == j["modes"][1]);
    for (std::size_t i = 0; i < lemmas.size(); ++i) {
      CHECK(r.runs[0][i].expansions == r.runs[1][i].expansions);
      CHECK(r.runs[0][i].status == r.runs[1][i].status);
    }
  }
  SUBCASE("the solved set lies within the oracle's") {
    const auto* toy = dynamic_cast<const env::ToyEnvironment*>(env.get());
    const EvalReport r = cmd_eval(cfg, *env, lemmas, {parse_mode("uniform"), parse_mode("heuristic")}, 200, toy);
    REQUIRE(r.oracle_status.has_value());
    for (std::size_t m = 0; m < r.modes.size(); ++m) {
      REQUIRE(r.summaries[m].sound.has_value());
      CHECK(*r.summaries[m].sound);
      for (std::size_t i = 0; i < lemmas.size(); ++i) {
        if (r.runs[m][i].valid) CHECK(is_resolved((*r.oracle_status)[i]));
      }
    }
    CHECK(r.to_table().find("oracle") != std::string::npos);
  }
  SUBCASE("an empty suite is refused") {
    CHECK_THROWS_AS(cmd_eval(cfg, *env, {}, {parse_mode("uniform")}, 10), CommandError);
  }
  SUBCASE("the binary prints JSON") {
    const Proc p = pgs_cmd("eval --suite " + gen.suite_path + " --budget 50 --modes uniform,heuristic --oracle");
    REQUIRE(p.exit_code == 0);
    const json j = json::parse(p.out);
    CHECK(j["modes"].size() == 2);
  }
}

TEST_CASE("check accepts a proof produced by search") {
  const std::string dir = fresh_dir("check");
  const GenOutput gen = small_suite(dir);
  const std::string result = dir + "/result.json";
  const Proc s = pgs_cmd("search --suite " + gen.suite_path + " --lemma L0 --budget 500 --out " + result);
  REQUIRE(s.exit_code == 0);
  REQUIRE(json::parse(s.out)["status"] == "contradictory");
  auto env = make_environment(config_for(gen));
  CHECK(cmd_check(*env, result).valid);
  const Proc c = pgs_cmd("check --suite " + gen.suite_path + " --proof " + result);
  CHECK(c.exit_code == 0);
  CHECK(json::parse(c.out)["valid"] == true);
}

TEST_CASE("search against serve-mock matches the in-process prover") {
  const std::string dir = fresh_dir("serve");
  const GenOutput gen = small_suite(dir);
  int fds[2];
  REQUIRE(pipe(fds) == 0);
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    dup2(fds[1], 1);
    close(fds[0]);
    const int devnull = open("/dev/null", O_WRONLY);
    dup2(devnull, 2);
    execl(PGS_BINARY, PGS_BINARY, "serve-mock", "--suite", gen.suite_path.c_str(), "--bind", "127.0.0.1:0",
          static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  char ch = 0;
  while (read(fds[0], &ch, 1) == 1 && ch != '\n') line.push_back(ch);
  close(fds[0]);
  REQUIRE_FALSE(line.empty());
  const std::string url = "http://" + json::parse(line)["listening"].get<std::string>();

  const Proc local = pgs_cmd("search --suite " + gen.suite_path + " --lemma L1 --budget 300");
  const Proc remote = pgs_cmd("search --env-url " + url + " --lemma L1 --budget 300");
  const Proc via_env = pgs_cmd("search --lemma L1 --budget 300", "PGS_ENV_URL=" + url);
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);

  REQUIRE(local.exit_code == 0);
  REQUIRE(remote.exit_code == 0);
  json a = json::parse(local.out);
  json b = json::parse(remote.out);
  json c = json::parse(via_env.out);
  a.erase("wall_clock_s");
  b.erase("wall_clock_s");
  c.erase("wall_clock_s");
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("an unreachable prover exits with the connection code") {
  const Proc p = pgs_cmd("search --env-url http://127.0.0.1:1 --lemma L0");
  CHECK(p.exit_code == 3);
  const json j = json::parse(p.out);
  CHECK(j["error"]["code"] == "connection");
  CHECK(j["error"]["message"].get<std::string>().find("retry") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(pgs_cmd("").exit_code == 2);
  CHECK(pgs_cmd("search").exit_code == 2);
  CHECK(pgs_cmd("search --lemma L0").exit_code == 2);
  CHECK(pgs_cmd("frobnicate").exit_code == 2);
}

TEST_CASE("train twice with one worker and seed 7 gives identical reports") {
  const std::string dir = fresh_dir("train");
  const GenOutput gen = small_suite(dir, env::Polarity::Universal, 4);
  const std::string config = dir + "/config.json";
  {
    std::ofstream f(config);
    f << json{{"model", {{"d", 16}, {"n_layers", 1}, {"ffn_dim", 32}}},
              {"run", {{"max_searches", 8}}},
              {"buffer", {{"capacity", 64}, {"min_fill", 0.05}}},
              {"train", {{"batch_size", 4}}},
              {"budget", {{"initial", 5}}}}
             .dump();
  }
  const std::string args = "train --config " + config + " --suite " + gen.suite_path + " --workers 1 --seed 7 --out " +
                           dir + "/run";
  const Proc a = pgs_cmd(args);
  const std::string ck = slurp(dir + "/run/checkpoint.pgsck");
  const Proc b = pgs_cmd(args);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(slurp(dir + "/run/checkpoint.pgsck") == ck);
  const json rep = json::parse(a.out);
  CHECK(rep["searches"] > 0);
  CHECK(rep["searches"] <= 8);
}

TEST_CASE("config files") {
  const std::string dir = fresh_dir("config");
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"serach", json::object()}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"search", {{"gama", 0.9}}}}), ConfigError);
  }
  SUBCASE("type errors are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"seed", "seven"}}), ConfigError);
  }
  SUBCASE("values are read and round-trip") {
    const Config c = config_from_json(json{{"seed", 11}, {"search", {{"gamma", 0.8}, {"call_timeout_s", 0.5}}}});
    CHECK(c.seed == 11);
    CHECK(c.search.gamma == 0.8);
    CHECK(c.search.call_timeout == Micros{500'000});
    CHECK(config_from_json(c.to_json()).to_json() == c.to_json());
  }
  SUBCASE("invalid values are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"search", {{"gamma", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"budget", {{"growth", 1.0}}}}), ConfigError);
  }
  SUBCASE("env URL precedence") {
    Config c;
    c.env.url = "http://from-config:1";
    unsetenv(env::kEnvUrlVariable);
    CHECK(effective_env_url(c) == "http://from-config:1");
    setenv(env::kEnvUrlVariable, "http://from-env:2", 1);
    CHECK(effective_env_url(c) == "http://from-env:2");
    CHECK(effective_env_url(c, "http://from-flag:3") == "http://from-flag:3");
    unsetenv(env::kEnvUrlVariable);
  }
  SUBCASE("a broken config file exits with the config code") {
    {
      std::ofstream f(dir + "/bad.json");
      f << R"({"search": {"nope": 1}})";
    }
    const Proc p = pgs_cmd("search --config " + dir + "/bad.json --lemma L0");
    CHECK(p.exit_code == 2);
    CHECK(json::parse(p.out)["error"]["code"] == "config");
  }
}
