#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pgs/evaluator.hpp"
#include "pgs/nn/checkpoint.hpp"
#include "pgs/nn/model.hpp"
#include "pgs/nn/tokenizer.hpp"

using namespace pgs;
using namespace pgs::nn;

namespace {

std::int32_t char_id(char c) { return Tokenizer::kCharBase + (c - 32); }

std::vector<ProofMethod> methods_of(std::initializer_list<const char*> texts) {
  std::vector<ProofMethod> out;
  std::uint32_t i = 0;
  for (const char* t : texts) {
    out.push_back({"m" + std::to_string(i), t, i});
    ++i;
  }
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 32;
  return c;
}

void zero(Model& m, const std::string& prefix) {
  for (Parameter& p : m.parameters()) {
    if (p.name.rfind(prefix, 0) == 0) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  }
}

ForwardVars run(Model& m, Tape& t, const std::vector<ProofMethod>& ms, const Tokenizer& tok) {
  return m.forward(t, tokenize_state(ms, tok, m.config().caps));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pgs_unit_" + name)).string();
}

}  // namespace

TEST_CASE("character fallback tokenization") {
  const Tokenizer tok;
  const std::vector<ProofMethod> one = methods_of({"Kk"});
  const TokenizedState s = tokenize_state(one, tok, TokenCaps{});
  CHECK(s.ids == std::vector<std::int32_t>{char_id('K'), char_id('k')});
  REQUIRE(s.spans.size() == 1);
  CHECK(s.spans[0] == std::pair<std::size_t, std::size_t>{0, 2});
  CHECK(tok.decode(s.ids) == "Kk");
}

TEST_CASE("two methods get disjoint spans around a separator") {
  const Tokenizer tok;
  const std::vector<ProofMethod> two = methods_of({"ab", "cde"});
  const TokenizedState s = tokenize_state(two, tok, TokenCaps{});
  REQUIRE(s.spans.size() == 2);
  CHECK(s.spans[0].second <= s.spans[1].first);
  CHECK(s.ids[s.spans[0].second] == Tokenizer::kSep);
  CHECK(s.spans[1].second - s.spans[1].first == 3);
}

TEST_CASE("long methods are cut at the token cap and empty texts become unknown") {
  const Tokenizer tok;
  TokenCaps caps;
  caps.max_tokens_per_method = 4;
  const std::vector<ProofMethod> ms = methods_of({"abcdefghij", ""});
  const TokenizedState s = tokenize_state(ms, tok, caps);
  CHECK(s.spans[0].second - s.spans[0].first == 4);
  CHECK(s.spans[1].second - s.spans[1].first == 1);
  CHECK(s.ids[s.spans[1].first] == Tokenizer::kUnk);
}

TEST_CASE("methods beyond the cap are dropped in rank order") {
  const Tokenizer tok;
  TokenCaps caps;
  caps.max_methods = 2;
  std::vector<ProofMethod> ms = methods_of({"a", "b", "c"});
  ms[0].rank = 2;
  ms[2].rank = 0;
  const TokenizedState s = tokenize_state(ms, tok, caps);
  CHECK(s.kept == std::vector<std::size_t>{2, 1});
}

TEST_CASE("trained tokenizer is deterministic and round-trips") {
  const std::vector<std::string> corpus{"simp lemma", "simp goal", "induct lemma", "simp lemma"};
  const Tokenizer a = Tokenizer::train(corpus, 20);
  const Tokenizer b = Tokenizer::train(corpus, 20);
  CHECK(a.merges() == b.merges());
  CHECK(a.hash() == b.hash());
  CHECK_FALSE(a.merges().empty());
  const auto ids = a.encode("simp lemma");
  CHECK(ids.size() < std::string("simp lemma").size());
  CHECK(a.decode(ids) == "simp lemma");
  const std::string path = temp_path("tok.json");
  a.save(path);
  CHECK(Tokenizer::load(path).hash() == a.hash());
  std::filesystem::remove(path);
}

TEST_CASE("zero-weight model gives equal encodings") {
  ModelConfig cfg = small_config();
  cfg.vocab_size = Tokenizer{}.vocab_size();
  Model m(cfg, 3);
  for (Parameter& p : m.parameters()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Tape t(false);
  const ForwardVars fw = run(m, t, methods_of({"alpha", "beta gamma", "d"}), Tokenizer{});
  const Matrix& e = t.value(fw.encodings);
  REQUIRE(e.rows == 3);
  for (std::size_t r = 1; r < e.rows; ++r) {
    for (std::size_t c = 0; c < e.cols; ++c) CHECK(e(r, c) == e(0, c));
  }
}

TEST_CASE("network outputs") {
  ModelConfig cfg = small_config();
  NetworkEvaluator net(Tokenizer{}, cfg, 11);
  const std::vector<ProofMethod> ms = methods_of({"simp", "induct x", "case split"});

  SUBCASE("finite inputs give finite outputs") {
    Tape t(false);
    const ForwardVars fw = run(net.model(), t, ms, net.tokenizer());
    for (double x : t.value(fw.encodings).data) CHECK(std::isfinite(x));
    for (double x : t.value(fw.logits).data) CHECK(std::isfinite(x));
    CHECK(std::isfinite(t.scalar(fw.value)));
  }
  SUBCASE("zero pointer weights give a uniform prior") {
    zero(net.model(), "policy.w");
    const EvaluatorOutput out = net.evaluate(ms);
    for (double lp : out.log_priors) CHECK(std::exp(lp) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("a single method gets prior 1") {
    const EvaluatorOutput out = net.evaluate(methods_of({"only"}));
    REQUIRE(out.log_priors.size() == 1);
    CHECK(std::exp(out.log_priors[0]) == doctest::Approx(1.0));
  }
  SUBCASE("equal encodings give equal logits") {
    zero(net.model(), "embed");
    zero(net.model(), "layer");
    Tape t(false);
    const ForwardVars fw = run(net.model(), t, ms, net.tokenizer());
    const Matrix& l = t.value(fw.logits);
    CHECK(l.data[0] == l.data[1]);
    CHECK(l.data[1] == l.data[2]);
  }
  SUBCASE("zero value head gives value 0") {
    zero(net.model(), "value.w");
    zero(net.model(), "value.b");
    CHECK(net.evaluate(ms).value == 0.0);
  }
  SUBCASE("priors of truncated methods stay normalized") {
    ModelConfig capped = small_config();
    capped.caps.max_methods = 2;
    NetworkEvaluator small(Tokenizer{}, capped, 5);
    const EvaluatorOutput out = small.evaluate(ms);
    double sum = 0.0;
    for (double lp : out.log_priors) sum += std::exp(lp);
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("heuristic blending") {
  const std::vector<double> zeros3{0, 0, 0};
  const std::vector<std::uint32_t> ranks3{0, 1, 2};
  const std::vector<double> p = blend_with_heuristic(zeros3, ranks3, 1.0, 1.0);
  CHECK(p[0] == doctest::Approx(0.6652).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(p[2] == doctest::Approx(0.0900).epsilon(1e-3));
  const std::vector<double> zeros2{0, 0};
  const std::vector<std::uint32_t> ranks2{0, 1};
  const std::vector<double> q = blend_with_heuristic(zeros2, ranks2, 0.0, 1.0);
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(blend_with_heuristic(zeros2, ranks2, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(blend_with_heuristic(zeros3, ranks2, 0.0, 1.0), std::invalid_argument);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(6);
    for (double& x : l) x = u(rng);
    std::vector<std::uint32_t> r{3, 0, 5, 1, 4, 2};
    const std::vector<double> b = blend_with_heuristic(l, r, 100.0, 1.0);
    CHECK(std::max_element(b.begin(), b.end()) - b.begin() == 1);
  }
}

TEST_CASE("repeated training on one example drives the policy loss down") {
  NetworkEvaluator net(Tokenizer{}, small_config(), 21);
  TrainingExample ex;
  ex.methods = methods_of({"simp", "induct x", "case split", "rewrite h"});
  ex.action = 2;
  ex.value_target = -1.5;
  const std::vector<TrainingExample> batch{ex};
  TrainParams tp;
  tp.lr = 1e-3;
  double prev = INFINITY;
  bool monotone = true;
  for (int step = 0; step < 200; ++step) {
    const Losses l = net.train_step(batch, tp);
    monotone = monotone && l.policy < prev;
    prev = l.policy;
  }
  CHECK(monotone);
  CHECK(net.compute_gradients(batch, tp).policy < 0.1);
  CHECK(net.steps() == 200);
}

TEST_CASE("invalid training input is rejected") {
  NetworkEvaluator net(Tokenizer{}, small_config(), 1);
  TrainParams tp;
  CHECK_THROWS_AS(net.train_step({}, tp), std::invalid_argument);
  TrainingExample ex;
  ex.methods = methods_of({"a"});
  ex.action = 3;
  const std::vector<TrainingExample> batch{ex};
  CHECK_THROWS_AS(net.train_step(batch, tp), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  const std::vector<std::string> corpus{"simp lemma", "simp goal"};
  const Tokenizer tok = Tokenizer::train(corpus, 8);
  NetworkEvaluator net(tok, small_config(), 9);
  const std::string path = temp_path("model.pgsck");
  save_checkpoint(path, net.model(), net.tokenizer(), 17, {{"seed", 9}});
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.step == 17);
  CHECK(ck.meta["seed"] == 9);
  CHECK(ck.tokenizer.hash() == tok.hash());
  CHECK(ck.model.config() == net.model().config());
  NetworkEvaluator back(ck.tokenizer, ck.model);
  const std::vector<ProofMethod> ms = methods_of({"simp", "induct", "goal"});
  const EvaluatorOutput a = net.evaluate(ms);
  const EvaluatorOutput b = back.evaluate(ms);
  CHECK(a.log_priors == b.log_priors);
  CHECK(a.value == b.value);

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, bytes.size() - 9);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}
