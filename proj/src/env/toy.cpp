#include "pgs/env/toy.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "pgs/env/wire.hpp"

namespace pgs::env {

namespace {

constexpr std::string_view kPayloadMagic = "PGS1";
constexpr std::uint32_t kMaxStatesLimit = 4096;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

// Method stems loosely modelled on a constraint solver's goal display.
constexpr std::array<const char*, 3> kGoodStems = {"solve( !Ltk(", "solve( Fr(", "splitEqs("};
constexpr std::array<const char*, 3> kNeutralStems = {"solve( !KU(", "solve( St_R(", "induction("};
constexpr std::array<const char*, 3> kBadStems = {"sources(", "solve( Out(", "solve( !Pk("};
constexpr std::array<const char*, 8> kArgs = {"~ltk", "~k.1", "pk(~x)", "h(~n)",
                                              "sign(m, ~sk)", "senc(x, k)", "<a, b>", "$A"};

enum class Quality { Good, Neutral, Bad };

}  // namespace

void ToyInstance::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("toy instance: " + what); };
  if (lemma.empty()) bad("lemma id must be non-empty");
  if (explicit_graph) {
    if (explicit_graph->states.empty()) bad("explicit graph has no states");
    if (explicit_graph->root >= explicit_graph->states.size()) bad("explicit root out of range");
    for (const auto& s : explicit_graph->states) {
      if (s.terminal != Terminal::None && !s.methods.empty()) bad("terminal explicit state lists methods");
      for (const auto& m : s.methods) {
        for (auto c : m.children) {
          if (c >= explicit_graph->states.size()) bad("explicit child index out of range");
        }
      }
    }
    if (explicit_graph->states.size() > kMaxStatesLimit) bad("explicit graph exceeds the state bound");
    return;
  }
  if (min_branching < 1 || min_branching > max_branching) bad("branching range must satisfy 1 <= min <= max");
  if (max_branching > 32) bad("branching above 32 is not supported");
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) bad(std::string(name) + " must lie in [0,1]");
  };
  prob(close_prob, "close_prob");
  prob(split_prob, "split_prob");
  prob(duplicate_prob, "duplicate_prob");
  prob(informativeness, "informativeness");
  prob(slow_prob, "slow_prob");
  prob(diverge_prob, "diverge_prob");
  if (close_prob + split_prob > 1.0) bad("close_prob + split_prob must not exceed 1");
  if (slow_prob + diverge_prob > 1.0) bad("slow_prob + diverge_prob must not exceed 1");
  if (max_split < 2) bad("max_split must be >= 2");
  if (max_states < 1 || max_states > kMaxStatesLimit) {
    bad("max_states must lie in [1, " + std::to_string(kMaxStatesLimit) + "]");
  }
}

std::size_t ToyCalculus::nonterminal_count() const {
  return static_cast<std::size_t>(std::count_if(states.begin(), states.end(),
                                                [](const State& s) { return s.terminal == Terminal::None; }));
}

std::string ToyCalculus::payload_of(std::uint32_t state) const {
  std::string out(kPayloadMagic);
  put_u32(out, static_cast<std::uint32_t>(lemma.size()));
  out += lemma;
  put_u32(out, state);
  return out;
}

EnvState ToyCalculus::env_state(std::uint32_t state) const {
  const State& s = states.at(state);
  EnvState out{payload_of(state), {}, s.terminal};
  out.methods.reserve(s.methods.size());
  for (std::size_t i = 0; i < s.methods.size(); ++i) {
    out.methods.push_back(ProofMethod{s.methods[i].id, s.methods[i].text, static_cast<std::uint32_t>(i)});
  }
  return out;
}

std::pair<std::string, std::uint32_t> decode_toy_payload(std::string_view payload) {
  const auto fail = [] { return EnvError(EnvError::Code::Decode, "malformed toy state payload"); };
  if (payload.size() < kPayloadMagic.size() + 8 || payload.substr(0, kPayloadMagic.size()) != kPayloadMagic) {
    throw fail();
  }
  const std::uint32_t len = get_u32(payload, kPayloadMagic.size());
  const std::size_t expected = kPayloadMagic.size() + 4 + static_cast<std::size_t>(len) + 4;
  if (payload.size() != expected) throw fail();
  std::string lemma(payload.substr(kPayloadMagic.size() + 4, len));
  return {std::move(lemma), get_u32(payload, expected - 4)};
}

namespace {

ToyCalculus from_explicit(const ToyInstance& inst) {
  const ExplicitGraph& g = *inst.explicit_graph;
  ToyCalculus c;
  c.lemma = inst.lemma;
  c.root = g.root;
  c.states.reserve(g.states.size());
  for (const auto& s : g.states) {
    ToyCalculus::State out;
    out.terminal = s.terminal;
    for (const auto& m : s.methods) {
      out.methods.push_back({m.id, m.text, m.children, Micros{m.latency_us}, m.diverges});
    }
    c.states.push_back(std::move(out));
  }
  return c;
}

class Generator {
 public:
  explicit Generator(const ToyInstance& inst) : inst_(inst), rng_(inst.seed) {}

  ToyCalculus run() {
    calc_.lemma = inst_.lemma;
    const bool root_sat = inst_.polarity == Polarity::Existential;
    if (inst_.depth == 0) {
      calc_.root = new_terminal(root_sat, 0);
    } else {
      calc_.root = new_open(root_sat, 0);
    }
    for (std::size_t head = 0; head < queue_.size(); ++head) grow(queue_[head]);
    assign_order_and_text();
    return std::move(calc_);
  }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  std::uint32_t uniform_int(std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng_);
  }

  std::uint32_t new_terminal(bool sat, std::uint32_t level) {
    ToyCalculus::State s;
    s.terminal = sat ? Terminal::Solved : Terminal::Contradictory;
    s.level = level;
    calc_.states.push_back(std::move(s));
    sat_.push_back(sat);
    return static_cast<std::uint32_t>(calc_.states.size() - 1);
  }

  std::uint32_t new_open(bool sat, std::uint32_t level) {
    ToyCalculus::State s;
    s.level = level;
    calc_.states.push_back(std::move(s));
    sat_.push_back(sat);
    const auto idx = static_cast<std::uint32_t>(calc_.states.size() - 1);
    pools_[{level, sat}].push_back(idx);
    queue_.push_back(idx);
    ++open_count_;
    return idx;
  }

  std::uint32_t make_child(std::uint32_t level, bool sat, const std::vector<std::uint32_t>& taken) {
    if (level >= inst_.depth) return new_terminal(sat, level);
    std::vector<std::uint32_t> pool;
    if (auto it = pools_.find({level, sat}); it != pools_.end()) {
      for (auto s : it->second) {
        if (std::find(taken.begin(), taken.end(), s) == taken.end()) pool.push_back(s);
      }
    }
    const bool full = open_count_ >= inst_.max_states;
    const bool duplicate = uniform() < inst_.duplicate_prob;
    if (!pool.empty() && (duplicate || full)) {
      return pool[uniform_int(0, static_cast<std::uint32_t>(pool.size() - 1))];
    }
    if (full) return new_terminal(sat, level);
    return new_open(sat, level);
  }

  void grow(std::uint32_t state) {
    const std::uint32_t level = calc_.states[state].level;
    const bool sat = sat_[state];
    const std::uint32_t count = uniform_int(inst_.min_branching, inst_.max_branching);
    std::vector<ToyCalculus::Method> methods;
    for (std::uint32_t j = 0; j < count; ++j) {
      ToyCalculus::Method m;
      m.id = "m" + std::to_string(j);
      const double lat = uniform();
      if (lat < inst_.diverge_prob) {
        m.diverges = true;
        m.latency = Micros::max();
      } else if (lat < inst_.diverge_prob + inst_.slow_prob) {
        m.latency = Micros{static_cast<std::int64_t>(uniform_int(1'200'000, 3'500'000))};
      } else {
        m.latency = Micros{static_cast<std::int64_t>(uniform_int(200, 20'000))};
      }
      const double kind = uniform();
      if (kind < inst_.close_prob) {
        if (sat) m.children.push_back(new_terminal(true, level + 1));
      } else if (kind < inst_.close_prob + inst_.split_prob) {
        const std::uint32_t k = uniform_int(2, inst_.max_split);
        const std::uint32_t witness = uniform_int(0, k - 1);
        for (std::uint32_t i = 0; i < k; ++i) {
          const bool child_sat = sat && (i == witness || uniform() < 0.3);
          m.children.push_back(make_child(level + 1, child_sat, m.children));
        }
      } else {
        m.children.push_back(make_child(level + 1, sat, {}));
      }
      methods.push_back(std::move(m));
    }
    calc_.states[state].methods = std::move(methods);
  }

  void assign_order_and_text() {
    const OracleResult oracle = oracle_resolve(calc_, kMaxStatesLimit);
    for (std::uint32_t s = 0; s < calc_.states.size(); ++s) {
      auto& methods = calc_.states[s].methods;
      if (methods.empty()) continue;
      std::vector<std::optional<std::size_t>> costs;
      std::optional<std::size_t> best;
      for (std::size_t m = 0; m < methods.size(); ++m) {
        costs.push_back(method_cost(calc_, oracle, s, m));
        if (costs.back() && (!best || *costs.back() < *best)) best = costs.back();
      }
      std::vector<std::size_t> order(methods.size());
      std::iota(order.begin(), order.end(), 0);
      if (uniform() < inst_.informativeness) {
        std::vector<double> tiebreak(methods.size());
        for (auto& t : tiebreak) t = uniform();
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const std::size_t ca = costs[a].value_or(SIZE_MAX);
          const std::size_t cb = costs[b].value_or(SIZE_MAX);
          if (ca != cb) return ca < cb;
          return tiebreak[a] < tiebreak[b];
        });
      } else {
        std::shuffle(order.begin(), order.end(), rng_);
      }
      for (std::size_t m = 0; m < methods.size(); ++m) {
        Quality q = Quality::Neutral;
        if (!costs[m] || methods[m].diverges) {
          q = Quality::Bad;
        } else if (best && *costs[m] == *best) {
          q = Quality::Good;
        } else if (best && *costs[m] >= *best + 3) {
          q = Quality::Bad;
        }
        const char* stem = nullptr;
        if (uniform() < inst_.informativeness) {
          const auto& pool = q == Quality::Good ? kGoodStems : q == Quality::Bad ? kBadStems : kNeutralStems;
          stem = pool[uniform_int(0, pool.size() - 1)];
        } else {
          const std::uint32_t pick = uniform_int(0, 8);
          stem = pick < 3 ? kGoodStems[pick] : pick < 6 ? kNeutralStems[pick - 3] : kBadStems[pick - 6];
        }
        methods[m].text = std::string(stem) + " " + kArgs[uniform_int(0, kArgs.size() - 1)] + " ) @ #vr." +
                          std::to_string(uniform_int(1, 9));
      }
      std::vector<ToyCalculus::Method> ordered;
      ordered.reserve(methods.size());
      for (std::size_t i : order) ordered.push_back(std::move(methods[i]));
      methods = std::move(ordered);
    }
  }

  const ToyInstance& inst_;
  std::mt19937_64 rng_;
  ToyCalculus calc_;
  std::vector<bool> sat_;
  std::map<std::pair<std::uint32_t, bool>, std::vector<std::uint32_t>> pools_;
  std::vector<std::uint32_t> queue_;
  std::uint32_t open_count_ = 0;
};

}  // namespace

ToyCalculus ToyCalculus::generate(const ToyInstance& inst) {
  inst.validate();
  if (inst.explicit_graph) return from_explicit(inst);
  return Generator(inst).run();
}

ToyEnvironment::ToyEnvironment(const std::vector<ToyInstance>& suite) {
  for (const ToyInstance& inst : suite) {
    ToyCalculus c = ToyCalculus::generate(inst);
    if (!calculi_.emplace(inst.lemma, std::move(c)).second) {
      throw std::invalid_argument("duplicate lemma id '" + inst.lemma + "' in suite");
    }
  }
}

const ToyCalculus& ToyEnvironment::calculus(std::string_view lemma) const {
  auto it = calculi_.find(lemma);
  if (it == calculi_.end()) throw EnvError(EnvError::Code::NotFound, "unknown lemma '" + std::string(lemma) + "'");
  return it->second;
}

std::vector<std::string> ToyEnvironment::lemmas() const {
  std::vector<std::string> out;
  for (const auto& [name, c] : calculi_) out.push_back(name);
  return out;
}

EnvState ToyEnvironment::get_initial_system(std::string_view lemma) {
  const ToyCalculus& c = calculus(lemma);
  return c.env_state(c.root);
}

ExecResult ToyEnvironment::execute_method(std::string_view payload, std::string_view method_id,
                                          Micros timeout) {
  const auto [lemma, index] = decode_toy_payload(payload);
  const ToyCalculus& c = calculus(lemma);
  if (index >= c.states.size()) throw EnvError(EnvError::Code::Decode, "state index out of range");
  const auto& state = c.states[index];
  auto it = std::find_if(state.methods.begin(), state.methods.end(),
                         [&](const ToyCalculus::Method& m) { return m.id == method_id; });
  if (it == state.methods.end()) {
    throw EnvError(EnvError::Code::NotApplicable,
                   "method '" + std::string(method_id) + "' is not applicable at this state");
  }
  ExecResult out;
  if (it->diverges || it->latency > timeout) {
    out.timed_out = true;
    out.elapsed = timeout;
    return out;
  }
  out.elapsed = it->latency;
  out.children.reserve(it->children.size());
  for (auto child : it->children) out.children.push_back(c.env_state(child));
  return out;
}

CheckResult ToyEnvironment::check_proof(const ProofTree& tree) {
  std::pair<std::string, std::uint32_t> decoded;
  try {
    decoded = decode_toy_payload(tree.payload);
  } catch (const EnvError& e) {
    return CheckResult{false, tree.size(), std::string("/: ") + e.what()};
  }
  auto it = calculi_.find(decoded.first);
  if (it == calculi_.end()) return CheckResult{false, tree.size(), "/: unknown lemma"};
  if (decoded.second != it->second.root) {
    return CheckResult{false, tree.size(), "/: root is not the initial system of its lemma"};
  }
  return replay_proof(*this, it->second.env_state(it->second.root), tree);
}

std::vector<ToyInstance> generate_suite(std::uint64_t seed, const SuiteParams& params) {
  if (params.count > 0 && params.prefix.empty()) throw std::invalid_argument("suite prefix must be non-empty");
  std::vector<ToyInstance> out;
  out.reserve(params.count);
  for (std::size_t i = 0; i < params.count; ++i) {
    ToyInstance inst = params.base;
    inst.lemma = params.prefix + std::to_string(i);
    inst.seed = seed * 1000003ULL + i;
    inst.explicit_graph.reset();
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<std::string> method_corpus(const std::vector<ToyInstance>& suite) {
  std::vector<std::string> out;
  for (const ToyInstance& inst : suite) {
    const ToyCalculus c = ToyCalculus::generate(inst);
    for (const auto& s : c.states) {
      for (const auto& m : s.methods) out.push_back(m.text);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ToyInstance> load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open suite file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("suite file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw std::runtime_error("suite file must hold a JSON list of instances");
  std::vector<ToyInstance> out;
  for (const auto& item : j) out.push_back(toy_instance_from_json(item));
  return out;
}

void save_suite(const std::string& path, const std::vector<ToyInstance>& suite) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& inst : suite) j.push_back(to_json(inst));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write suite file '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace pgs::env
