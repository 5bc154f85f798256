#include "pgs/env/wire.hpp"

#include "pgs/digest.hpp"
#include "pgs/env/toy.hpp"
#include "pgs/json_util.hpp"

namespace pgs::env {

namespace wire {

using nlohmann::json;

namespace {

[[noreturn]] void protocol_error(const std::string& what) { throw EnvError(EnvError::Code::Protocol, what); }

const json& field(const json& j, const char* key) {
  if (!j.is_object()) protocol_error("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) protocol_error(std::string("missing field '") + key + "'");
  return *it;
}

std::string decode_state(const json& j) {
  const json& s = field(j, "state");
  if (!s.is_string()) protocol_error("'state' must be a base64 string");
  try {
    return base64_decode(s.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw EnvError(EnvError::Code::Decode, e.what());
  }
}

}  // namespace

json to_json(const EnvState& s) {
  json methods = json::array();
  for (const ProofMethod& m : s.methods) methods.push_back(json{{"id", m.id}, {"text", m.text}, {"rank", m.rank}});
  return json{{"state", base64_encode(s.payload)}, {"methods", std::move(methods)}, {"terminal", to_string(s.terminal)}};
}

EnvState env_state_from_json(const json& j) {
  EnvState s;
  s.payload = decode_state(j);
  const json& methods = field(j, "methods");
  if (!methods.is_array()) protocol_error("'methods' must be a list");
  try {
    for (const json& m : methods) {
      s.methods.push_back(ProofMethod{m.at("id").get<std::string>(), m.at("text").get<std::string>(),
                                      m.at("rank").get<std::uint32_t>()});
    }
  } catch (const json::exception& e) {
    protocol_error(std::string("bad method entry: ") + e.what());
  }
  const json& t = field(j, "terminal");
  if (!t.is_string()) protocol_error("'terminal' must be a string");
  s.terminal = terminal_from_string(t.get<std::string>());
  return s;
}

json to_json(const ProofTree& t) {
  json j{{"state", base64_encode(t.payload)}};
  if (t.method) {
    j["method"] = *t.method;
    json kids = json::array();
    for (const auto& c : t.children) kids.push_back(c ? to_json(*c) : json(nullptr));
    j["children"] = std::move(kids);
  } else {
    j["terminal"] = to_string(t.terminal);
  }
  return j;
}

std::unique_ptr<ProofTree> proof_tree_from_json(const json& j) {
  auto t = std::make_unique<ProofTree>();
  t->payload = decode_state(j);
  if (auto m = j.find("method"); m != j.end() && !m->is_null()) {
    if (!m->is_string()) protocol_error("'method' must be a string");
    t->method = m->get<std::string>();
    const json& kids = field(j, "children");
    if (!kids.is_array()) protocol_error("'children' must be a list");
    for (const json& c : kids) {
      t->children.push_back(c.is_null() ? nullptr : proof_tree_from_json(c));
    }
  } else {
    const json& term = field(j, "terminal");
    if (!term.is_string()) protocol_error("'terminal' must be a string");
    t->terminal = terminal_from_string(term.get<std::string>());
  }
  return t;
}

json to_json(const CheckResult& r) {
  json j{{"valid", r.valid}, {"proofSize", r.proof_size}};
  if (!r.reason.empty()) j["reason"] = r.reason;
  return j;
}

CheckResult check_result_from_json(const json& j) {
  CheckResult r;
  try {
    r.valid = field(j, "valid").get<bool>();
    r.proof_size = field(j, "proofSize").get<std::size_t>();
    if (auto it = j.find("reason"); it != j.end()) r.reason = it->get<std::string>();
  } catch (const json::exception& e) {
    protocol_error(std::string("bad checkProof response: ") + e.what());
  }
  return r;
}

json error_json(std::string_view code, std::string_view message) {
  return json{{"error", {{"code", code}, {"message", message}}}};
}

}  // namespace wire

namespace {

const char* polarity_name(Polarity p) { return p == Polarity::Universal ? "universal" : "existential"; }

nlohmann::json explicit_to_json(const ExplicitGraph& g) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : g.states) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : s.methods) {
      methods.push_back({{"id", m.id},
                         {"text", m.text},
                         {"children", m.children},
                         {"latency_us", m.latency_us},
                         {"diverges", m.diverges}});
    }
    states.push_back({{"terminal", to_string(s.terminal)}, {"methods", std::move(methods)}});
  }
  return {{"root", g.root}, {"states", std::move(states)}};
}

ExplicitGraph explicit_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"root", "states"}, "explicit");
  ExplicitGraph g;
  read_opt(j, "root", g.root, "explicit");
  if (!j.contains("states") || !j["states"].is_array()) throw ConfigError("explicit.states must be a list");
  for (const auto& js : j["states"]) {
    require_known_keys(js, {"terminal", "methods"}, "explicit.states[]");
    ExplicitGraph::State s;
    std::string term = "none";
    read_opt(js, "terminal", term, "explicit.states[]");
    s.terminal = terminal_from_string(term);
    if (js.contains("methods")) {
      for (const auto& jm : js["methods"]) {
        require_known_keys(jm, {"id", "text", "children", "latency_us", "diverges"}, "explicit.methods[]");
        ExplicitGraph::Method m;
        read_opt(jm, "id", m.id, "explicit.methods[]");
        read_opt(jm, "text", m.text, "explicit.methods[]");
        read_opt(jm, "children", m.children, "explicit.methods[]");
        read_opt(jm, "latency_us", m.latency_us, "explicit.methods[]");
        read_opt(jm, "diverges", m.diverges, "explicit.methods[]");
        if (m.id.empty()) throw ConfigError("explicit method without id");
        s.methods.push_back(std::move(m));
      }
    }
    g.states.push_back(std::move(s));
  }
  return g;
}

}  // namespace

nlohmann::json to_json(const ToyInstance& inst) {
  nlohmann::json j{{"lemma", inst.lemma}};
  if (inst.explicit_graph) {
    j["explicit"] = explicit_to_json(*inst.explicit_graph);
    return j;
  }
  j["seed"] = inst.seed;
  j["depth"] = inst.depth;
  j["branching"] = {inst.min_branching, inst.max_branching};
  j["close_prob"] = inst.close_prob;
  j["split_prob"] = inst.split_prob;
  j["max_split"] = inst.max_split;
  j["duplicate_prob"] = inst.duplicate_prob;
  j["informativeness"] = inst.informativeness;
  j["polarity"] = polarity_name(inst.polarity);
  j["max_states"] = inst.max_states;
  j["slow_prob"] = inst.slow_prob;
  j["diverge_prob"] = inst.diverge_prob;
  return j;
}

ToyInstance toy_instance_from_json(const nlohmann::json& j) {
  constexpr const char* where = "suite instance";
  require_known_keys(j,
                     {"lemma", "seed", "depth", "branching", "close_prob", "split_prob", "max_split",
                      "duplicate_prob", "informativeness", "polarity", "max_states", "slow_prob",
                      "diverge_prob", "explicit"},
                     where);
  ToyInstance inst;
  read_opt(j, "lemma", inst.lemma, where);
  read_opt(j, "seed", inst.seed, where);
  read_opt(j, "depth", inst.depth, where);
  if (j.contains("branching")) {
    std::vector<std::uint32_t> b;
    read_opt(j, "branching", b, where);
    if (b.size() != 2) throw ConfigError("suite instance.branching must be [min, max]");
    inst.min_branching = b[0];
    inst.max_branching = b[1];
  }
  read_opt(j, "close_prob", inst.close_prob, where);
  read_opt(j, "split_prob", inst.split_prob, where);
  read_opt(j, "max_split", inst.max_split, where);
  read_opt(j, "duplicate_prob", inst.duplicate_prob, where);
  read_opt(j, "informativeness", inst.informativeness, where);
  read_opt(j, "max_states", inst.max_states, where);
  read_opt(j, "slow_prob", inst.slow_prob, where);
  read_opt(j, "diverge_prob", inst.diverge_prob, where);
  if (j.contains("polarity")) {
    std::string p;
    read_opt(j, "polarity", p, where);
    if (p == "universal") {
      inst.polarity = Polarity::Universal;
    } else if (p == "existential") {
      inst.polarity = Polarity::Existential;
    } else {
      throw ConfigError("suite instance.polarity must be 'universal' or 'existential'");
    }
  }
  if (j.contains("explicit")) inst.explicit_graph = explicit_from_json(j["explicit"]);
  try {
    inst.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return inst;
}

}  // namespace pgs::env
