#pragma once

#include <memory>

#include <nlohmann/json.hpp>

#include "pgs/env/environment.hpp"

namespace pgs::env::wire {

// JSON forms used on the prover protocol. Payloads travel base64-encoded.
//   EnvState   {"state": b64, "methods": [{"id","text","rank"}], "terminal": "none"|"solved"|"contradictory"}
//   ProofTree  leaf {"state": b64, "terminal": ...}
//              node {"state": b64, "method": id, "children": [ProofTree|null, ...]}
//   CheckResult {"valid": bool, "proofSize": n, "reason"?: string}

nlohmann::json to_json(const EnvState& s);
EnvState env_state_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ProofTree& t);
std::unique_ptr<ProofTree> proof_tree_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CheckResult& r);
CheckResult check_result_from_json(const nlohmann::json& j);

nlohmann::json error_json(std::string_view code, std::string_view message);

}  // namespace pgs::env::wire
