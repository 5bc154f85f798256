#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/proof_graph.hpp"

namespace pgs {

/// (s, a, v_t): the observation is the method list of a resolved OR state,
/// `action` indexes into it, and `value_target` is the network-free backed-up
/// value of the state.
struct TrainingExample {
  std::vector<ProofMethod> methods;
  std::uint32_t action = 0;
  double value_target = 0.0;
  std::uint64_t draw_count = 0;
  std::string origin;  // lemma and state key, for debugging

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

nlohmann::json to_json(const TrainingExample& e);
TrainingExample training_example_from_json(const nlohmann::json& j);

}  // namespace pgs
