#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "pgs/nn/model.hpp"
#include "pgs/nn/tokenizer.hpp"

namespace pgs::nn {

// File layout:
//   "PSCKPT1\n"
//   u64 little-endian header length
//   JSON header {"format", "config", "tensors": [{name, rows, cols}], "tokenizer",
//                "tokenizer_hash", "step", "meta"}
//   little-endian f64 payload, tensors in header order, row-major
// Only weights are stored; optimizer moments restart on load.

struct Checkpoint {
  Model model;
  Tokenizer tokenizer;
  std::uint64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const Model& model, const Tokenizer& tokenizer, std::uint64_t step,
                     const nlohmann::json& meta = nlohmann::json::object());
/// Throws std::runtime_error on a missing, truncated or inconsistent file.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pgs::nn
