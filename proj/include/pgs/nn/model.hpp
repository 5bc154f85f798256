#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/nn/tensor.hpp"
#include "pgs/nn/tokenizer.hpp"

namespace pgs::nn {

struct ModelConfig {
  std::size_t d = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t vocab_size = 0;  // taken from the tokenizer when 0
  TokenCaps caps;
  double init_scale = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Outputs of one forward pass, as tape variables.
struct ForwardVars {
  Var encodings;  // [L_kept x d]
  Var logits;     // [L_kept x 1]
  Var value;      // [1 x 1]
};

/// Transformer encoder over the concatenated method tokens with a pointer
/// policy head and a pooled value head.
///   x_t   = E[id_t] + PE(t)             (positions run over the whole sequence)
///   layer = post-LN { x + MHA(x) }, { x + W2 gelu(W1 x) }
///   e_i   = mean of x_t over method i's span
///   l_i   = w^T tanh(K e_i + b_k + q),  q = W_q sum_j tanh(e_j) + b_q
///   v     = mean_i u^T tanh(K' e_i + b_k' + q') + b_v
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::uint64_t seed);

  ForwardVars forward(Tape& tape, const TokenizedState& input);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  struct Layer {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  enum class Init { Normal, Zero, One };
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols, Init init = Init::Normal);
  Var p(Tape& t, std::size_t idx) { return t.parameter(params_[idx]); }

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<Init> inits_;
  std::size_t embed_ = 0;
  std::vector<Layer> layers_;
  std::size_t pk_w_ = 0, pk_b_ = 0, pq_w_ = 0, pq_b_ = 0, p_w_ = 0;
  std::size_t vk_w_ = 0, vk_b_ = 0, vq_w_ = 0, vq_b_ = 0, v_w_ = 0, v_b_ = 0;
};

/// Sinusoidal positional encodings, [n x d].
Matrix sinusoidal_positions(std::size_t n, std::size_t d);

}  // namespace pgs::nn
