#include "pgs/nn/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "pgs/json_util.hpp"

namespace pgs::nn {

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("model: " + what); };
  if (d == 0) bad("d must be positive");
  if (n_heads == 0 || d % n_heads != 0) bad("n_heads must divide d");
  if (ffn_dim == 0) bad("ffn_dim must be positive");
  if (caps.max_methods == 0 || caps.max_tokens_per_method == 0) bad("token caps must be positive");
  if (!(init_scale >= 0.0)) bad("init_scale must be nonnegative");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"n_layers", n_layers},
          {"n_heads", n_heads},
          {"ffn_dim", ffn_dim},
          {"vocab_size", vocab_size},
          {"max_methods", caps.max_methods},
          {"max_tokens_per_method", caps.max_tokens_per_method},
          {"init_scale", init_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  constexpr const char* where = "model";
  require_known_keys(j, {"d", "n_layers", "n_heads", "ffn_dim", "vocab_size", "max_methods", "max_tokens_per_method",
                         "init_scale"},
                     where);
  ModelConfig c;
  read_opt(j, "d", c.d, where);
  read_opt(j, "n_layers", c.n_layers, where);
  read_opt(j, "n_heads", c.n_heads, where);
  read_opt(j, "ffn_dim", c.ffn_dim, where);
  read_opt(j, "vocab_size", c.vocab_size, where);
  read_opt(j, "max_methods", c.caps.max_methods, where);
  read_opt(j, "max_tokens_per_method", c.caps.max_tokens_per_method, where);
  read_opt(j, "init_scale", c.init_scale, where);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Matrix sinusoidal_positions(std::size_t n, std::size_t d) {
  Matrix pe(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * freq;
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

std::size_t Model::add(const std::string& name, std::size_t rows, std::size_t cols, Init init) {
  params_.emplace_back(name, rows, cols);
  inits_.push_back(init);
  return params_.size() - 1;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  if (config_.vocab_size == 0) throw std::invalid_argument("model: vocab_size must be set");
  const std::size_t d = config_.d;
  embed_ = add("embed", config_.vocab_size, d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.wq = add(pre + "wq", d, d);
    L.bq = add(pre + "bq", 1, d, Init::Zero);
    L.wk = add(pre + "wk", d, d);
    L.bk = add(pre + "bk", 1, d, Init::Zero);
    L.wv = add(pre + "wv", d, d);
    L.bv = add(pre + "bv", 1, d, Init::Zero);
    L.wo = add(pre + "wo", d, d);
    L.bo = add(pre + "bo", 1, d, Init::Zero);
    L.ln1_g = add(pre + "ln1.gamma", 1, d, Init::One);
    L.ln1_b = add(pre + "ln1.beta", 1, d, Init::Zero);
    L.w1 = add(pre + "ffn.w1", d, config_.ffn_dim);
    L.b1 = add(pre + "ffn.b1", 1, config_.ffn_dim, Init::Zero);
    L.w2 = add(pre + "ffn.w2", config_.ffn_dim, d);
    L.b2 = add(pre + "ffn.b2", 1, d, Init::Zero);
    L.ln2_g = add(pre + "ln2.gamma", 1, d, Init::One);
    L.ln2_b = add(pre + "ln2.beta", 1, d, Init::Zero);
    layers_.push_back(L);
  }
  pk_w_ = add("policy.key.w", d, d);
  pk_b_ = add("policy.key.b", 1, d, Init::Zero);
  pq_w_ = add("policy.query.w", d, d);
  pq_b_ = add("policy.query.b", 1, d, Init::Zero);
  p_w_ = add("policy.w", d, 1);
  vk_w_ = add("value.key.w", d, d);
  vk_b_ = add("value.key.b", 1, d, Init::Zero);
  vq_w_ = add("value.query.w", d, d);
  vq_b_ = add("value.query.b", 1, d, Init::Zero);
  v_w_ = add("value.w", d, 1);
  v_b_ = add("value.b", 1, 1, Init::Zero);

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& prm = params_[i];
    switch (inits_[i]) {
      case Init::Zero: break;
      case Init::One: std::fill(prm.value.data.begin(), prm.value.data.end(), 1.0); break;
      case Init::Normal: {
        const std::size_t fan_in = i == embed_ ? d : prm.value.rows;
        std::normal_distribution<double> dist(0.0, config_.init_scale / std::sqrt(static_cast<double>(fan_in)));
        for (double& x : prm.value.data) x = dist(rng);
        break;
      }
    }
  }
  inits_.clear();
}

Parameter& Model::parameter(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

void Model::zero_grad() {
  for (Parameter& p : params_) p.zero_grad();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

ForwardVars Model::forward(Tape& t, const TokenizedState& input) {
  if (input.ids.empty() || input.spans.empty()) throw std::invalid_argument("model input is empty");
  const std::size_t d = config_.d;
  const std::size_t T = input.ids.size();
  Var x = t.add(t.gather_rows(p(t, embed_), input.ids), t.constant(sinusoidal_positions(T, d)));
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Layer& L : layers_) {
    const Var q = t.add_row(t.matmul(x, p(t, L.wq)), p(t, L.bq));
    const Var k = t.add_row(t.matmul(x, p(t, L.wk)), p(t, L.bk));
    const Var v = t.add_row(t.matmul(x, p(t, L.wv)), p(t, L.bv));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Var qh = t.slice_cols(q, h * dh, dh);
      const Var kh = t.slice_cols(k, h * dh, dh);
      const Var vh = t.slice_cols(v, h * dh, dh);
      const Var att = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt));
      outs.push_back(t.matmul(att, vh));
    }
    const Var heads_out = heads == 1 ? outs[0] : t.concat_cols(outs);
    const Var attn = t.add_row(t.matmul(heads_out, p(t, L.wo)), p(t, L.bo));
    x = t.layer_norm(t.add(x, attn), p(t, L.ln1_g), p(t, L.ln1_b));
    const Var hidden = t.gelu(t.add_row(t.matmul(x, p(t, L.w1)), p(t, L.b1)));
    const Var ffn = t.add_row(t.matmul(hidden, p(t, L.w2)), p(t, L.b2));
    x = t.layer_norm(t.add(x, ffn), p(t, L.ln2_g), p(t, L.ln2_b));
  }
  const Var e = t.segment_mean(x, input.spans);
  const Var pooled = t.sum_rows(t.tanh(e));

  const Var keys = t.add_row(t.matmul(e, p(t, pk_w_)), p(t, pk_b_));
  const Var query = t.add_row(t.matmul(pooled, p(t, pq_w_)), p(t, pq_b_));
  const Var logits = t.matmul(t.tanh(t.add_row(keys, query)), p(t, p_w_));

  const Var vkeys = t.add_row(t.matmul(e, p(t, vk_w_)), p(t, vk_b_));
  const Var vquery = t.add_row(t.matmul(pooled, p(t, vq_w_)), p(t, vq_b_));
  const Var scores = t.matmul(t.tanh(t.add_row(vkeys, vquery)), p(t, v_w_));
  const Var value = t.add(t.mean_all(scores), p(t, v_b_));
  return {e, logits, value};
}

}  // namespace pgs::nn
