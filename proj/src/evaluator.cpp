#include "pgs/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pgs {

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  const double lse = m + std::log(z);
  std::vector<double> out(logits.begin(), logits.end());
  for (double& x : out) x -= lse;
  return out;
}

std::vector<double> blend_with_heuristic(std::span<const double> logits, std::span<const std::uint32_t> ranks,
                                         double lambda, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("blend temperature must be positive");
  if (logits.size() != ranks.size()) throw std::invalid_argument("logits and ranks differ in length");
  std::vector<double> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (logits[i] - lambda * static_cast<double>(ranks[i])) / temperature;
  std::vector<double> p = log_softmax(z);
  for (double& x : p) x = std::exp(x);
  return p;
}

EvaluatorOutput UniformEvaluator::evaluate(std::span<const ProofMethod> methods) {
  EvaluatorOutput out;
  out.value = value_;
  if (!methods.empty()) out.log_priors.assign(methods.size(), -std::log(static_cast<double>(methods.size())));
  return out;
}

EvaluatorOutput ValueOffsetEvaluator::evaluate(std::span<const ProofMethod> methods) {
  EvaluatorOutput out = inner_.evaluate(methods);
  out.value += offset_;
  return out;
}

void TrainParams::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("train: " + what); };
  if (!(lr > 0.0)) bad("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) bad("eps must be positive");
  if (!(clip_norm > 0.0)) bad("clip_norm must be positive");
  if (batch_size == 0) bad("batch_size must be >= 1");
  if (value_weight < 0.0) bad("value_weight must be nonnegative");
}

namespace {

nn::ModelConfig with_vocab(nn::ModelConfig c, const nn::Tokenizer& tok) {
  if (c.vocab_size == 0) c.vocab_size = tok.vocab_size();
  if (c.vocab_size != tok.vocab_size()) throw std::invalid_argument("model vocabulary does not match the tokenizer");
  return c;
}

void init_adam(AdamState& a, const nn::Model& m) {
  a.m.clear();
  a.v.clear();
  for (const nn::Parameter& p : m.parameters()) {
    a.m.emplace_back(p.value.rows, p.value.cols);
    a.v.emplace_back(p.value.rows, p.value.cols);
  }
}

}  // namespace

NetworkEvaluator::NetworkEvaluator(nn::Tokenizer tokenizer, nn::ModelConfig config, std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), model_(with_vocab(config, tokenizer_), seed) {
  init_adam(adam_, model_);
}

NetworkEvaluator::NetworkEvaluator(nn::Tokenizer tokenizer, nn::Model model)
    : tokenizer_(std::move(tokenizer)), model_(std::move(model)) {
  if (model_.config().vocab_size != tokenizer_.vocab_size()) {
    throw std::invalid_argument("model vocabulary does not match the tokenizer");
  }
  init_adam(adam_, model_);
}

EvaluatorOutput NetworkEvaluator::evaluate(std::span<const ProofMethod> methods) {
  EvaluatorOutput out;
  if (methods.empty()) return out;
  const nn::TokenizedState input = nn::tokenize_state(methods, tokenizer_, model_.config().caps);
  nn::Tape tape(false);
  const nn::ForwardVars fw = model_.forward(tape, input);
  const nn::Matrix& kept = tape.value(fw.logits);
  double floor = std::numeric_limits<double>::infinity();
  for (double x : kept.data) floor = std::min(floor, x);
  std::vector<double> logits(methods.size(), floor);
  for (std::size_t k = 0; k < input.kept.size(); ++k) logits[input.kept[k]] = kept.data[k];
  out.log_priors = log_softmax(logits);
  out.value = tape.scalar(fw.value);
  for (double x : out.log_priors) {
    if (!std::isfinite(x)) throw std::runtime_error("network produced a non-finite prior");
  }
  if (!std::isfinite(out.value)) throw std::runtime_error("network produced a non-finite value");
  return out;
}

Losses NetworkEvaluator::compute_gradients(std::span<const TrainingExample> batch, const TrainParams& params) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a non-empty batch");
  model_.zero_grad();
  Losses total;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const TrainingExample& ex : batch) {
    if (ex.methods.empty() || ex.action >= ex.methods.size()) {
      throw std::invalid_argument("training example action is out of range");
    }
    const nn::TokenizedState input = nn::tokenize_state(ex.methods, tokenizer_, model_.config().caps);
    nn::Tape t(true);
    const nn::ForwardVars fw = model_.forward(t, input);
    // Truncated methods enter the softmax with the smallest kept logit, detached.
    std::size_t target = input.kept.size();
    for (std::size_t k = 0; k < input.kept.size(); ++k) {
      if (input.kept[k] == ex.action) target = k;
    }
    nn::Var logits = fw.logits;
    const std::size_t dropped = ex.methods.size() - input.kept.size();
    if (dropped > 0) {
      const nn::Matrix& kv = t.value(fw.logits);
      const double floor = *std::min_element(kv.data.begin(), kv.data.end());
      std::size_t pos = input.kept.size();
      if (target == input.kept.size()) {
        // position of the action among the dropped methods
        std::vector<bool> is_kept(ex.methods.size(), false);
        for (auto k : input.kept) is_kept[k] = true;
        for (std::size_t i = 0; i < ex.action; ++i) {
          if (!is_kept[i]) ++pos;
        }
        target = pos;
      }
      const nn::Var rest = t.constant(nn::Matrix(1, dropped, floor));
      const nn::Var row = t.transpose(fw.logits);
      const std::vector<nn::Var> parts{row, rest};
      logits = t.transpose(t.concat_cols(parts));
    }
    const nn::Var logp = t.log_softmax_col(logits);
    const nn::Var ce = t.scale(t.pick(logp, target, 0), -1.0);
    const nn::Var diff = t.add_scalar(fw.value, -ex.value_target);
    const nn::Var mse = t.mul(diff, diff);
    const nn::Var loss = t.scale(t.add(ce, t.scale(mse, params.value_weight)), inv_b);
    total.policy += t.scalar(ce) * inv_b;
    total.value += t.scalar(mse) * inv_b;
    if (!std::isfinite(t.scalar(loss))) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << adam_.step << " (policy " << t.scalar(ce) << ", value " << t.scalar(mse)
          << ", target " << ex.value_target << ", origin " << ex.origin << ")";
      throw TrainingDiverged(msg.str());
    }
    t.backward(loss);
  }
  return total;
}

Losses NetworkEvaluator::train_step(std::span<const TrainingExample> batch, const TrainParams& params) {
  params.validate();
  const Losses losses = compute_gradients(batch, params);
  auto& ps = model_.parameters();
  double sq = 0.0;
  for (const nn::Parameter& p : ps) {
    for (double g : p.grad.data) sq += g * g;
  }
  if (!std::isfinite(sq)) {
    for (const nn::Parameter& p : ps) {
      for (double g : p.grad.data) {
        if (!std::isfinite(g)) throw TrainingDiverged("non-finite gradient in '" + p.name + "'");
      }
    }
    throw TrainingDiverged("non-finite gradient norm");
  }
  const double norm = std::sqrt(sq);
  const double clip = norm > params.clip_norm ? params.clip_norm / norm : 1.0;
  ++adam_.step;
  const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(adam_.step));
  const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(adam_.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    nn::Parameter& p = ps[i];
    nn::Matrix& m = adam_.m[i];
    nn::Matrix& v = adam_.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k] * clip;
      m.data[k] = params.beta1 * m.data[k] + (1.0 - params.beta1) * g;
      v.data[k] = params.beta2 * v.data[k] + (1.0 - params.beta2) * g * g;
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      p.value.data[k] -= params.lr * mhat / (std::sqrt(vhat) + params.eps);
    }
  }
  return losses;
}

}  // namespace pgs
