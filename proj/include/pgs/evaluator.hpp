#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "pgs/nn/model.hpp"
#include "pgs/nn/tokenizer.hpp"
#include "pgs/proof_graph.hpp"
#include "pgs/training_example.hpp"

namespace pgs {

/// Prior and value for one state. exp(log_priors) sums to 1.
struct EvaluatorOutput {
  std::vector<double> log_priors;
  double value = 0.0;
};

/// Source of priors and values for the search.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvaluatorOutput evaluate(std::span<const ProofMethod> methods) = 0;
  virtual std::string name() const = 0;
};

/// softmax((logits - lambda * ranks) / temperature). Throws
/// std::invalid_argument when temperature <= 0 or the lengths differ.
std::vector<double> blend_with_heuristic(std::span<const double> logits, std::span<const std::uint32_t> ranks,
                                         double lambda, double temperature);

std::vector<double> log_softmax(std::span<const double> logits);

/// Equal logits and a fixed value. With lambda > 0 in the search this is
/// the heuristic-only prior.
class UniformEvaluator final : public Evaluator {
 public:
  explicit UniformEvaluator(double value = 0.0) : value_(value) {}
  EvaluatorOutput evaluate(std::span<const ProofMethod> methods) override;
  std::string name() const override { return "uniform"; }

 private:
  double value_;
};

/// Wraps another evaluator and adds a constant to its value.
class ValueOffsetEvaluator final : public Evaluator {
 public:
  ValueOffsetEvaluator(Evaluator& inner, double offset) : inner_(inner), offset_(offset) {}
  EvaluatorOutput evaluate(std::span<const ProofMethod> methods) override;
  std::string name() const override { return inner_.name() + "+offset"; }

 private:
  Evaluator& inner_;
  double offset_;
};

struct TrainParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t batch_size = 16;
  double value_weight = 1.0;

  void validate() const;
};

struct Losses {
  double policy = 0.0;
  double value = 0.0;
  double total() const { return policy + value; }
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam moments for every parameter of a model, in model order.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<nn::Matrix> m;
  std::vector<nn::Matrix> v;
};

/// The transformer policy/value network together with its tokenizer and
/// optimizer state. Not thread-safe; the evaluation service serializes use.
class NetworkEvaluator final : public Evaluator {
 public:
  NetworkEvaluator(nn::Tokenizer tokenizer, nn::ModelConfig config, std::uint64_t seed);
  NetworkEvaluator(nn::Tokenizer tokenizer, nn::Model model);

  EvaluatorOutput evaluate(std::span<const ProofMethod> methods) override;
  std::string name() const override { return "network"; }

  /// CE(log_priors, action) + value_weight * MSE(v, v_t), averaged over the
  /// batch, then one clipped Adam update. Throws TrainingDiverged on a
  /// non-finite loss or gradient, leaving the weights untouched.
  Losses train_step(std::span<const TrainingExample> batch, const TrainParams& params);
  /// Loss and gradients without an update (gradients are left in the model).
  Losses compute_gradients(std::span<const TrainingExample> batch, const TrainParams& params);

  nn::Model& model() { return model_; }
  const nn::Model& model() const { return model_; }
  const nn::Tokenizer& tokenizer() const { return tokenizer_; }
  std::uint64_t steps() const { return adam_.step; }
  void set_steps(std::uint64_t s) { adam_.step = s; }

 private:
  nn::Tokenizer tokenizer_;
  nn::Model model_;
  AdamState adam_;
};

}  // namespace pgs
