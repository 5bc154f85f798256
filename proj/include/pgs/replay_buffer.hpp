#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgs/training_example.hpp"

namespace pgs {

struct BufferParams {
  std::size_t capacity = 4096;
  std::uint64_t max_draws = 4;  // M
  double min_fill = 0.25;       // f

  void validate() const;
};

class BufferNotReady : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// FIFO store of training examples. Safe for concurrent producers and a
/// single consumer; every operation holds the buffer lock.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(BufferParams params);

  /// Appends with draw_count 0; evicts the oldest example at capacity.
  void push(TrainingExample example);
  /// Fill >= f * capacity and the least-drawn example has fewer than M draws.
  bool ready() const;
  /// k distinct examples, each drawn with probability proportional to
  /// 1 / (1 + draw_count); their counts are incremented. Throws BufferNotReady.
  std::vector<TrainingExample> sample_batch(std::size_t k, std::mt19937_64& rng);

  std::size_t size() const;
  const BufferParams& params() const { return params_; }
  std::uint64_t total_pushed() const;
  std::vector<TrainingExample> snapshot() const;

  /// JSON-lines snapshot, one example per line, oldest first.
  void save(const std::string& path) const;
  void restore(const std::string& path);

  /// Selection probability of each stored example for a single draw.
  std::vector<double> draw_probabilities() const;

 private:
  bool ready_locked() const;

  BufferParams params_;
  mutable std::mutex mu_;
  std::deque<TrainingExample> items_;
  std::uint64_t pushed_ = 0;
};

}  // namespace pgs
