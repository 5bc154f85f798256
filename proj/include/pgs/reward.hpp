#pragma once

#include <chrono>

namespace pgs {

using Micros = std::chrono::microseconds;

struct RewardParams {
  double beta = 0.1;          // branching penalty weight
  double alpha = 0.1;         // soft-time penalty weight
  double tau = 0.1;           // hard-timeout penalty weight
  Micros t_clip{2'000'000};
  double hard_penalty = 1.0;  // h when the retry path was taken

  void validate() const;
};

enum class EdgeKind { Normal, Terminal, ToAnd };

/// Relative growth in applicable methods over the worst branching seen on the
/// path so far, clamped to [0, 1].
double branching_penalty(std::size_t child_method_count, std::size_t path_max_branching);

double soft_time_penalty(Micros elapsed, Micros t_clip);

/// R(s,a). Terminal and AND-producing edges carry only the base cost.
double edge_reward(EdgeKind kind, double b, double t, bool hard_timeout, const RewardParams& params);

}  // namespace pgs
