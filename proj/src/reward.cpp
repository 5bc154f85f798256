#include "pgs/reward.hpp"

#include <algorithm>
#include <stdexcept>

namespace pgs {

void RewardParams::validate() const {
  if (beta < 0 || alpha < 0 || tau < 0) throw std::invalid_argument("reward weights must be nonnegative");
  if (t_clip.count() <= 0) throw std::invalid_argument("reward.t_clip must be positive");
  if (hard_penalty < 0 || hard_penalty > 1) throw std::invalid_argument("reward.hard_penalty must lie in [0,1]");
}

double branching_penalty(std::size_t child_method_count, std::size_t path_max_branching) {
  if (path_max_branching == 0) throw std::invalid_argument("path_max_branching must be >= 1");
  const double excess = (static_cast<double>(child_method_count) - static_cast<double>(path_max_branching)) /
                        static_cast<double>(path_max_branching);
  return std::clamp(excess, 0.0, 1.0);
}

double soft_time_penalty(Micros elapsed, Micros t_clip) {
  if (elapsed.count() < 0) throw std::invalid_argument("elapsed time must be nonnegative");
  if (t_clip.count() <= 0) throw std::invalid_argument("t_clip must be positive");
  return static_cast<double>(std::min(elapsed, t_clip).count()) / static_cast<double>(t_clip.count());
}

double edge_reward(EdgeKind kind, double b, double t, bool hard_timeout, const RewardParams& params) {
  if (kind != EdgeKind::Normal) return -1.0;
  const double h = hard_timeout ? params.hard_penalty : 0.0;
  return -(1.0 + params.beta * b + params.alpha * t + params.tau * h);
}

}  // namespace pgs
