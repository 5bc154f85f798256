#include "pgs/replay_buffer.hpp"

#include <algorithm>
#include <fstream>

namespace pgs {

nlohmann::json to_json(const TrainingExample& e) {
  nlohmann::json methods = nlohmann::json::array();
  for (const ProofMethod& m : e.methods) methods.push_back({{"id", m.id}, {"text", m.text}, {"rank", m.rank}});
  return {{"methods", std::move(methods)},
          {"action", e.action},
          {"v_t", e.value_target},
          {"draw_count", e.draw_count},
          {"origin", e.origin}};
}

TrainingExample training_example_from_json(const nlohmann::json& j) {
  TrainingExample e;
  for (const auto& m : j.at("methods")) {
    e.methods.push_back({m.at("id").get<std::string>(), m.at("text").get<std::string>(), m.at("rank").get<std::uint32_t>()});
  }
  e.action = j.at("action").get<std::uint32_t>();
  e.value_target = j.at("v_t").get<double>();
  e.draw_count = j.value("draw_count", std::uint64_t{0});
  e.origin = j.value("origin", std::string{});
  if (e.action >= e.methods.size()) throw std::invalid_argument("training example action out of range");
  return e;
}

void BufferParams::validate() const {
  if (capacity < 1) throw std::invalid_argument("buffer.capacity must be >= 1");
  if (max_draws < 1) throw std::invalid_argument("buffer.max_draws must be >= 1");
  if (!(min_fill > 0.0 && min_fill <= 1.0)) throw std::invalid_argument("buffer.min_fill must lie in (0, 1]");
}

ReplayBuffer::ReplayBuffer(BufferParams params) : params_(params) { params_.validate(); }

void ReplayBuffer::push(TrainingExample example) {
  example.draw_count = 0;
  std::lock_guard lock(mu_);
  if (items_.size() >= params_.capacity) items_.pop_front();
  items_.push_back(std::move(example));
  ++pushed_;
}

bool ReplayBuffer::ready_locked() const {
  if (items_.empty()) return false;
  if (static_cast<double>(items_.size()) < params_.min_fill * static_cast<double>(params_.capacity)) return false;
  std::uint64_t least = items_.front().draw_count;
  for (const auto& e : items_) least = std::min(least, e.draw_count);
  return least < params_.max_draws;
}

bool ReplayBuffer::ready() const {
  std::lock_guard lock(mu_);
  return ready_locked();
}

std::vector<TrainingExample> ReplayBuffer::sample_batch(std::size_t k, std::mt19937_64& rng) {
  std::lock_guard lock(mu_);
  if (!ready_locked()) throw BufferNotReady("replay buffer is not ready for sampling");
  if (k == 0 || k > items_.size()) throw std::invalid_argument("batch size must lie in [1, buffer size]");
  std::vector<std::size_t> pool(items_.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t draw = 0; draw < k; ++draw) {
    double total = 0.0;
    for (std::size_t i : pool) total += 1.0 / (1.0 + static_cast<double>(items_[i].draw_count));
    double u = unit(rng) * total;
    std::size_t chosen = pool.size() - 1;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      u -= 1.0 / (1.0 + static_cast<double>(items_[pool[j]].draw_count));
      if (u < 0.0) {
        chosen = j;
        break;
      }
    }
    picked.push_back(pool[chosen]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  std::vector<TrainingExample> out;
  out.reserve(k);
  for (std::size_t i : picked) {
    ++items_[i].draw_count;
    out.push_back(items_[i]);
  }
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::uint64_t ReplayBuffer::total_pushed() const {
  std::lock_guard lock(mu_);
  return pushed_;
}

std::vector<TrainingExample> ReplayBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  return {items_.begin(), items_.end()};
}

std::vector<double> ReplayBuffer::draw_probabilities() const {
  std::lock_guard lock(mu_);
  std::vector<double> w;
  w.reserve(items_.size());
  double total = 0.0;
  for (const auto& e : items_) {
    w.push_back(1.0 / (1.0 + static_cast<double>(e.draw_count)));
    total += w.back();
  }
  for (double& x : w) x /= total;
  return w;
}

void ReplayBuffer::save(const std::string& path) const {
  std::lock_guard lock(mu_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write buffer snapshot '" + path + "'");
  for (const auto& e : items_) out << to_json(e).dump() << '\n';
}

void ReplayBuffer::restore(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open buffer snapshot '" + path + "'");
  std::deque<TrainingExample> loaded;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      TrainingExample e = training_example_from_json(nlohmann::json::parse(line));
      loaded.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error("buffer snapshot '" + path + "' line " + std::to_string(lineno) + ": " + ex.what());
    }
    if (loaded.size() > params_.capacity) loaded.pop_front();
  }
  std::lock_guard lock(mu_);
  items_ = std::move(loaded);
  pushed_ = items_.size();
}

}  // namespace pgs
