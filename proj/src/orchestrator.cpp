#include "pgs/orchestrator.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "pgs/nn/checkpoint.hpp"
#include "pgs/replay_buffer.hpp"

namespace pgs {

std::uint64_t next_budget(std::uint64_t budget, double phi) {
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (!(phi > 1.0)) throw std::invalid_argument("budget growth must be > 1");
  const double grown = std::floor(static_cast<double>(budget) * phi);
  const auto g = static_cast<std::uint64_t>(grown);
  return std::max(budget + 1, g);
}

const char* to_string(LemmaStatus s) {
  switch (s) {
    case LemmaStatus::Pending: return "pending";
    case LemmaStatus::Proven: return "proven";
    case LemmaStatus::Abandoned: return "abandoned";
  }
  return "?";
}

Scheduler::Scheduler(std::vector<std::string> lemmas, std::uint64_t initial_budget) {
  if (lemmas.empty()) throw std::invalid_argument("scheduler needs at least one lemma");
  if (initial_budget < 1) throw std::invalid_argument("initial budget must be >= 1");
  for (std::string& l : lemmas) {
    LemmaState s;
    s.lemma = std::move(l);
    s.budget = initial_budget;
    states_.push_back(std::move(s));
  }
}

std::optional<std::size_t> Scheduler::next() {
  const std::size_t n = states_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (cursor_ + k) % n;
    LemmaState& s = states_[i];
    if (s.status != LemmaStatus::Pending || s.in_flight) continue;
    cursor_ = (i + 1) % n;
    s.in_flight = true;
    ++s.attempts;
    return i;
  }
  return std::nullopt;
}

bool Scheduler::complete() const {
  for (const LemmaState& s : states_) {
    if (s.status == LemmaStatus::Pending) return false;
  }
  return true;
}

bool Scheduler::any_in_flight() const {
  for (const LemmaState& s : states_) {
    if (s.in_flight) return true;
  }
  return false;
}

void Scheduler::finish(std::size_t index, const SearchResult& result, double phi) {
  LemmaState& s = states_.at(index);
  s.in_flight = false;
  s.root_status = result.root_status;
  s.last_expansions = result.expansions;
  s.total_expansions += result.expansions;
  s.env_time += result.env_time;
  const bool proven = is_resolved(result.root_status) && !result.failed_validation;
  if (proven) {
    s.status = LemmaStatus::Proven;
    s.proof_size = result.proof_size();
  } else {
    s.budget = next_budget(s.budget, phi);
  }
}

void Scheduler::crash(std::size_t index, std::uint64_t max_crashes) {
  LemmaState& s = states_.at(index);
  s.in_flight = false;
  ++s.crashes;
  if (s.crashes >= max_crashes) s.status = LemmaStatus::Abandoned;
}

EvaluationService::EvaluationService(NetworkEvaluator& network) : network_(network) {
  thread_ = std::thread([this] { loop(); });
}

EvaluationService::~EvaluationService() { stop(); }

void EvaluationService::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void EvaluationService::post(std::function<void()> task) {
  {
    std::lock_guard lock(mu_);
    if (stopping_) throw std::runtime_error("evaluation service is stopped");
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void EvaluationService::loop() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;  // stopping with nothing left to serve
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

EvaluatorOutput EvaluationService::evaluate(std::span<const ProofMethod> methods) {
  std::promise<EvaluatorOutput> done;
  auto fut = done.get_future();
  post([&] {
    try {
      done.set_value(network_.evaluate(methods));
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  return fut.get();
}

Losses EvaluationService::train(std::span<const TrainingExample> batch, const TrainParams& params) {
  std::promise<Losses> done;
  auto fut = done.get_future();
  post([&] {
    try {
      done.set_value(network_.train_step(batch, params));
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  return fut.get();
}

void EvaluationService::with_network(const std::function<void(NetworkEvaluator&)>& fn) {
  std::promise<void> done;
  auto fut = done.get_future();
  post([&] {
    try {
      fn(network_);
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  fut.get();
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const LemmaState& s : lemmas) {
    rows.push_back({{"lemma", s.lemma},
                    {"status", pgs::to_string(s.status)},
                    {"root_status", pgs::to_string(s.root_status)},
                    {"attempts", s.attempts},
                    {"crashes", s.crashes},
                    {"budget", s.budget},
                    {"expansions", s.total_expansions},
                    {"last_expansions", s.last_expansions},
                    {"proof_size", s.proof_size},
                    {"env_time_us", s.env_time.count()}});
  }
  nlohmann::json j{{"lemmas", std::move(rows)},
                   {"searches", searches},
                   {"proofs", proofs},
                   {"crashes", crashes},
                   {"train_steps", train_steps},
                   {"examples_pushed", examples_pushed},
                   {"stop_reason", stop_reason},
                   {"checkpoint", checkpoint}};
  if (last_losses) j["last_loss"] = {{"policy", last_losses->policy}, {"value", last_losses->value}};
  return j;
}

std::string RunReport::to_table(bool include_wall_clock) const {
  std::ostringstream out;
  out << std::left << std::setw(16) << "lemma" << std::setw(11) << "status" << std::right << std::setw(9)
      << "attempts" << std::setw(9) << "budget" << std::setw(12) << "expansions" << std::setw(11) << "proof size"
      << std::setw(13) << "env time ms" << '\n';
  std::uint64_t proven = 0;
  for (const LemmaState& s : lemmas) {
    if (s.status == LemmaStatus::Proven) ++proven;
    out << std::left << std::setw(16) << s.lemma << std::setw(11) << pgs::to_string(s.status) << std::right
        << std::setw(9) << s.attempts << std::setw(9) << s.budget << std::setw(12) << s.total_expansions
        << std::setw(11);
    if (s.status == LemmaStatus::Proven) {
      out << s.proof_size;
    } else {
      out << "-";
    }
    out << std::setw(13) << std::fixed << std::setprecision(1) << static_cast<double>(s.env_time.count()) / 1000.0
        << '\n';
  }
  out << "proven " << proven << "/" << lemmas.size() << ", searches " << searches << ", train steps " << train_steps
      << ", examples " << examples_pushed << ", stop: " << stop_reason;
  if (include_wall_clock) out << ", wall clock " << std::fixed << std::setprecision(1) << wall_clock.count() << " s";
  out << '\n';
  return out.str();
}

NetworkEvaluator make_network(const Config& config) {
  if (!config.paths.checkpoint.empty()) {
    nn::Checkpoint ck = nn::load_checkpoint(config.paths.checkpoint);
    return NetworkEvaluator(std::move(ck.tokenizer), std::move(ck.model));
  }
  nn::Tokenizer tok = config.paths.tokenizer.empty() ? nn::Tokenizer{} : nn::Tokenizer::load(config.paths.tokenizer);
  return NetworkEvaluator(std::move(tok), config.model, config.seed);
}

namespace {

struct RunState {
  const Config& cfg;
  Scheduler sched;
  ReplayBuffer buffer;
  std::mt19937_64 rng;
  RunReport report;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::filesystem::path out_dir;

  RunState(const Config& c, const std::vector<std::string>& lemmas)
      : cfg(c), sched(lemmas, c.budget.initial), buffer(c.buffer), rng(c.seed ^ 0x5eedf00dULL), out_dir(c.paths.out_dir) {}

  std::string checkpoint_path() const { return (out_dir / "checkpoint.pgsck").string(); }

  /// Reason to stop before starting another search, empty to continue.
  std::string stop_reason(std::uint64_t started) const {
    if (report.proofs >= cfg.run.max_proofs) return "max_proofs";
    if (started >= cfg.run.max_searches) return "max_searches";
    if (cfg.run.wall_clock_s > 0.0) {
      const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
      if (el.count() >= cfg.run.wall_clock_s) return "wall_clock";
    }
    if (sched.complete()) return "complete";
    return {};
  }

  void record(std::size_t idx, const SearchResult& r) {
    const std::uint64_t budget = sched.at(idx).budget;
    sched.finish(idx, r, cfg.budget.growth);
    const LemmaState& s = sched.at(idx);
    if (s.status == LemmaStatus::Proven) ++report.proofs;
    spdlog::info("{} attempt {}: {} after {}/{} expansions, {} examples", s.lemma, s.attempts,
                 pgs::to_string(r.root_status), r.expansions, budget, r.examples_emitted);
  }

  void record_crash(std::size_t idx, const std::exception& e) {
    ++report.crashes;
    sched.crash(idx, cfg.run.max_crashes_per_lemma);
    const LemmaState& s = sched.at(idx);
    spdlog::error("search on {} crashed ({} of {}): {}", s.lemma, s.crashes, cfg.run.max_crashes_per_lemma, e.what());
    if (s.status == LemmaStatus::Abandoned) spdlog::error("giving up on {}", s.lemma);
  }

  std::vector<TrainingExample> sample() {
    const std::size_t k = std::min(cfg.train.batch_size, buffer.size());
    return buffer.sample_batch(k, rng);
  }

  nlohmann::json meta() const { return {{"seed", cfg.seed}, {"searches", report.searches}}; }

  void finish_report() {
    report.lemmas = sched.lemmas();
    report.examples_pushed = buffer.total_pushed();
    report.wall_clock = std::chrono::steady_clock::now() - start;
  }

  void write_outputs() const {
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream j(out_dir / "report.json", std::ios::trunc);
      j << report.to_json().dump(2) << '\n';
    }
    {
      std::ofstream t(out_dir / "report.txt", std::ios::trunc);
      t << report.to_table(false);
    }
    buffer.save((out_dir / "buffer.jsonl").string());
  }
};

void save_weights(const std::string& path, const NetworkEvaluator& net, const nlohmann::json& meta) {
  nn::save_checkpoint(path, net.model(), net.tokenizer(), net.steps(), meta);
}

[[noreturn]] void diverged(RunState& st, const NetworkEvaluator& net, const TrainingDiverged& e) {
  const std::string path = (st.out_dir / "checkpoint.diverged.pgsck").string();
  save_weights(path, net, st.meta());
  st.report.stop_reason = "diverged";
  st.report.checkpoint = path;
  st.finish_report();
  st.write_outputs();
  spdlog::critical("training diverged: {}; last good weights saved to {}", e.what(), path);
  throw e;
}

void lockstep(RunState& st, env::Environment& env, NetworkEvaluator& net) {
  const Config& cfg = st.cfg;
  for (;;) {
    const std::string reason = st.stop_reason(st.report.searches);
    if (!reason.empty()) {
      st.report.stop_reason = reason;
      return;
    }
    const auto idx = st.sched.next();
    if (!idx) throw std::logic_error("scheduler returned no lemma in a single-worker run");
    const LemmaState& ls = st.sched.at(*idx);
    ++st.report.searches;
    try {
      Search search(env, net, cfg.search, cfg.reward);
      search.set_collect_examples(false);
      search.set_example_sink([&](const TrainingExample& ex) { st.buffer.push(ex); });
      const SearchResult r = search.run(ls.lemma, ls.budget);
      st.record(*idx, r);
    } catch (const std::exception& e) {
      st.record_crash(*idx, e);
    }
    std::uint64_t steps = 0;
    while (steps < cfg.run.max_steps_per_search && st.buffer.ready()) {
      const std::vector<TrainingExample> batch = st.sample();
      try {
        st.report.last_losses = net.train_step(batch, cfg.train);
      } catch (const TrainingDiverged& e) {
        diverged(st, net, e);
      }
      ++steps;
      ++st.report.train_steps;
      if (cfg.run.checkpoint_every > 0 && st.report.train_steps % cfg.run.checkpoint_every == 0) {
        save_weights(st.checkpoint_path(), net, st.meta());
      }
    }
  }
}

void parallel(RunState& st, env::Environment& env, NetworkEvaluator& net) {
  const Config& cfg = st.cfg;
  EvaluationService service(net);
  std::mutex mu;
  std::condition_variable cv;
  bool stop = false;
  std::atomic<bool> workers_done{false};
  std::mutex buf_mu;
  std::condition_variable buf_cv;
  std::exception_ptr trainer_error;

  auto set_stop = [&](const std::string& reason) {
    if (!stop) {
      stop = true;
      st.report.stop_reason = reason;
    }
    cv.notify_all();
  };

  auto worker = [&](std::size_t w) {
    ServiceEvaluator eval(service);
    for (;;) {
      std::size_t idx = 0;
      std::string lemma;
      std::uint64_t budget = 0;
      {
        std::unique_lock lock(mu);
        for (;;) {
          if (stop) return;
          const std::string reason = st.stop_reason(st.report.searches);
          if (!reason.empty()) {
            set_stop(reason);
            return;
          }
          if (auto next = st.sched.next()) {
            idx = *next;
            break;
          }
          cv.wait(lock);
        }
        ++st.report.searches;
        lemma = st.sched.at(idx).lemma;
        budget = st.sched.at(idx).budget;
      }
      spdlog::debug("worker {} takes {} with budget {}", w, lemma, budget);
      std::optional<SearchResult> result;
      std::optional<std::string> error;
      try {
        Search search(env, eval, cfg.search, cfg.reward);
        search.set_collect_examples(false);
        search.set_example_sink([&](const TrainingExample& ex) {
          st.buffer.push(ex);
          buf_cv.notify_one();
        });
        result = search.run(lemma, budget);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(mu);
      if (result) {
        st.record(idx, *result);
      } else {
        st.record_crash(idx, std::runtime_error(*error));
      }
      cv.notify_all();
    }
  };

  auto trainer = [&] {
    std::uint64_t steps = 0;
    for (;;) {
      if (!workers_done.load() && st.buffer.ready()) {
        std::vector<TrainingExample> batch;
        try {
          batch = st.sample();
        } catch (const BufferNotReady&) {
          continue;
        }
        try {
          const Losses l = service.train(batch, cfg.train);
          std::lock_guard lock(mu);
          st.report.last_losses = l;
          ++st.report.train_steps;
          steps = st.report.train_steps;
        } catch (const TrainingDiverged&) {
          std::lock_guard lock(mu);
          trainer_error = std::current_exception();
          set_stop("diverged");
          return;
        }
        if (cfg.run.checkpoint_every > 0 && steps % cfg.run.checkpoint_every == 0) {
          nlohmann::json meta;
          {
            std::lock_guard lock(mu);
            meta = st.meta();
          }
          service.with_network([&](NetworkEvaluator& n) { save_weights(st.checkpoint_path(), n, meta); });
        }
        continue;
      }
      if (workers_done.load()) return;
      std::unique_lock lock(buf_mu);
      buf_cv.wait_for(lock, std::chrono::milliseconds(5));
    }
  };

  std::thread trainer_thread(trainer);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < cfg.run.workers; ++w) workers.emplace_back(worker, w);
  for (std::thread& t : workers) t.join();
  workers_done.store(true);
  buf_cv.notify_all();
  trainer_thread.join();
  service.stop();
  if (trainer_error) {
    try {
      std::rethrow_exception(trainer_error);
    } catch (const TrainingDiverged& e) {
      diverged(st, net, e);
    }
  }
}

}  // namespace

RunReport train_loop(const Config& config, env::Environment& env, const std::vector<std::string>& lemmas) {
  config.validate();
  RunState st(config, lemmas);
  if (config.run.max_proofs == 0) {
    st.report.stop_reason = "max_proofs";
    st.finish_report();
    return st.report;
  }
  NetworkEvaluator net = make_network(config);
  std::filesystem::create_directories(st.out_dir);
  spdlog::info("training on {} lemmas with {} worker(s), {} parameters", lemmas.size(), config.run.workers,
               net.model().parameter_count());
  if (config.run.workers == 1) {
    lockstep(st, env, net);
  } else {
    parallel(st, env, net);
  }
  st.report.checkpoint = st.checkpoint_path();
  save_weights(st.report.checkpoint, net, st.meta());
  st.finish_report();
  st.write_outputs();
  return st.report;
}

}  // namespace pgs
