#pragma once

#include <memory>
#include <string>

#include "pgs/env/environment.hpp"
#include "pgs/env/toy.hpp"

namespace pgs::env {

// Extra headers around the JSON bodies. The request header carries the call
// timeout; the response header reports the prover-side elapsed time, which
// the client prefers over its own wall-clock measurement.
inline constexpr const char* kTimeoutHeader = "X-Timeout-Us";
inline constexpr const char* kElapsedHeader = "X-Elapsed-Us";
inline constexpr const char* kEnvUrlVariable = "PGS_ENV_URL";

/// Client for a remote prover speaking the three-endpoint JSON protocol.
/// Safe to share between threads: every call opens its own connection.
class HttpEnvironment final : public Environment {
 public:
  explicit HttpEnvironment(std::string base_url);

  EnvState get_initial_system(std::string_view lemma) override;
  ExecResult execute_method(std::string_view payload, std::string_view method_id, Micros timeout) override;
  CheckResult check_proof(const ProofTree& tree) override;

  const std::string& url() const { return url_; }

 private:
  std::string url_;
};

/// Serves a toy environment over HTTP. Requests are handled as pure functions
/// of their bodies, so a restarted server answers identically.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<ToyEnvironment> env);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds `host:port` (port 0 picks a free port) and serves on a background
  /// thread. Throws std::runtime_error when the bind fails.
  void start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop() is called elsewhere.
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// Parses "host:port" (host may be empty for 0.0.0.0).
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace pgs::env
