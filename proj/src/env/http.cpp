#include "pgs/env/http.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

#include "pgs/env/wire.hpp"

namespace pgs::env {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

[[noreturn]] void transport_failure(const std::string& url, const std::string& what) {
  throw EnvError(EnvError::Code::Transport,
                 "cannot reach prover at " + url + " (" + what +
                     "); check the server is running and that --env-url / " + kEnvUrlVariable + " is correct");
}

json parse_error_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception&) {
    return json::object();
  }
}

EnvError::Code code_for_status(int status) {
  switch (status) {
    case 404: return EnvError::Code::NotFound;
    case 422: return EnvError::Code::NotApplicable;
    case 400: return EnvError::Code::Decode;
    default: return EnvError::Code::Protocol;
  }
}

json post(const std::string& url, const char* path, const json& body, httplib::Headers headers,
          std::chrono::seconds read_timeout, httplib::Result* raw = nullptr, int* status_out = nullptr) {
  httplib::Client client(url);
  client.set_connection_timeout(std::chrono::seconds(5));
  client.set_read_timeout(read_timeout);
  auto res = client.Post(path, headers, body.dump(), kJson);
  if (!res) transport_failure(url, httplib::to_string(res.error()));
  if (status_out) *status_out = res->status;
  if (res->status == 504) {
    if (raw) *raw = std::move(res);
    return json::object();
  }
  if (res->status != 200) {
    const json err = parse_error_body(res->body);
    std::string message = "HTTP " + std::to_string(res->status);
    if (err.contains("error") && err["error"].contains("message")) message += ": " + err["error"]["message"].get<std::string>();
    throw EnvError(code_for_status(res->status), message);
  }
  json out;
  try {
    out = json::parse(res->body);
  } catch (const json::exception& e) {
    throw EnvError(EnvError::Code::Protocol, std::string("response is not JSON: ") + e.what());
  }
  if (raw) *raw = std::move(res);
  return out;
}

}  // namespace

HttpEnvironment::HttpEnvironment(std::string base_url) : url_(std::move(base_url)) {
  while (!url_.empty() && url_.back() == '/') url_.pop_back();
  if (url_.empty()) throw std::invalid_argument("empty prover URL");
}

EnvState HttpEnvironment::get_initial_system(std::string_view lemma) {
  const json res = post(url_, "/getInitialSystem", json{{"lemma", lemma}}, {}, std::chrono::seconds(60));
  return wire::env_state_from_json(res);
}

ExecResult HttpEnvironment::execute_method(std::string_view payload, std::string_view method_id, Micros timeout) {
  httplib::Headers headers;
  auto read_timeout = std::chrono::seconds(3600);
  if (timeout != Micros::max()) {
    headers.emplace(kTimeoutHeader, std::to_string(timeout.count()));
    read_timeout = std::chrono::duration_cast<std::chrono::seconds>(timeout) + std::chrono::seconds(5);
  }
  const json body{{"state", base64_encode(payload)}, {"methodId", method_id}};
  httplib::Result raw{nullptr, httplib::Error::Unknown};
  int status = 0;
  const auto start = std::chrono::steady_clock::now();
  json res;
  try {
    res = post(url_, "/executeMethod", body, headers, read_timeout, &raw, &status);
  } catch (const EnvError& e) {
    if (e.code() == EnvError::Code::Transport && timeout != Micros::max() &&
        std::chrono::steady_clock::now() - start >= timeout) {
      return ExecResult{true, {}, timeout};
    }
    throw;
  }
  if (status == 504) return ExecResult{true, {}, timeout};
  ExecResult out;
  if (raw && raw->has_header(kElapsedHeader)) {
    out.elapsed = Micros{std::stoll(raw->get_header_value(kElapsedHeader))};
  } else {
    out.elapsed = std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - start);
  }
  if (!res.contains("children") || !res["children"].is_array()) {
    throw EnvError(EnvError::Code::Protocol, "executeMethod response lacks 'children'");
  }
  for (const json& c : res["children"]) out.children.push_back(wire::env_state_from_json(c));
  return out;
}

CheckResult HttpEnvironment::check_proof(const ProofTree& tree) {
  const json res = post(url_, "/checkProof", json{{"tree", wire::to_json(tree)}}, {}, std::chrono::seconds(600));
  return wire::check_result_from_json(res);
}

struct MockServer::Impl {
  std::shared_ptr<ToyEnvironment> env;
  httplib::Server server;
  std::thread thread;

  explicit Impl(std::shared_ptr<ToyEnvironment> e) : env(std::move(e)) {
    // SO_REUSEADDR only: the library default SO_REUSEPORT lets a second
    // server share a taken port silently.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    install();
  }

  static void reply_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    res.status = status;
    res.set_content(wire::error_json(code, message).dump(), kJson);
  }

  template <typename Handler>
  auto wrap(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        reply_error(res, 400, "bad_request", std::string("malformed JSON body: ") + e.what());
        return;
      }
      try {
        handler(req, body, res);
      } catch (const EnvError& e) {
        int status = 400;
        if (e.code() == EnvError::Code::NotFound) status = 404;
        if (e.code() == EnvError::Code::NotApplicable) status = 422;
        reply_error(res, status, e.code_name(), e.what());
      } catch (const std::exception& e) {
        reply_error(res, 500, "internal", e.what());
      }
    };
  }

  void install() {
    server.Post("/getInitialSystem", wrap([this](const httplib::Request&, const json& body, httplib::Response& res) {
      if (!body.is_object() || !body.contains("lemma") || !body["lemma"].is_string()) {
        throw EnvError(EnvError::Code::Protocol, "body must be {\"lemma\": string}");
      }
      res.set_content(wire::to_json(env->get_initial_system(body["lemma"].get<std::string>())).dump(), kJson);
    }));
    server.Post("/executeMethod", wrap([this](const httplib::Request& req, const json& body, httplib::Response& res) {
      if (!body.is_object() || !body.contains("state") || !body.contains("methodId") ||
          !body["state"].is_string() || !body["methodId"].is_string()) {
        throw EnvError(EnvError::Code::Protocol, "body must be {\"state\": b64, \"methodId\": string}");
      }
      std::string payload;
      try {
        payload = base64_decode(body["state"].get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw EnvError(EnvError::Code::Decode, e.what());
      }
      Micros timeout = Micros::max();
      if (req.has_header(kTimeoutHeader)) timeout = Micros{std::stoll(req.get_header_value(kTimeoutHeader))};
      const ExecResult r = env->execute_method(payload, body["methodId"].get<std::string>(), timeout);
      res.set_header(kElapsedHeader, std::to_string(r.elapsed.count()));
      if (r.timed_out) {
        reply_error(res, 504, "timeout", "method exceeded the call timeout");
        return;
      }
      json kids = json::array();
      for (const EnvState& c : r.children) kids.push_back(wire::to_json(c));
      res.set_content(json{{"children", std::move(kids)}}.dump(), kJson);
    }));
    server.Post("/checkProof", wrap([this](const httplib::Request&, const json& body, httplib::Response& res) {
      if (!body.is_object() || !body.contains("tree")) throw EnvError(EnvError::Code::Protocol, "body must be {\"tree\": ...}");
      const auto tree = wire::proof_tree_from_json(body["tree"]);
      res.set_content(wire::to_json(env->check_proof(*tree)).dump(), kJson);
    }));
  }

  int bind(const std::string& host, int port) {
    const std::string h = host.empty() ? "0.0.0.0" : host;
    if (port == 0) {
      const int p = server.bind_to_any_port(h);
      if (p <= 0) throw std::runtime_error("cannot bind mock server on " + h);
      return p;
    }
    if (!server.bind_to_port(h, port)) {
      throw std::runtime_error("cannot bind mock server on " + h + ":" + std::to_string(port));
    }
    return port;
  }
};

MockServer::MockServer(std::shared_ptr<ToyEnvironment> env) : impl_(std::make_unique<Impl>(std::move(env))) {}

MockServer::~MockServer() { stop(); }

void MockServer::start(const std::string& host, int port) {
  port_ = impl_->bind(host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockServer::run(const std::string& host, int port) {
  port_ = impl_->bind(host, port);
  impl_->server.listen_after_bind();
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("bind address must be host:port");
  const std::string host = address.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in bind address '" + address + "'");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + address + "'");
  return {host, port};
}

}  // namespace pgs::env
