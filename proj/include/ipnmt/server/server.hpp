#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "ipnmt/model/checkpoint.hpp"
#include "ipnmt/session/protocol.hpp"
#include "ipnmt/session/session.hpp"

namespace httplib {
class Server;
}

namespace ipnmt::server {

struct ServiceOptions {
  session::SessionOptions session;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> log_path;  // JSON-lines protocol log
};

struct Response {
  int status = 200;
  nlohmann::json body;
  std::string etag;  // set on session reads
};

// The request handlers, independent of the transport. Owns the session
// registry and the model lock: decodes take it shared, updates exclusive.
// Each session additionally has its own mutex, so requests against one
// session are applied one at a time.
class SessionService {
 public:
  SessionService(model::ModelBundle& bundle, ServiceOptions options);
  ~SessionService();

  Response create_session(const std::string& body);
  Response submit_feedback(const std::string& id, const std::string& body);
  Response accept(const std::string& id);
  Response get_session(const std::string& id, const std::string& if_none_match = {});
  Response health() const;

  // Writes a shutdown record for every session still active and flushes
  // the log. Idempotent.
  void shutdown();

  std::size_t session_count() const;

 private:
  struct Entry {
    std::mutex mutex;
    std::optional<session::Session> session;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  session::ModelAccess access() { return {&bundle_.network, &model_lock_}; }
  void log(const nlohmann::json& record);

  model::ModelBundle& bundle_;
  ServiceOptions options_;
  std::shared_mutex model_lock_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
  std::unique_ptr<session::ProtocolLog> log_;
  std::atomic<bool> shut_down_{false};
};

nlohmann::json error_body(std::string_view message);

// cpp-httplib front end for SessionService.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();

  // Binds to host:port (port 0 picks a free one). Throws InputError when the
  // address cannot be bound.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  // run() on a background thread; returns once the server accepts requests.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  SessionService& service_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace ipnmt::server
