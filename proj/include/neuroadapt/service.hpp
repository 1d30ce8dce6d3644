#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroadapt/bounded_queue.hpp"
#include "neuroadapt/chat_backend.hpp"
#include "neuroadapt/session.hpp"

namespace neuroadapt {

struct RunnerOptions {
  /// Simulated seconds per wall second. 1 is real time (a full sample queue
  /// drops and counts); above 1, or 0 for unpaced, the simulator blocks on a
  /// full queue instead.
  double accel = 1.0;
  std::size_t queue_capacity = 4096;
};

/// Runs one session live: a simulator thread paced by the wall clock feeds a
/// bounded queue drained by the pipeline thread.
class SessionRunner {
 public:
  SessionRunner(std::shared_ptr<Session> session, RunnerOptions options = {});
  ~SessionRunner();

  void start();
  /// Stops both threads and closes the session.
  void stop();
  /// Blocks until the scenario has played out and the session is closed.
  void wait();

  void steer(std::optional<AttentionState> target);
  void pause();
  void resume();
  bool paused() const;
  bool finished() const { return finished_; }
  bool realtime() const { return options_.accel == 1.0; }
  std::uint64_t dropped_events() const { return queue_.dropped(); }

  std::shared_ptr<Session> session() const { return session_; }

  using Subscriber = std::function<void(const SessionEvent&)>;
  std::uint64_t subscribe(Subscriber fn);
  void unsubscribe(std::uint64_t id);

 private:
  void produce();
  void consume();

  std::shared_ptr<Session> session_;
  RunnerOptions options_;
  ScenarioRunner sim_;
  mutable std::mutex sim_mu_;
  BoundedQueue<SimEvent> queue_;
  std::thread producer_;
  std::thread consumer_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> finished_{false};
  bool paused_ = false;
  std::int64_t sim_at_resume_us_ = 0;
  std::chrono::steady_clock::time_point wall_at_resume_;
  std::mutex done_mu_;
  std::condition_variable done_cv_;

  std::mutex sub_mu_;
  std::map<std::uint64_t, Subscriber> subscribers_;
  std::uint64_t next_sub_ = 1;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::string backend = "stub";
  HttpBackendConfig http;
  std::string templates_path;  // empty: built-in templates
  double accel = 1.0;
  std::size_t feed_queue = 256;
  std::size_t sample_queue = 4096;
  std::size_t hysteresis_k = 2;
  std::size_t history_turns = kDefaultHistoryTurns;
  std::size_t io_threads = 2;
};

/// Request body of POST /sessions.
struct SessionRequest {
  SessionMode mode = SessionMode::Adaptive;
  std::string scenario = "default";  // "default", "short" or a .scn path
  std::optional<std::string> scenario_text;
  std::uint64_t seed = 7;
  std::optional<double> accel;
  std::optional<ProbeMode> probes;

  static SessionRequest from_json(const nlohmann::json& j);
};

/// HTTP + websocket front end hosting independent sessions.
class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<const MlpModel> model);
  ~Service();

  /// Binds and starts serving. Throws BackendUnavailable when a non-stub
  /// backend cannot be reached.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  /// Starts a session and returns its id.
  std::string create_session(const SessionRequest& request);
  std::shared_ptr<SessionRunner> find(const std::string& id) const;
  std::size_t session_count() const;

  struct HttpReply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
  };
  HttpReply handle_http(const std::string& method, const std::string& target, const std::string& body);

  /// Applies one client feed message. Returns an error message for the
  /// client, or null.
  nlohmann::json handle_client_message(const std::shared_ptr<SessionRunner>& runner, const std::string& text);

  const ServiceConfig& config() const { return config_; }

 private:
  struct Impl;
  void run_async(std::function<void()> fn);

  ServiceConfig config_;
  std::shared_ptr<const MlpModel> model_;
  std::shared_ptr<ChatBackend> backend_;
  DirectiveTable directives_;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<SessionRunner>> sessions_;
  std::uint64_t next_id_ = 1;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

/// {"type":"error","code":...,"message":...}
nlohmann::json error_message(std::string_view code, const std::string& message);

}  // namespace neuroadapt
