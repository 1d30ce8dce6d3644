#include "neuroadapt/service.hpp"

#include <deque>
#include <iostream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

json error_message(std::string_view code, const std::string& message) {
  return {{"type", "error"}, {"version", kSchemaVersion}, {"code", std::string(code)}, {"message", message}};
}

// ---------------------------------------------------------------------------
// SessionRunner

SessionRunner::SessionRunner(std::shared_ptr<Session> session, RunnerOptions options)
    : session_(std::move(session)),
      options_(options),
      sim_(session_->config().scenario, session_->config().sim),
      queue_(options.queue_capacity) {
  session_->set_listener([this](const SessionEvent& ev) {
    std::lock_guard lock(sub_mu_);
    for (auto& [id, fn] : subscribers_) fn(ev);
  });
}

SessionRunner::~SessionRunner() {
  stop();
  session_->set_listener(nullptr);
}

void SessionRunner::start() {
  {
    std::lock_guard lock(sim_mu_);
    wall_at_resume_ = Clock::now();
  }
  consumer_ = std::thread([this] { consume(); });
  producer_ = std::thread([this] { produce(); });
}

void SessionRunner::stop() {
  stop_ = true;
  queue_.close();
  if (producer_.joinable()) producer_.join();
  if (consumer_.joinable()) consumer_.join();
  session_->close();
}

void SessionRunner::wait() {
  std::unique_lock lock(done_mu_);
  done_cv_.wait(lock, [&] { return finished_.load(); });
}

void SessionRunner::produce() {
  const bool unpaced = options_.accel <= 0.0;
  auto sink = [&](const SimEvent& ev) {
    if (realtime()) {
      queue_.try_push(ev);
    } else {
      queue_.push(ev);
    }
  };
  while (!stop_) {
    bool done = false;
    {
      std::lock_guard lock(sim_mu_);
      if (!paused_) {
        std::int64_t target;
        if (unpaced) {
          target = sim_.now_us() + 1'000'000;
        } else {
          const double wall_s = std::chrono::duration<double>(Clock::now() - wall_at_resume_).count();
          target = sim_at_resume_us_ + static_cast<std::int64_t>(wall_s * options_.accel * 1e6);
        }
        sim_.advance_to(std::min(target, sim_.duration_us() + 1'000'000), sink);
        done = sim_.finished();
      }
    }
    if (done) break;
    if (!unpaced) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  queue_.close();
}

void SessionRunner::consume() {
  std::int64_t last_sim = 0;
  while (true) {
    auto ev = queue_.pop(std::chrono::milliseconds(50));
    if (ev) {
      session_->ingest(*ev);
      continue;
    }
    {
      std::lock_guard lock(sim_mu_);
      last_sim = sim_.now_us();
    }
    if (queue_.closed() && queue_.size() == 0) break;
    // Chat turns are stamped with the session clock, so keep it moving
    // between samples.
    session_->advance_clock(last_sim);
  }
  {
    std::lock_guard lock(sim_mu_);
    last_sim = sim_.now_us();
  }
  session_->advance_clock(last_sim);
  session_->close();
  {
    std::lock_guard lock(done_mu_);
    finished_ = true;
  }
  done_cv_.notify_all();
}

void SessionRunner::steer(std::optional<AttentionState> target) {
  {
    std::lock_guard lock(sim_mu_);
    sim_.steer(target);
  }
  session_->note_steer(target);
}

void SessionRunner::pause() {
  {
    std::lock_guard lock(sim_mu_);
    if (paused_) return;
    paused_ = true;
    // Freeze the simulated clock where it stands.
    sim_at_resume_us_ = sim_.now_us();
  }
  session_->note_pause(true);
}

void SessionRunner::resume() {
  {
    std::lock_guard lock(sim_mu_);
    if (!paused_) return;
    paused_ = false;
    wall_at_resume_ = Clock::now();
  }
  session_->note_pause(false);
}

bool SessionRunner::paused() const {
  std::lock_guard lock(sim_mu_);
  return paused_;
}

std::uint64_t SessionRunner::subscribe(Subscriber fn) {
  std::lock_guard lock(sub_mu_);
  const auto id = next_sub_++;
  subscribers_.emplace(id, std::move(fn));
  return id;
}

void SessionRunner::unsubscribe(std::uint64_t id) {
  std::lock_guard lock(sub_mu_);
  subscribers_.erase(id);
}

// ---------------------------------------------------------------------------
// Requests

SessionRequest SessionRequest::from_json(const json& j) {
  SessionRequest r;
  if (j.is_null()) return r;
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "session request must be a JSON object");
  try {
    if (j.contains("mode")) {
      auto m = mode_from_string(j.at("mode").get<std::string>());
      if (!m) throw Error(ErrorCode::InvalidArgument, "mode must be Adaptive or Baseline");
      r.mode = *m;
    }
    if (j.contains("scenario")) r.scenario = j.at("scenario").get<std::string>();
    if (j.contains("scenario_text")) r.scenario_text = j.at("scenario_text").get<std::string>();
    if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("accel")) r.accel = j.at("accel").get<double>();
    if (j.contains("probes")) {
      const auto p = j.at("probes").get<std::string>();
      if (p == "simulated") r.probes = ProbeMode::Simulated;
      else if (p == "manual") r.probes = ProbeMode::Manual;
      else if (p == "off") r.probes = ProbeMode::Off;
      else throw Error(ErrorCode::InvalidArgument, "probes must be simulated, manual or off");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad session request: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Connections

namespace {

struct Target {
  std::vector<std::string> parts;
  std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  std::string_view path = target.substr(0, q);
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto slash = path.find('/');
    t.parts.emplace_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash);
  }
  if (q != std::string_view::npos) {
    std::string_view qs = target.substr(q + 1);
    while (!qs.empty()) {
      const auto amp = qs.find('&');
      const auto kv = qs.substr(0, amp);
      const auto eq = kv.find('=');
      t.query[std::string(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(kv.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      qs.remove_prefix(amp + 1);
    }
  }
  return t;
}

class FeedConnection : public std::enable_shared_from_this<FeedConnection> {
 public:
  FeedConnection(tcp::socket&& socket, Service& service)
      : ws_(std::move(socket)), service_(service), capacity_(service.config().feed_queue) {}

  ~FeedConnection() {
    if (runner_) runner_->unsubscribe(sub_id_);
  }

  void run(http::request<http::string_body> req) {
    target_ = std::string(req.target());
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&FeedConnection::on_accept, shared_from_this()));
  }

 private:
  struct Out {
    std::string text;
    bool chat = false;
  };

  void on_accept(beast::error_code ec) {
    if (ec) return;
    const Target t = parse_target(target_);
    if (t.parts.size() == 3 && t.parts[0] == "sessions" && t.parts[2] == "feed") runner_ = service_.find(t.parts[1]);
    if (!runner_) {
      ws_.async_close(websocket::close_reason(static_cast<websocket::close_code>(4404), "unknown session"),
                      [self = shared_from_this()](beast::error_code) {});
      return;
    }
    std::uint64_t since = 0;
    if (auto it = t.query.find("since"); it != t.query.end()) {
      try {
        since = std::stoull(it->second);
      } catch (const std::exception&) {
        since = 0;
      }
    }
    std::weak_ptr<FeedConnection> weak = shared_from_this();
    auto executor = ws_.get_executor();
    sub_id_ = runner_->subscribe([weak, executor](const SessionEvent& ev) {
      json msg = feed_message(ev);
      if (msg.is_null()) return;
      const bool chat = msg.at("type") == "chat";
      net::post(executor, [weak, seq = ev.seq, chat, text = msg.dump() + "\n"]() mutable {
        if (auto self = weak.lock()) self->enqueue(seq, std::move(text), chat);
      });
    });
    // Backlog first; live copies of the same events are skipped by seq.
    for (const auto& ev : runner_->session()->events_since(since)) {
      json msg = feed_message(ev);
      if (msg.is_null()) {
        last_seq_ = std::max(last_seq_, ev.seq);
        continue;
      }
      enqueue(ev.seq, msg.dump() + "\n", msg.at("type") == "chat");
    }
    do_read();
  }

  void enqueue(std::uint64_t seq, std::string text, bool chat) {
    if (seq != 0) {
      if (seq <= last_seq_) return;
      last_seq_ = seq;
    }
    send(std::move(text), chat);
  }

  void send(std::string text, bool chat) {
    if (closing_) return;
    if (queue_.size() >= capacity_) {
      // The head may be mid-write; evict the oldest non-chat after it.
      const std::size_t first = writing_ ? 1 : 0;
      std::size_t victim = queue_.size();
      for (std::size_t i = first; i < queue_.size(); ++i) {
        if (!queue_[i].chat) {
          victim = i;
          break;
        }
      }
      if (victim == queue_.size()) victim = first;
      if (victim < queue_.size()) queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(victim));
      ++dropped_;
    }
    queue_.push_back({std::move(text), chat});
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front().text),
                    beast::bind_front_handler(&FeedConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      closing_ = true;
      return;
    }
    queue_.pop_front();
    if (queue_.empty()) {
      writing_ = false;
    } else {
      do_write();
    }
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&FeedConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closing_ = true;
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    json reply = service_.handle_client_message(runner_, text);
    if (!reply.is_null()) send(reply.dump() + "\n", true);
    do_read();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Service& service_;
  std::size_t capacity_;
  std::string target_;
  beast::flat_buffer buffer_;
  std::shared_ptr<SessionRunner> runner_;
  std::uint64_t sub_id_ = 0;
  std::deque<Out> queue_;
  bool writing_ = false;
  bool closing_ = false;
  std::uint64_t last_seq_ = 0;
  std::uint64_t dropped_ = 0;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, Service& service) : stream_(std::move(socket)), service_(service) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<FeedConnection>(stream_.release_socket(), service_)->run(std::move(req_));
      return;
    }
    auto reply = service_.handle_http(std::string(req_.method_string()), std::string(req_.target()), req_.body());
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(reply.status),
                                                                   req_.version());
    res->set(http::field::server, "neuroadapt");
    res->set(http::field::content_type, reply.content_type);
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(reply.body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code wec, std::size_t) {
      if (wec) return;
      if (res->need_eof()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Service& service_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct Service::Impl {
  net::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::vector<std::thread> threads;

  void accept(Service& svc) {
    acceptor->async_accept(net::make_strand(ioc), [this, &svc](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpConnection>(std::move(socket), svc)->run();
      accept(svc);
    });
  }
};

// ---------------------------------------------------------------------------
// Service

Service::Service(ServiceConfig config, std::shared_ptr<const MlpModel> model)
    : config_(std::move(config)),
      model_(std::move(model)),
      backend_(make_backend(config_.backend, config_.http)),
      directives_(config_.templates_path.empty() ? DirectiveTable::builtin()
                                                 : DirectiveTable::load(config_.templates_path)),
      impl_(std::make_unique<Impl>()) {
  if (!model_) throw Error(ErrorCode::InvalidArgument, "service needs a model");
}

Service::~Service() { stop(); }

void Service::start() {
  backend_->check_available();
  beast::error_code ec;
  const auto address = net::ip::make_address(config_.host, ec);
  if (ec) throw Error(ErrorCode::InvalidArgument, "bad host '" + config_.host + "'");
  tcp::endpoint endpoint(address, config_.port);
  impl_->acceptor.emplace(impl_->ioc);
  impl_->acceptor->open(endpoint.protocol(), ec);
  if (!ec) impl_->acceptor->set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor->bind(endpoint, ec);
  if (!ec) impl_->acceptor->listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot listen on " + config_.host + ":" + std::to_string(config_.port) + ": " +
                                          ec.message());
  port_ = impl_->acceptor->local_endpoint().port();
  impl_->accept(*this);
  for (std::size_t i = 0; i < std::max<std::size_t>(1, config_.io_threads); ++i) {
    impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  }
}

void Service::stop() {
  if (impl_->acceptor) {
    beast::error_code ec;
    impl_->acceptor->close(ec);
  }
  std::map<std::string, std::shared_ptr<SessionRunner>> sessions;
  {
    std::lock_guard lock(mu_);
    sessions = sessions_;
  }
  for (auto& [id, runner] : sessions) runner->stop();
  {
    std::lock_guard lock(workers_mu_);
    for (auto& t : workers_) {
      if (t.joinable()) t.join();
    }
    workers_.clear();
  }
  impl_->ioc.stop();
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
  impl_->threads.clear();
}

std::string Service::create_session(const SessionRequest& request) {
  backend_->check_available();
  SessionConfig cfg;
  cfg.mode = request.mode;
  cfg.scenario = request.scenario_text ? parse_scenario(*request.scenario_text)
                                       : resolve_scenario(request.scenario, request.seed);
  if (request.probes) cfg.scenario.probes = *request.probes;
  cfg.pipeline.hysteresis_k = config_.hysteresis_k;
  cfg.history_turns = config_.history_turns;

  std::string id;
  {
    std::lock_guard lock(mu_);
    id = "s" + std::to_string(next_id_++);
  }
  auto session = std::make_shared<Session>(id, cfg, model_, backend_, directives_);
  RunnerOptions opts;
  opts.accel = request.accel.value_or(config_.accel);
  opts.queue_capacity = config_.sample_queue;
  auto runner = std::make_shared<SessionRunner>(session, opts);
  {
    std::lock_guard lock(mu_);
    sessions_.emplace(id, runner);
  }
  runner->start();
  return id;
}

std::shared_ptr<SessionRunner> Service::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t Service::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void Service::run_async(std::function<void()> fn) {
  std::lock_guard lock(workers_mu_);
  workers_.emplace_back(std::move(fn));
}

namespace {

Service::HttpReply json_reply(int status, const json& body) { return {status, "application/json", body.dump()}; }

Service::HttpReply error_reply(int status, std::string_view code, const std::string& message) {
  return json_reply(status, {{"error", {{"code", std::string(code)}, {"message", message}}}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::BackendUnavailable: return 503;
    case ErrorCode::Io: return 500;
    default: return 400;
  }
}

}  // namespace

Service::HttpReply Service::handle_http(const std::string& method, const std::string& target,
                                        const std::string& body) {
  const Target t = parse_target(target);
  try {
    if (method == "GET" && t.parts == std::vector<std::string>{"health"}) {
      return json_reply(200, {{"status", "ok"}, {"version", kSchemaVersion}, {"sessions", session_count()},
                              {"backend", backend_->name()}});
    }
    if (t.parts == std::vector<std::string>{"sessions"}) {
      if (method != "POST") return error_reply(405, "MethodNotAllowed", "use POST /sessions");
      json j = body.empty() ? json(nullptr) : json::parse(body, nullptr, false);
      if (j.is_discarded()) return error_reply(400, "ParseError", "request body is not JSON");
      const auto request = SessionRequest::from_json(j);
      const auto id = create_session(request);
      return json_reply(201, {{"session_id", id},
                              {"mode", std::string(to_string(request.mode))},
                              {"feed", "/sessions/" + id + "/feed"}});
    }
    if (t.parts.size() == 3 && t.parts[0] == "sessions") {
      auto runner = find(t.parts[1]);
      if (!runner) return error_reply(404, "UnknownSession", "no session '" + t.parts[1] + "'");
      auto session = runner->session();
      const std::string& what = t.parts[2];
      if (method == "GET" && what == "metrics") {
        json m = session->metrics().to_json();
        m["session_id"] = session->id();
        m["closed"] = session->closed();
        m["clock_us"] = session->clock_us();
        m["state"] = std::string(to_string(session->current_state()));
        m["dropped_events"] = runner->dropped_events();
        return json_reply(200, m);
      }
      if (method == "GET" && what == "archive") {
        if (!session->closed()) return error_reply(409, "SessionOpen", "session is still running; close it first");
        return {200, "application/x-ndjson", session->archive_text()};
      }
      if (method == "POST" && what == "close") {
        runner->stop();
        return json_reply(200, {{"session_id", session->id()}, {"closed", true}});
      }
    }
    return error_reply(404, "NotFound", method + " " + target);
  } catch (const Error& e) {
    return error_reply(status_for(e.code()), to_string(e.code()), e.what());
  }
}

json Service::handle_client_message(const std::shared_ptr<SessionRunner>& runner, const std::string& text) {
  json msg = json::parse(text, nullptr, false);
  if (msg.is_discarded() || !msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return error_message("ParseError", "client messages are JSON objects with a string 'type'");
  }
  const auto type = msg["type"].get<std::string>();
  try {
    if (type == "user_msg") {
      const auto content = msg.value("text", msg.value("content", std::string()));
      if (content.find_first_not_of(" \t\r\n") == std::string::npos) {
        return error_message("InvalidArgument", "empty user message");
      }
      run_async([runner, content] {
        try {
          runner->session()->user_message(content);
        } catch (const std::exception& e) {
          std::cerr << "chat turn failed: " << e.what() << "\n";
        }
      });
      return nullptr;
    }
    if (type == "probe_response") {
      const auto ack = runner->session()->probe_response(msg.at("probe_id").get<int>(), msg.at("rating").get<int>());
      if (!ack.accepted) {
        json m = error_message("ProbeRejected", ack.reason);
        m["probe_id"] = ack.probe_id;
        return m;
      }
      return nullptr;
    }
    if (type == "steer") {
      std::optional<AttentionState> target;
      const json& s = msg.contains("state") ? msg["state"] : msg.contains("set_profile") ? msg["set_profile"] : json();
      if (!s.is_null()) {
        target = state_from_string(s.get<std::string>());
        if (!target) return error_message("InvalidArgument", "unknown state " + s.dump());
      }
      runner->steer(target);
      return nullptr;
    }
    if (type == "pause") {
      runner->pause();
      return nullptr;
    }
    if (type == "resume") {
      runner->resume();
      return nullptr;
    }
    return error_message("InvalidArgument", "unknown message type '" + type + "'");
  } catch (const Error& e) {
    return error_message(to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_message("ParseError", e.what());
  }
}

}  // namespace neuroadapt
