#include <doctest.h>

#include <chrono>
#include <sstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "neuroadapt/dataset.hpp"
#include "neuroadapt/error.hpp"
#include "neuroadapt/service.hpp"

using namespace neuroadapt;
using nlohmann::json;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::shared_ptr<const MlpModel> shared_model() {
  static const auto model = std::make_shared<const MlpModel>(train_default_model());
  return model;
}

struct Running {
  Service service;

  explicit Running(ServiceConfig cfg = {}) : service(with_free_port(cfg), shared_model()) { service.start(); }

  static ServiceConfig with_free_port(ServiceConfig cfg) {
    cfg.port = 0;
    return cfg;
  }
};

struct Reply {
  int status = 0;
  std::string body;
  json j() const { return json::parse(body); }
};

Reply request(std::uint16_t port, http::verb verb, const std::string& target, const std::string& body = "") {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
  }
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

class Feed {
 public:
  Feed(std::uint16_t port, const std::string& target) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", target);
  }

  // One NDJSON message per frame.
  json next() {
    beast::flat_buffer buffer;
    ws_.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  }

  void send(const json& msg) { ws_.write(net::buffer(msg.dump())); }

  // Reads until a message matches, failing after `limit` messages.
  template <typename Pred>
  json until(Pred pred, std::vector<json>* seen = nullptr, int limit = 20000) {
    for (int i = 0; i < limit; ++i) {
      auto m = next();
      if (seen) seen->push_back(m);
      if (pred(m)) return m;
    }
    FAIL("message not seen");
    return nullptr;
  }

  websocket::stream<tcp::socket>& ws() { return ws_; }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

std::string session_body(double accel, const std::string& scenario_text = "", const std::string& mode = "Adaptive") {
  json j{{"mode", mode}, {"accel", accel}, {"scenario", "short"}};
  if (!scenario_text.empty()) j["scenario_text"] = scenario_text;
  return j.dump();
}

}  // namespace

TEST_CASE("health and session creation over HTTP") {
  Running r;
  const auto port = r.service.port();
  REQUIRE(port != 0);

  auto health = request(port, http::verb::get, "/health");
  CHECK(health.status == 200);
  CHECK(health.j()["status"] == "ok");
  CHECK(health.j()["backend"] == "stub");
  CHECK(health.j()["version"] == kSchemaVersion);

  auto created = request(port, http::verb::post, "/sessions", session_body(1.0));
  REQUIRE(created.status == 201);
  const auto id = created.j()["session_id"].get<std::string>();
  CHECK(created.j()["feed"] == "/sessions/" + id + "/feed");
  CHECK(request(port, http::verb::get, "/health").j()["sessions"] == 1);

  // Real-time pacing: the session is still open.
  auto archive = request(port, http::verb::get, "/sessions/" + id + "/archive");
  CHECK(archive.status == 409);
  CHECK(archive.j()["error"]["code"] == "SessionOpen");

  auto metrics = request(port, http::verb::get, "/sessions/" + id + "/metrics");
  CHECK(metrics.status == 200);
  CHECK(metrics.j()["closed"] == false);
  CHECK(metrics.j()["followup_prompt_count"] == 0);

  CHECK(request(port, http::verb::post, "/sessions/" + id + "/close").status == 200);
  archive = request(port, http::verb::get, "/sessions/" + id + "/archive");
  REQUIRE(archive.status == 200);
  std::istringstream in(archive.body);
  const auto parsed = read_archive(in);
  CHECK(parsed.header["session_id"] == id);
  CHECK(replay_archive(parsed, shared_model()).match);

  CHECK(request(port, http::verb::get, "/sessions/nope/metrics").status == 404);
  CHECK(request(port, http::verb::get, "/sessions").status == 405);
  CHECK(request(port, http::verb::post, "/sessions", "{not json").status == 400);
  CHECK(request(port, http::verb::post, "/sessions", R"({"mode":"Sideways"})").status == 400);
  auto bad_script = request(port, http::verb::post, "/sessions", R"({"scenario_text":"block Sleepy 60\n"})");
  CHECK(bad_script.status == 400);
  CHECK(bad_script.j()["error"]["message"].get<std::string>().find("line 1") != std::string::npos);
  CHECK(request(port, http::verb::get, "/elsewhere").status == 404);
}

TEST_CASE("an unknown session feed is closed with 4404") {
  Running r;
  Feed feed(r.service.port(), "/sessions/missing/feed");
  beast::flat_buffer buffer;
  beast::error_code ec;
  feed.ws().read(buffer, ec);
  CHECK(ec == websocket::error::closed);
  CHECK(feed.ws().reason().code == 4404);
}

TEST_CASE("the feed carries state updates and then the new directive") {
  Running r;
  const auto port = r.service.port();
  const std::string script = "seed 7\nprobes off\nblock DroppingAttention 60\nblock HighAttention 60\n";
  const auto id = request(port, http::verb::post, "/sessions", session_body(20.0, script)).j()["session_id"]
                      .get<std::string>();
  Feed feed(port, "/sessions/" + id + "/feed");

  const auto first = feed.next();
  CHECK(first["type"] == "directive");
  CHECK(first["initial"] == true);
  CHECK(first["visual"] == "Default");

  std::vector<json> seen;
  const auto d = feed.until([](const json& m) { return m["type"] == "directive"; }, &seen);
  CHECK(d["visual"] == "HighlightCues");
  CHECK(d["state"] == "DroppingAttention");
  std::vector<json> updates;
  for (const auto& m : seen) {
    if (m["type"] == "state_update") updates.push_back(m);
  }
  REQUIRE(updates.size() >= 2);
  CHECK(updates.back()["stable_state"] == "DroppingAttention");
  CHECK(updates[updates.size() - 1]["state"] == "DroppingAttention");
  CHECK(updates[updates.size() - 2]["state"] == "DroppingAttention");
  CHECK(updates[updates.size() - 2]["stable_state"] == "StableAttention");
  // The feed is ordered by seq.
  for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i]["seq"] > seen[i - 1]["seq"]);
  CHECK(updates.front()["window_end_us"] == 5'000'000);
  r.service.find(id)->stop();
}

TEST_CASE("client messages over the feed") {
  Running r;
  const auto port = r.service.port();
  const auto id = request(port, http::verb::post, "/sessions", session_body(10.0)).j()["session_id"]
                      .get<std::string>();
  Feed feed(port, "/sessions/" + id + "/feed");
  feed.until([](const json& m) { return m["type"] == "state_update"; });

  feed.send({{"type", "user_msg"}, {"text", "explain rivers"}});
  const auto user = feed.until([](const json& m) { return m["type"] == "chat" && m["role"] == "user"; });
  CHECK(user["content"] == "explain rivers");
  const auto reply = feed.until([](const json& m) { return m["type"] == "chat" && m["role"] == "assistant"; });
  CHECK(reply["content"].get<std::string>().find("explain rivers") != std::string::npos);
  CHECK(reply["state_at_send"] == user["state_at_send"]);

  feed.send({{"type", "dance"}});
  auto err = feed.until([](const json& m) { return m["type"] == "error"; });
  CHECK(err["code"] == "InvalidArgument");
  feed.ws().write(net::buffer(std::string("{{{")));
  err = feed.until([](const json& m) { return m["type"] == "error"; });
  CHECK(err["code"] == "ParseError");
  feed.send({{"type", "steer"}, {"state", "Sleepy"}});
  err = feed.until([](const json& m) { return m["type"] == "error"; });
  CHECK(err["code"] == "InvalidArgument");
  feed.send({{"type", "probe_response"}, {"probe_id", 12345}, {"rating", 3}});
  err = feed.until([](const json& m) { return m["type"] == "error"; });
  CHECK(err["code"] == "ProbeRejected");

  auto runner = r.service.find(id);
  feed.send({{"type", "pause"}});
  for (int i = 0; i < 100 && !runner->paused(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  CHECK(runner->paused());
  feed.send({{"type", "resume"}});
  for (int i = 0; i < 100 && runner->paused(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  CHECK_FALSE(runner->paused());
  runner->stop();
}

TEST_CASE("steering through the service reaches the feed within seven simulated seconds") {
  Running r;
  const auto port = r.service.port();
  const auto id = request(port, http::verb::post, "/sessions", session_body(10.0)).j()["session_id"]
                      .get<std::string>();
  Feed feed(port, "/sessions/" + id + "/feed");
  // The short scenario opens with HighAttention.
  feed.until([](const json& m) { return m["type"] == "state_update" && m["stable_state"] == "HighAttention"; });
  auto runner = r.service.find(id);
  feed.send({{"type", "steer"}, {"set_profile", "Distraction"}});
  std::int64_t steered_at = 0;
  for (int i = 0; i < 500 && steered_at == 0; ++i) {
    for (const auto& e : runner->session()->events()) {
      if (e.type == "steer") steered_at = e.ts_us;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  REQUIRE(steered_at > 0);
  const auto seen = feed.until([&](const json& m) {
    return m["type"] == "state_update" && m["stable_state"] == "Distraction" &&
           m["window_end_us"].get<std::int64_t>() > steered_at;
  });
  const auto lag = seen["window_end_us"].get<std::int64_t>() - steered_at;
  MESSAGE("Distraction on the feed " << lag / 1000 << " ms after the steer");
  CHECK(lag <= 7'000'000);
  runner->stop();
}

TEST_CASE("sessions run to completion and close themselves") {
  Running r;
  const auto port = r.service.port();
  const std::string script = "seed 3\nprobes simulated\nblock CognitiveOverload 60\n";
  const auto id = request(port, http::verb::post, "/sessions", session_body(0.0, script, "Baseline")).j()["session_id"]
                      .get<std::string>();
  auto runner = r.service.find(id);
  runner->wait();
  CHECK(runner->finished());
  CHECK(runner->session()->closed());
  CHECK(runner->dropped_events() == 0);
  const auto m = request(port, http::verb::get, "/sessions/" + id + "/metrics").j();
  CHECK(m["closed"] == true);
  CHECK(m["time_on_task_s"] == doctest::Approx(60.0));

  // A late feed subscriber gets the backlog, ending with session_end.
  Feed feed(port, "/sessions/" + id + "/feed?since=0");
  std::vector<json> seen;
  feed.until([](const json& m) { return m["type"] == "session_end"; }, &seen);
  std::size_t directives = 0;
  for (const auto& s : seen) directives += s["type"] == "directive" ? 1 : 0;
  CHECK(directives == 1);
}

TEST_CASE("session requests") {
  const auto d = SessionRequest::from_json(nullptr);
  CHECK(d.mode == SessionMode::Adaptive);
  CHECK(d.scenario == "default");
  const auto r = SessionRequest::from_json({{"mode", "Baseline"}, {"seed", 9}, {"probes", "manual"}, {"accel", 4}});
  CHECK(r.mode == SessionMode::Baseline);
  CHECK(r.seed == 9);
  CHECK(r.probes == ProbeMode::Manual);
  CHECK(r.accel == 4.0);
  CHECK_THROWS_AS(SessionRequest::from_json({{"probes", "sometimes"}}), Error);
  CHECK_THROWS_AS(SessionRequest::from_json({{"seed", "nine"}}), Error);
  CHECK_THROWS_AS(SessionRequest::from_json(json::array()), Error);
}

TEST_CASE("a non-stub backend that cannot be reached stops startup") {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.backend = "http";
  cfg.http.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.http.timeout = std::chrono::milliseconds(300);
  Service s(cfg, shared_model());
  try {
    s.start();
    FAIL("expected BackendUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendUnavailable);
  }
}

TEST_CASE("bounded queue overflow policies") {
  BoundedQueue<int> q(3);
  for (int i = 0; i < 3; ++i) CHECK(q.try_push(i));
  CHECK_FALSE(q.try_push(3));
  CHECK(q.dropped() == 1);

  // Odd numbers stand in for chat messages that must survive.
  BoundedQueue<int> feed(3);
  for (int v : {1, 2, 3}) feed.push_evicting(v, [](int x) { return x % 2 == 0; });
  feed.push_evicting(4, [](int x) { return x % 2 == 0; });
  feed.push_evicting(6, [](int x) { return x % 2 == 0; });
  std::vector<int> out;
  while (auto v = feed.pop(std::chrono::milliseconds(0))) out.push_back(*v);
  CHECK(out == std::vector<int>{1, 3, 6});
  CHECK(feed.dropped() == 2);

  // All protected: the oldest goes.
  BoundedQueue<int> chats(2);
  for (int v : {1, 3, 5}) chats.push_evicting(v, [](int x) { return x % 2 == 0; });
  out.clear();
  while (auto v = chats.pop(std::chrono::milliseconds(0))) out.push_back(*v);
  CHECK(out == std::vector<int>{3, 5});

  // A blocking producer waits for the consumer.
  BoundedQueue<int> blocking(1);
  blocking.push(0);
  std::thread consumer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    blocking.pop(std::chrono::milliseconds(100));
  });
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(blocking.push(1));
  CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(40));
  consumer.join();
  blocking.close();
  CHECK_FALSE(blocking.push(2));
  CHECK(blocking.pop(std::chrono::milliseconds(0)) == 1);
  CHECK_FALSE(blocking.pop(std::chrono::milliseconds(0)).has_value());
}
