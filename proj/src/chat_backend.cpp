#include "neuroadapt/chat_backend.hpp"

#include <cstdlib>

#include <httplib.h>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

std::string EchoBackend::complete(const ChatRequest& request) {
  const auto& d = directive_for(request.state);
  return "[" + request.directive_id + "] (" + std::string(to_string(d.visual_feedback)) + ", " +
         d.engagement_strategy + ") " + request.user_message;
}

void HttpBackendConfig::apply_env() {
  if (const char* v = std::getenv("NEUROADAPT_CHAT_ENDPOINT")) endpoint = v;
  if (const char* v = std::getenv("NEUROADAPT_CHAT_MODEL")) model = v;
  if (const char* v = std::getenv("NEUROADAPT_CHAT_API_KEY")) api_key = v;
  if (const char* v = std::getenv("NEUROADAPT_CHAT_TIMEOUT_MS")) {
    try {
      timeout = std::chrono::milliseconds(std::stoll(v));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "NEUROADAPT_CHAT_TIMEOUT_MS is not a number");
    }
  }
}

nlohmann::json to_openai_request(const ChatRequest& request, const std::string& model) {
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  for (const auto& t : request.history) {
    messages.push_back({{"role", std::string(to_string(t.role))}, {"content", t.content}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_message}});
  return {{"model", model}, {"messages", messages}};
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos || config_.endpoint.substr(0, scheme) != "http") {
    throw Error(ErrorCode::InvalidArgument, "chat endpoint must be an http:// URL: " + config_.endpoint);
  }
  const auto slash = config_.endpoint.find('/', scheme + 3);
  base_ = config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
}

namespace {

void set_timeouts(httplib::Client& cli, std::chrono::milliseconds t) {
  cli.set_connection_timeout(t);
  cli.set_read_timeout(t);
  cli.set_write_timeout(t);
}

}  // namespace

std::string HttpChatBackend::complete(const ChatRequest& request) {
  const std::string body = to_openai_request(request, config_.model).dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    httplib::Client cli(base_);
    set_timeouts(cli, config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      last_error = std::string("malformed reply: ") + e.what();
    }
  }
  throw Error(ErrorCode::BackendUnavailable, "chat backend " + config_.endpoint + ": " + last_error);
}

void HttpChatBackend::check_available() {
  httplib::Client cli(base_);
  set_timeouts(cli, std::min(config_.timeout, std::chrono::milliseconds(5'000)));
  // Any HTTP answer, even an error status, means the server is reachable.
  auto res = cli.Get("/");
  if (!res) {
    throw Error(ErrorCode::BackendUnavailable,
                "chat backend unreachable at " + base_ + ": " + httplib::to_string(res.error()));
  }
}

std::shared_ptr<ChatBackend> make_backend(const std::string& kind, const HttpBackendConfig& config) {
  if (kind == "stub") return std::make_shared<EchoBackend>();
  if (kind == "http") return std::make_shared<HttpChatBackend>(config);
  throw Error(ErrorCode::InvalidArgument, "unknown backend '" + kind + "' (expected stub or http)");
}

}  // namespace neuroadapt
