#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "neuroadapt/adapt.hpp"

namespace neuroadapt {

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Assistant reply for the request. Throws BackendUnavailable on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
  /// Throws BackendUnavailable if the backend cannot be reached.
  virtual void check_available() {}
  virtual std::string name() const = 0;
};

/// Deterministic stub: the reply names the directive and repeats the message.
class EchoBackend final : public ChatBackend {
 public:
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "stub"; }
};

struct HttpBackendConfig {
  /// OpenAI-compatible chat completions URL (plain http).
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key;
  std::chrono::milliseconds timeout{30'000};
  int retries = 1;

  /// Overrides fields from NEUROADAPT_CHAT_ENDPOINT, NEUROADAPT_CHAT_MODEL,
  /// NEUROADAPT_CHAT_API_KEY and NEUROADAPT_CHAT_TIMEOUT_MS when set.
  void apply_env();
};

/// Request body in the chat completions format.
nlohmann::json to_openai_request(const ChatRequest& request, const std::string& model);

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);

  std::string complete(const ChatRequest& request) override;
  void check_available() override;
  std::string name() const override { return "http"; }

 private:
  HttpBackendConfig config_;
  std::string base_;  // scheme://host:port
  std::string path_;
};

/// "stub" or "http".
std::shared_ptr<ChatBackend> make_backend(const std::string& kind, const HttpBackendConfig& config = {});

}  // namespace neuroadapt
