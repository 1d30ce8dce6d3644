#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace neuroadapt {

/// Layered settings resolved as flags > environment > config file > defaults.
/// Keys are snake_case; the environment variable for `chat_endpoint` is
/// NEUROADAPT_CHAT_ENDPOINT. The config file is a flat JSON object.
class Settings {
 public:
  Settings() = default;

  /// Reads a JSON config file. Throws Io or ParseError.
  void load_file(const std::string& path);
  void set_flag(const std::string& key, std::string value);
  /// Test hook; by default values come from the process environment.
  void set_env(const std::string& key, std::string value);

  std::optional<std::string> raw(const std::string& key) const;
  /// "flag", "env", "file" or "default".
  std::string source(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  static std::string env_name(const std::string& key);

 private:
  std::optional<std::string> env(const std::string& key) const;

  std::map<std::string, std::string> flags_;
  std::map<std::string, std::string> env_override_;
  std::map<std::string, std::string> file_;
};

}  // namespace neuroadapt
