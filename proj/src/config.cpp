#include "neuroadapt/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

void Settings::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config file '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::ParseError, "config file '" + path + "' is not a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() || value.is_array() || value.is_null()) {
      throw Error(ErrorCode::ParseError, "config key '" + key + "' must be a scalar");
    }
    file_[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
}

void Settings::set_flag(const std::string& key, std::string value) { flags_[key] = std::move(value); }

void Settings::set_env(const std::string& key, std::string value) { env_override_[key] = std::move(value); }

std::string Settings::env_name(const std::string& key) {
  std::string name = "NEUROADAPT_" + key;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::toupper(c));
  });
  return name;
}

std::optional<std::string> Settings::env(const std::string& key) const {
  if (auto it = env_override_.find(key); it != env_override_.end()) return it->second;
  if (const char* v = std::getenv(env_name(key).c_str())) return std::string(v);
  return std::nullopt;
}

std::optional<std::string> Settings::raw(const std::string& key) const {
  if (auto it = flags_.find(key); it != flags_.end()) return it->second;
  if (auto v = env(key)) return v;
  if (auto it = file_.find(key); it != file_.end()) return it->second;
  return std::nullopt;
}

std::string Settings::source(const std::string& key) const {
  if (flags_.contains(key)) return "flag";
  if (env(key)) return "env";
  if (file_.contains(key)) return "file";
  return "default";
}

std::string Settings::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

std::int64_t Settings::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const auto n = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, key + " (" + source(key) + ") is not an integer: '" + *v + "'");
  }
}

double Settings::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, key + " (" + source(key) + ") is not a number: '" + *v + "'");
  }
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw Error(ErrorCode::InvalidArgument, key + " (" + source(key) + ") is not a boolean: '" + *v + "'");
}

}  // namespace neuroadapt
