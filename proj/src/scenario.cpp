#include "neuroadapt/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& token, std::size_t line, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size() || !std::isfinite(v)) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    fail_at(line, std::string("expected a number for ") + what + ", got '" + token + "'");
  }
}

ScenarioScript make_uniform(double seconds, std::uint64_t seed) {
  ScenarioScript s;
  s.seed = seed;
  for (AttentionState st : kAllStates) s.blocks.push_back({st, seconds, kRestSeconds});
  s.blocks.back().rest_after_s = 0.0;
  return s;
}

std::int64_t to_us(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1e6)); }

}  // namespace

void ScenarioScript::validate() const {
  if (blocks.empty()) throw Error(ErrorCode::InvalidArgument, "scenario has no blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.duration_s < kMinBlockSeconds || b.duration_s > kMaxBlockSeconds) {
      throw Error(ErrorCode::InvalidArgument,
                  "block " + std::to_string(i + 1) + " duration must be within 60-180 s");
    }
    const double want_rest = i + 1 == blocks.size() ? 0.0 : kRestSeconds;
    if (b.rest_after_s != want_rest) {
      throw Error(ErrorCode::InvalidArgument, "rests between blocks are fixed at 30 s");
    }
  }
  if (jitter_ms < 0.0) throw Error(ErrorCode::InvalidArgument, "jitter_ms must be >= 0");
}

std::int64_t ScenarioScript::duration_us() const {
  double total = 0.0;
  for (const auto& b : blocks) total += b.duration_s + b.rest_after_s;
  return to_us(total);
}

LabelTimeline ScenarioScript::timeline() const {
  std::vector<LabelSegment> segs;
  std::int64_t t = 0;
  for (const auto& b : blocks) {
    const std::int64_t end = t + to_us(b.duration_s);
    segs.push_back({t, end, b.state});
    t = end;
    if (b.rest_after_s > 0.0) {
      const std::int64_t rest_end = t + to_us(b.rest_after_s);
      segs.push_back({t, rest_end, std::nullopt});
      t = rest_end;
    }
  }
  return LabelTimeline(std::move(segs));
}

std::string ScenarioScript::to_text() const {
  std::ostringstream out;
  out << "seed " << seed << "\n";
  out << "jitter_ms " << jitter_ms << "\n";
  out << "probes "
      << (probes == ProbeMode::Simulated ? "simulated" : probes == ProbeMode::Manual ? "manual" : "off")
      << "\n";
  for (const auto& b : blocks) out << "block " << to_string(b.state) << " " << b.duration_s << "\n";
  return out.str();
}

ScenarioScript parse_scenario(std::string_view text) {
  ScenarioScript s;
  s.blocks.clear();
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream fields(raw);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    const std::string& key = tok[0];
    if (key == "block") {
      if (tok.size() != 3) fail_at(line_no, "expected 'block <State> <seconds>'");
      auto st = state_from_string(tok[1]);
      if (!st) fail_at(line_no, "unknown attention state '" + tok[1] + "'");
      const double d = parse_number(tok[2], line_no, "block duration");
      if (d < kMinBlockSeconds || d > kMaxBlockSeconds) {
        fail_at(line_no, "block duration must be within 60-180 s");
      }
      s.blocks.push_back({*st, d, kRestSeconds});
    } else if (key == "seed") {
      if (tok.size() != 2) fail_at(line_no, "expected 'seed <integer>'");
      try {
        std::size_t used = 0;
        s.seed = std::stoull(tok[1], &used);
        if (used != tok[1].size()) throw std::invalid_argument(tok[1]);
      } catch (const std::exception&) {
        fail_at(line_no, "seed must be a non-negative integer");
      }
    } else if (key == "jitter_ms") {
      if (tok.size() != 2) fail_at(line_no, "expected 'jitter_ms <value>'");
      s.jitter_ms = parse_number(tok[1], line_no, "jitter_ms");
      if (s.jitter_ms < 0.0) fail_at(line_no, "jitter_ms must be >= 0");
    } else if (key == "probes") {
      if (tok.size() != 2) fail_at(line_no, "expected 'probes simulated|manual|off'");
      if (tok[1] == "simulated") {
        s.probes = ProbeMode::Simulated;
      } else if (tok[1] == "manual") {
        s.probes = ProbeMode::Manual;
      } else if (tok[1] == "off") {
        s.probes = ProbeMode::Off;
      } else {
        fail_at(line_no, "unknown probe mode '" + tok[1] + "'");
      }
    } else {
      fail_at(line_no, "unknown directive '" + key + "'");
    }
  }
  if (s.blocks.empty()) fail_at(line_no, "scenario has no blocks");
  s.blocks.back().rest_after_s = 0.0;
  return s;
}

ScenarioScript load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

ScenarioScript default_scenario(std::uint64_t seed) { return make_uniform(90.0, seed); }

ScenarioScript short_scenario(std::uint64_t seed) { return make_uniform(60.0, seed); }

ScenarioScript resolve_scenario(const std::string& name_or_path, std::uint64_t seed) {
  if (name_or_path.empty() || name_or_path == "default") return default_scenario(seed);
  if (name_or_path == "short") return short_scenario(seed);
  return load_scenario(name_or_path);
}

}  // namespace neuroadapt
