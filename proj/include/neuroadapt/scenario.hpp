#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "neuroadapt/attention.hpp"
#include "neuroadapt/stream.hpp"

namespace neuroadapt {

inline constexpr double kMinBlockSeconds = 60.0;
inline constexpr double kMaxBlockSeconds = 180.0;
inline constexpr double kRestSeconds = 30.0;

struct ScenarioBlock {
  AttentionState state = AttentionState::StableAttention;
  double duration_s = 60.0;
  /// 30 s between blocks, 0 after the last one.
  double rest_after_s = kRestSeconds;
};

enum class ProbeMode {
  Simulated,  // the simulator answers each probe
  Manual,     // answers come from the client
  Off,
};

/// Scenario script file, one directive per line, '#' starts a comment:
///
///   seed 7
///   jitter_ms 2
///   probes simulated        # simulated | manual | off
///   block HighAttention 90  # state name, duration in seconds (60-180)
///   block Distraction 60
///
/// Blocks run in file order separated by 30 s rests.
struct ScenarioScript {
  std::vector<ScenarioBlock> blocks;
  std::uint64_t seed = 7;
  double jitter_ms = 2.0;
  ProbeMode probes = ProbeMode::Simulated;

  void validate() const;
  std::int64_t duration_us() const;
  /// Block and rest segments on the session clock starting at 0.
  LabelTimeline timeline() const;
  std::string to_text() const;
};

/// Throws ParseError whose message starts with "line N:".
ScenarioScript parse_scenario(std::string_view text);
ScenarioScript load_scenario(const std::string& path);

/// Five 90 s blocks, one per state.
ScenarioScript default_scenario(std::uint64_t seed = 7);
/// Five 60 s blocks: a 420 s session.
ScenarioScript short_scenario(std::uint64_t seed = 7);

/// "default", "short", or a path to a script file.
ScenarioScript resolve_scenario(const std::string& name_or_path, std::uint64_t seed);

}  // namespace neuroadapt
