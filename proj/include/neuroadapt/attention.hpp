#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace neuroadapt {

/// The five attention categories. The integer encoding 0-4 is stable and is
/// what every file format stores.
enum class AttentionState : std::uint8_t {
  HighAttention = 0,
  StableAttention = 1,
  DroppingAttention = 2,
  CognitiveOverload = 3,
  Distraction = 4,
};

inline constexpr std::size_t kNumStates = 5;

inline constexpr std::array<AttentionState, kNumStates> kAllStates = {
    AttentionState::HighAttention, AttentionState::StableAttention,
    AttentionState::DroppingAttention, AttentionState::CognitiveOverload,
    AttentionState::Distraction};

constexpr std::size_t to_index(AttentionState s) { return static_cast<std::size_t>(s); }

std::string_view to_string(AttentionState s);

/// snake_case id used in prompts and echo markers, e.g. "dropping_attention".
std::string_view to_snake(AttentionState s);

std::optional<AttentionState> state_from_string(std::string_view name);
std::optional<AttentionState> state_from_index(long index);

}  // namespace neuroadapt
