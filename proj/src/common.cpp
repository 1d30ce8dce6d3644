#include <algorithm>
#include <array>
#include <string>

#include "neuroadapt/attention.hpp"
#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

constexpr std::array<std::string_view, kNumStates> kNames = {
    "HighAttention", "StableAttention", "DroppingAttention", "CognitiveOverload", "Distraction"};

constexpr std::array<std::string_view, kNumStates> kSnake = {
    "high_attention", "stable_attention", "dropping_attention", "cognitive_overload",
    "distraction"};

}  // namespace

std::string_view to_string(AttentionState s) { return kNames[to_index(s)]; }

std::string_view to_snake(AttentionState s) { return kSnake[to_index(s)]; }

std::optional<AttentionState> state_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNumStates; ++i) {
    if (name == kNames[i] || name == kSnake[i]) return static_cast<AttentionState>(i);
  }
  return std::nullopt;
}

std::optional<AttentionState> state_from_index(long index) {
  if (index < 0 || index >= static_cast<long>(kNumStates)) return std::nullopt;
  return static_cast<AttentionState>(index);
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DuplicateStream: return "DuplicateStream";
    case ErrorCode::DescriptorMismatch: return "DescriptorMismatch";
    case ErrorCode::UnknownStream: return "UnknownStream";
    case ErrorCode::WindowUnderfull: return "WindowUnderfull";
    case ErrorCode::FusionError: return "FusionError";
    case ErrorCode::ModelContractError: return "ModelContractError";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace neuroadapt
