#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neuroadapt/attention.hpp"
#include "neuroadapt/mlp.hpp"

namespace neuroadapt {

enum class VisualFeedback { FocusMode, Default, HighlightCues, SoftenedUI, AnimatedCues };

std::string_view to_string(VisualFeedback v);
std::optional<VisualFeedback> visual_from_string(std::string_view s);

struct AdaptationDirective {
  AttentionState state = AttentionState::StableAttention;
  std::string interaction_style;
  std::string info_structure;
  VisualFeedback visual_feedback = VisualFeedback::Default;
  std::string engagement_strategy;
  std::string system_prompt;

  /// Stable id used in logs and echo replies, e.g. "dropping_attention".
  std::string id() const { return std::string(to_snake(state)); }

  bool operator==(const AdaptationDirective&) const = default;
};

/// State -> directive mapping loaded from a template file (format documented
/// in data/directives.tmpl). Loading fails with TemplateError unless every
/// state has every field, so lookups never fail afterwards.
class DirectiveTable {
 public:
  /// The templates shipped in data/directives.tmpl, compiled in.
  static const DirectiveTable& builtin();
  static DirectiveTable parse(std::string_view text);
  static DirectiveTable load(const std::string& path);

  const AdaptationDirective& directive_for(AttentionState state) const {
    return directives_[to_index(state)];
  }

 private:
  std::array<AdaptationDirective, kNumStates> directives_;
};

/// Directive from the built-in templates.
const AdaptationDirective& directive_for(AttentionState state);

/// Requires k identical consecutive classifications before the emitted state
/// moves. Degraded windows hold the current state and reset the streak.
class StateTracker {
 public:
  struct Update {
    AttentionState emitted = AttentionState::StableAttention;
    bool changed = false;
    bool degraded = false;
  };

  explicit StateTracker(std::size_t k = 2,
                        AttentionState initial = AttentionState::StableAttention,
                        std::size_t history_limit = 64);

  Update update(const Classification& c);
  Update hold_degraded();

  AttentionState current() const { return current_; }
  std::optional<AttentionState> candidate() const { return candidate_; }
  std::size_t streak() const { return streak_; }
  std::size_t k() const { return k_; }
  bool confidence_degraded() const { return degraded_; }
  const std::deque<Classification>& history() const { return history_; }

 private:
  std::size_t k_;
  AttentionState current_;
  std::optional<AttentionState> candidate_;
  std::size_t streak_ = 0;
  bool degraded_ = false;
  std::size_t history_limit_;
  std::deque<Classification> history_;
};

enum class ChatRole { User, Assistant, System };

std::string_view to_string(ChatRole role);
std::optional<ChatRole> role_from_string(std::string_view s);

struct ChatTurn {
  ChatRole role = ChatRole::User;
  std::string content;
  std::int64_t ts_us = 0;
  AttentionState state_at_send = AttentionState::StableAttention;
  std::string directive_id;
};

inline constexpr std::size_t kDefaultHistoryTurns = 20;

struct ChatRequest {
  std::string directive_id;
  AttentionState state = AttentionState::StableAttention;
  std::string system_prompt;
  std::vector<ChatTurn> history;  // oldest first
  std::string user_message;
};

/// System prompt, the last `history_limit` turns, then the user message.
/// Throws InvalidArgument for an empty message.
ChatRequest compose_prompt(const AdaptationDirective& directive, const std::vector<ChatTurn>& conversation,
                           const std::string& user_message,
                           std::size_t history_limit = kDefaultHistoryTurns);

}  // namespace neuroadapt
