#include "neuroadapt/adapt.hpp"

#include <fstream>
#include <sstream>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

// Generated from data/directives.tmpl at configure time.
constexpr std::string_view kBuiltinTemplates =
#include "default_templates.inc"
    ;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

constexpr std::array<std::string_view, 5> kFields = {"style", "structure", "visual", "strategy",
                                                     "system_prompt"};

}  // namespace

std::string_view to_string(VisualFeedback v) {
  switch (v) {
    case VisualFeedback::FocusMode: return "FocusMode";
    case VisualFeedback::Default: return "Default";
    case VisualFeedback::HighlightCues: return "HighlightCues";
    case VisualFeedback::SoftenedUI: return "SoftenedUI";
    case VisualFeedback::AnimatedCues: return "AnimatedCues";
  }
  return "Default";
}

std::optional<VisualFeedback> visual_from_string(std::string_view s) {
  for (auto v : {VisualFeedback::FocusMode, VisualFeedback::Default, VisualFeedback::HighlightCues,
                 VisualFeedback::SoftenedUI, VisualFeedback::AnimatedCues}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

DirectiveTable DirectiveTable::parse(std::string_view text) {
  DirectiveTable table;
  std::array<std::array<bool, kFields.size()>, kNumStates> seen{};
  std::array<bool, kNumStates> has_section{};
  std::optional<AttentionState> section;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";

    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::TemplateError, where + "unterminated section header");
      auto st = state_from_string(trim(line.substr(1, line.size() - 2)));
      if (!st) throw Error(ErrorCode::TemplateError, where + "unknown state '" + std::string(line) + "'");
      section = *st;
      has_section[to_index(*st)] = true;
      continue;
    }
    if (!section) throw Error(ErrorCode::TemplateError, where + "entry outside a [State] section");
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::TemplateError, where + "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string value(trim(line.substr(eq + 1)));

    AdaptationDirective& d = table.directives_[to_index(*section)];
    d.state = *section;
    std::size_t field = kFields.size();
    for (std::size_t f = 0; f < kFields.size(); ++f) {
      if (kFields[f] == key) field = f;
    }
    switch (field) {
      case 0: d.interaction_style = value; break;
      case 1: d.info_structure = value; break;
      case 2: {
        auto v = visual_from_string(value);
        if (!v) throw Error(ErrorCode::TemplateError, where + "unknown visual feedback '" + value + "'");
        d.visual_feedback = *v;
        break;
      }
      case 3: d.engagement_strategy = value; break;
      case 4: d.system_prompt = value; break;
      default: throw Error(ErrorCode::TemplateError, where + "unknown key '" + std::string(key) + "'");
    }
    if (value.empty()) throw Error(ErrorCode::TemplateError, where + "empty value for '" + std::string(key) + "'");
    seen[to_index(*section)][field] = true;
  }

  for (auto st : kAllStates) {
    if (!has_section[to_index(st)]) {
      throw Error(ErrorCode::TemplateError, "missing template for " + std::string(to_string(st)));
    }
    for (std::size_t f = 0; f < kFields.size(); ++f) {
      if (!seen[to_index(st)][f]) {
        throw Error(ErrorCode::TemplateError, "template for " + std::string(to_string(st)) + " is missing '" +
                                                  std::string(kFields[f]) + "'");
      }
    }
  }
  return table;
}

DirectiveTable DirectiveTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read templates '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const DirectiveTable& DirectiveTable::builtin() {
  static const DirectiveTable table = parse(kBuiltinTemplates);
  return table;
}

const AdaptationDirective& directive_for(AttentionState state) {
  return DirectiveTable::builtin().directive_for(state);
}

StateTracker::StateTracker(std::size_t k, AttentionState initial, std::size_t history_limit)
    : k_(k), current_(initial), history_limit_(history_limit) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "hysteresis k must be at least 1");
}

StateTracker::Update StateTracker::update(const Classification& c) {
  history_.push_back(c);
  while (history_.size() > history_limit_) history_.pop_front();
  degraded_ = false;

  Update u;
  if (c.state == current_) {
    candidate_.reset();
    streak_ = 0;
  } else if (candidate_ == c.state) {
    ++streak_;
  } else {
    candidate_ = c.state;
    streak_ = 1;
  }
  if (candidate_ && streak_ >= k_) {
    current_ = *candidate_;
    candidate_.reset();
    streak_ = 0;
    u.changed = true;
  }
  u.emitted = current_;
  return u;
}

StateTracker::Update StateTracker::hold_degraded() {
  degraded_ = true;
  candidate_.reset();
  streak_ = 0;
  return Update{current_, false, true};
}

std::string_view to_string(ChatRole role) {
  switch (role) {
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
    case ChatRole::System: return "system";
  }
  return "user";
}

std::optional<ChatRole> role_from_string(std::string_view s) {
  if (s == "user") return ChatRole::User;
  if (s == "assistant") return ChatRole::Assistant;
  if (s == "system") return ChatRole::System;
  return std::nullopt;
}

ChatRequest compose_prompt(const AdaptationDirective& directive, const std::vector<ChatTurn>& conversation,
                           const std::string& user_message, std::size_t history_limit) {
  if (trim(user_message).empty()) throw Error(ErrorCode::InvalidArgument, "empty user message");
  ChatRequest req;
  req.directive_id = directive.id();
  req.state = directive.state;
  req.system_prompt = directive.system_prompt;
  const std::size_t skip = conversation.size() > history_limit ? conversation.size() - history_limit : 0;
  req.history.assign(conversation.begin() + static_cast<std::ptrdiff_t>(skip), conversation.end());
  req.user_message = user_message;
  return req;
}

}  // namespace neuroadapt
