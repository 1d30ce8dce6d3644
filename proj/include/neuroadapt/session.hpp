#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroadapt/adapt.hpp"
#include "neuroadapt/chat_backend.hpp"
#include "neuroadapt/pipeline.hpp"
#include "neuroadapt/scenario.hpp"
#include "neuroadapt/signal_sim.hpp"

namespace neuroadapt {

/// Version stamped on archive headers and feed messages.
inline constexpr int kSchemaVersion = 1;

enum class SessionMode { Adaptive, Baseline };

std::string_view to_string(SessionMode mode);
std::optional<SessionMode> mode_from_string(std::string_view s);

/// One entry of the append-only session log. `seq` is strictly increasing and
/// `ts_us` (session clock) never decreases, so (ts_us, seq) is a total order.
struct SessionEvent {
  std::uint64_t seq = 0;
  std::int64_t ts_us = 0;
  std::string type;
  nlohmann::json payload;

  nlohmann::json to_json() const;
  static SessionEvent from_json(const nlohmann::json& j);
};

struct EngagementMetrics {
  double time_on_task_s = 0.0;
  std::uint64_t followup_prompt_count = 0;
  std::uint64_t clarification_count = 0;
  std::uint64_t fixation_count = 0;
  double mean_fixation_ms = 0.0;

  nlohmann::json to_json() const;
  static EngagementMetrics from_json(const nlohmann::json& j);
  bool operator==(const EngagementMetrics&) const = default;
};

/// Heuristic: the user asks for something to be restated or explained again.
bool is_clarification(std::string_view text);

/// Metrics from the log alone. Time on task is the labeled block time elapsed
/// before `end_ts_us`, which defaults to the session_end event (or the last
/// event while the session is open).
EngagementMetrics compute_metrics(const std::vector<SessionEvent>& events, const LabelTimeline& labels,
                                  std::optional<std::int64_t> end_ts_us = std::nullopt);

struct SessionConfig {
  SessionMode mode = SessionMode::Adaptive;
  ScenarioScript scenario = default_scenario();
  SimOptions sim;
  PipelineConfig pipeline;
  std::size_t history_turns = kDefaultHistoryTurns;
};

struct ProbeAck {
  int probe_id = 0;
  bool accepted = false;
  bool expired = false;
  std::string reason;
};

struct ChatResult {
  bool ok = false;
  std::string reply;
  std::string error;
  AttentionState state_at_send = AttentionState::StableAttention;
  std::string directive_id;
};

/// Consumer side of one session: feeds simulator output through the pipeline,
/// applies the adaptation policy, runs chat turns and keeps the event log and
/// archive. Thread-safe; chat backend calls run outside the lock.
class Session {
 public:
  using Listener = std::function<void(const SessionEvent&)>;

  Session(std::string id, SessionConfig config, std::shared_ptr<const MlpModel> model,
          std::shared_ptr<ChatBackend> backend, const DirectiveTable& directives = DirectiveTable::builtin());

  /// Called for every appended event, under the session lock. Must not call
  /// back into the session.
  void set_listener(Listener listener);

  void ingest(const SimEvent& ev);
  /// Moves the session clock forward (never back).
  void advance_clock(std::int64_t t_us);
  /// Emits windows still pending at end of stream.
  void finish_stream();

  void note_steer(std::optional<AttentionState> target);
  void note_pause(bool paused);

  ChatResult user_message(const std::string& text);
  /// `ts_us` defaults to the session clock.
  ProbeAck probe_response(int probe_id, int rating, std::optional<std::int64_t> ts_us = std::nullopt,
                          std::string_view source = "client");

  /// Appends session_end with the final metrics. Idempotent.
  void close();
  bool closed() const;

  EngagementMetrics metrics() const;
  std::vector<SessionEvent> events() const;
  std::vector<SessionEvent> events_since(std::uint64_t after_seq) const;
  std::string archive_text() const;
  void write_archive(std::ostream& out) const;

  std::int64_t clock_us() const;
  AttentionState current_state() const;
  AdaptationDirective active_directive() const;
  const std::string& id() const { return id_; }
  SessionMode mode() const { return config_.mode; }
  const SessionConfig& config() const { return config_; }
  const LabelTimeline& labels() const { return labels_; }
  std::uint64_t dropped_samples() const;

 private:
  void append(std::string type, nlohmann::json payload);
  void append_line(const std::string& line);
  void log_directive(bool initial);
  void log_window(const WindowOutcome& o);
  AdaptationDirective directive_locked() const;

  mutable std::mutex mu_;
  std::string id_;
  SessionConfig config_;
  std::shared_ptr<const MlpModel> model_;
  std::shared_ptr<ChatBackend> backend_;
  DirectiveTable directives_;
  LabelTimeline labels_;
  Pipeline pipeline_;
  Listener listener_;
  std::vector<SessionEvent> events_;
  std::string archive_;
  std::vector<ChatTurn> conversation_;
  std::vector<ProbeEvent> probes_;
  std::int64_t clock_us_ = 0;
  AttentionState state_;
  bool closed_ = false;
};

/// Runs the simulator up to `until_us` and ingests everything it emits.
void drive(Session& session, ScenarioRunner& runner, std::int64_t until_us);
/// Runs the rest of the scenario, flushes and closes the session.
void drive_to_end(Session& session, ScenarioRunner& runner);

/// Dashboard message for an event, or null for events the feed skips.
nlohmann::json feed_message(const SessionEvent& ev);

struct ArchiveEntry {
  bool is_sample = false;
  RecordedSample sample;
  SessionEvent event;
};

struct ParsedArchive {
  nlohmann::json header;  // session_start payload
  std::vector<ArchiveEntry> entries;
  std::vector<SessionEvent> events;
};

/// Throws IntegrityError naming the offending and the last valid line.
ParsedArchive read_archive(std::istream& in);

/// Session settings recorded in an archive header.
SessionConfig config_from_header(const nlohmann::json& header);

/// Events that replay must reproduce, with wall-clock fields removed.
std::vector<nlohmann::json> derived_events(const std::vector<SessionEvent>& events);

struct ReplayReport {
  bool match = false;
  std::size_t compared = 0;
  std::optional<std::size_t> divergence_index;
  std::string expected;  // archived event at the divergence
  std::string actual;    // replayed event at the divergence
  EngagementMetrics archived_metrics;
  EngagementMetrics recomputed_metrics;
  bool metrics_match = false;

  /// "MATCH ..." or "MISMATCH at derived event N: ...".
  std::string verdict() const;
};

/// Re-runs the archived samples through a fresh pipeline with `model` and
/// compares derived events.
ReplayReport replay_archive(const ParsedArchive& archive, std::shared_ptr<const MlpModel> model);

}  // namespace neuroadapt
