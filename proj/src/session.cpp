#include "neuroadapt/session.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

using nlohmann::json;

std::string_view to_string(SessionMode mode) {
  return mode == SessionMode::Adaptive ? "Adaptive" : "Baseline";
}

std::optional<SessionMode> mode_from_string(std::string_view s) {
  if (s == "Adaptive" || s == "adaptive") return SessionMode::Adaptive;
  if (s == "Baseline" || s == "baseline") return SessionMode::Baseline;
  return std::nullopt;
}

json SessionEvent::to_json() const { return {{"seq", seq}, {"ts_us", ts_us}, {"type", type}, {"payload", payload}}; }

SessionEvent SessionEvent::from_json(const json& j) {
  SessionEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.ts_us = j.at("ts_us").get<std::int64_t>();
  e.type = j.at("type").get<std::string>();
  e.payload = j.at("payload");
  return e;
}

json EngagementMetrics::to_json() const {
  return {{"time_on_task_s", time_on_task_s},
          {"followup_prompt_count", followup_prompt_count},
          {"clarification_count", clarification_count},
          {"fixation_count", fixation_count},
          {"mean_fixation_ms", mean_fixation_ms}};
}

EngagementMetrics EngagementMetrics::from_json(const json& j) {
  EngagementMetrics m;
  m.time_on_task_s = j.at("time_on_task_s").get<double>();
  m.followup_prompt_count = j.at("followup_prompt_count").get<std::uint64_t>();
  m.clarification_count = j.at("clarification_count").get<std::uint64_t>();
  m.fixation_count = j.at("fixation_count").get<std::uint64_t>();
  m.mean_fixation_ms = j.at("mean_fixation_ms").get<double>();
  return m;
}

bool is_clarification(std::string_view text) {
  static constexpr std::string_view kCues[] = {
      "what do you mean", "what does that mean", "clarify", "explain again", "explain that again",
      "i don't understand", "i do not understand", "don't get it", "can you repeat", "say that again",
      "confused", "rephrase", "in other words"};
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::any_of(std::begin(kCues), std::end(kCues),
                     [&](std::string_view cue) { return lower.find(cue) != std::string::npos; });
}

EngagementMetrics compute_metrics(const std::vector<SessionEvent>& events, const LabelTimeline& labels,
                                  std::optional<std::int64_t> end_ts_us) {
  EngagementMetrics m;
  if (events.empty()) return m;

  std::int64_t end_ts = events.back().ts_us;
  for (const auto& e : events) {
    if (e.type == "session_end") end_ts = e.ts_us;
  }
  if (end_ts_us) end_ts = *end_ts_us;
  std::int64_t on_task = 0;
  for (const auto& seg : labels.segments()) {
    if (!seg.label) continue;
    on_task += std::max<std::int64_t>(0, std::min(seg.end_us, end_ts) - seg.start_us);
  }
  m.time_on_task_s = static_cast<double>(on_task) / 1e6;

  auto task_segment = [&](std::int64_t ts) -> std::optional<std::size_t> {
    auto idx = labels.segment_at(ts);
    if (idx && labels.segments()[*idx].label) return idx;
    return std::nullopt;
  };

  std::set<std::size_t> replied;
  double fixation_total_ms = 0.0;
  for (const auto& e : events) {
    if (e.type == "chat") {
      const auto role = e.payload.at("role").get<std::string>();
      const auto seg = task_segment(e.ts_us);
      if (role == "assistant") {
        if (seg) replied.insert(*seg);
      } else if (role == "user") {
        if (seg && replied.contains(*seg)) ++m.followup_prompt_count;
        if (is_clarification(e.payload.at("content").get<std::string>())) ++m.clarification_count;
      }
    } else if (e.type == "features") {
      const auto& eye = e.payload.at("eye");
      if (eye.is_null()) continue;
      const auto n = eye.at("fixation_count").get<std::uint64_t>();
      m.fixation_count += n;
      fixation_total_ms += eye.at("fixation_mean_ms").get<double>() * static_cast<double>(n);
    }
  }
  if (m.fixation_count > 0) m.mean_fixation_ms = fixation_total_ms / static_cast<double>(m.fixation_count);
  return m;
}

namespace {

json state_json(std::optional<AttentionState> s) { return s ? json(std::string(to_string(*s))) : json(nullptr); }

json header_payload(const std::string& id, const SessionConfig& c, const MlpModel& model,
                    const std::string& backend) {
  return {{"version", kSchemaVersion},
          {"session_id", id},
          {"mode", std::string(to_string(c.mode))},
          {"scenario", c.scenario.to_text()},
          {"hysteresis_k", c.pipeline.hysteresis_k},
          {"initial_state", std::string(to_string(c.pipeline.initial_state))},
          {"history_turns", c.history_turns},
          {"window",
           {{"length_us", c.pipeline.window.length_us},
            {"hop_us", c.pipeline.window.hop_us},
            {"origin_us", c.pipeline.window.origin_us},
            {"stall_us", c.pipeline.window.stall_us}}},
          {"sim",
           {{"band_limited_noise", c.sim.band_limited_noise},
            {"eeg_rate", c.sim.eeg_rate},
            {"eye_rate", c.sim.eye_rate}}},
          {"model_hash", content_hash(model_to_string(model))},
          {"feature_order", model.feature_order},
          {"backend", backend}};
}

}  // namespace

SessionConfig config_from_header(const json& h) {
  try {
    if (h.at("version").get<int>() != kSchemaVersion) {
      throw Error(ErrorCode::SchemaError, "unsupported archive version " + h.at("version").dump());
    }
    SessionConfig c;
    auto mode = mode_from_string(h.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::SchemaError, "unknown session mode");
    c.mode = *mode;
    c.scenario = parse_scenario(h.at("scenario").get<std::string>());
    c.pipeline.hysteresis_k = h.at("hysteresis_k").get<std::size_t>();
    auto init = state_from_string(h.at("initial_state").get<std::string>());
    if (!init) throw Error(ErrorCode::SchemaError, "unknown initial state");
    c.pipeline.initial_state = *init;
    c.history_turns = h.at("history_turns").get<std::size_t>();
    const auto& w = h.at("window");
    c.pipeline.window.length_us = w.at("length_us").get<std::int64_t>();
    c.pipeline.window.hop_us = w.at("hop_us").get<std::int64_t>();
    c.pipeline.window.origin_us = w.at("origin_us").get<std::int64_t>();
    c.pipeline.window.stall_us = w.at("stall_us").get<std::int64_t>();
    const auto& s = h.at("sim");
    c.sim.band_limited_noise = s.at("band_limited_noise").get<bool>();
    c.sim.eeg_rate = s.at("eeg_rate").get<double>();
    c.sim.eye_rate = s.at("eye_rate").get<double>();
    c.pipeline.eeg_rate = c.sim.eeg_rate;
    c.pipeline.eye_rate = c.sim.eye_rate;
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("bad archive header: ") + e.what());
  }
}

Session::Session(std::string id, SessionConfig config, std::shared_ptr<const MlpModel> model,
                 std::shared_ptr<ChatBackend> backend, const DirectiveTable& directives)
    : id_(std::move(id)),
      config_(std::move(config)),
      model_(std::move(model)),
      backend_(std::move(backend)),
      directives_(directives),
      labels_(config_.scenario.timeline()),
      pipeline_(model_, config_.pipeline, labels_),
      state_(config_.pipeline.initial_state) {
  if (!model_) throw Error(ErrorCode::InvalidArgument, "session needs a model");
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "session needs a chat backend");
  append("session_start", header_payload(id_, config_, *model_, backend_->name()));
  log_directive(true);
}

void Session::set_listener(Listener listener) {
  std::lock_guard lock(mu_);
  listener_ = std::move(listener);
}

void Session::append(std::string type, json payload) {
  SessionEvent e;
  e.seq = events_.size() + 1;
  e.ts_us = clock_us_;
  e.type = std::move(type);
  e.payload = std::move(payload);
  append_line(e.to_json().dump());
  events_.push_back(std::move(e));
  if (listener_) listener_(events_.back());
}

void Session::append_line(const std::string& line) {
  archive_ += line;
  archive_ += '\n';
}

AdaptationDirective Session::directive_locked() const {
  // Baseline keeps the default interface whatever the tracker says.
  const auto s = config_.mode == SessionMode::Baseline ? AttentionState::StableAttention : state_;
  return directives_.directive_for(s);
}

void Session::log_directive(bool initial) {
  const auto d = directive_locked();
  append("directive", {{"state", std::string(to_string(d.state))},
                       {"directive_id", d.id()},
                       {"visual", std::string(to_string(d.visual_feedback))},
                       {"style", d.interaction_style},
                       {"structure", d.info_structure},
                       {"strategy", d.engagement_strategy},
                       {"system_prompt", d.system_prompt},
                       {"initial", initial}});
}

void Session::log_window(const WindowOutcome& o) {
  append("window", {{"start_us", o.start_us},
                    {"end_us", o.end_us},
                    {"label", state_json(o.label)},
                    {"eeg_count", o.eeg_count},
                    {"eye_count", o.eye_count},
                    {"probe_count", o.probe_count},
                    {"quality", o.quality},
                    {"low_quality", o.low_quality},
                    {"rejected_eye", o.rejected_eye},
                    {"artifact_spans", o.artifact_spans}});
  if (o.features) {
    const auto& f = *o.features;
    json eye = nullptr;
    if (f.eye) {
      eye = {{"fixation_mean_ms", f.eye->fixation_mean_ms},
             {"gaze_dispersion", f.eye->gaze_dispersion},
             {"saccade_rate", f.eye->saccade_rate},
             {"blink_rate", f.eye->blink_rate},
             {"pupil_variability", f.eye->pupil_variability},
             {"fixation_count", f.eye->fixation_count}};
    }
    append("features", {{"window_end_us", o.end_us},
                        {"theta", f.bands.theta},
                        {"alpha", f.bands.alpha},
                        {"beta", f.bands.beta},
                        {"engagement", f.engagement.value},
                        {"engagement_saturated", f.engagement.saturated},
                        {"eye", eye},
                        {"vector", f.vector ? json(f.vector->values) : json(nullptr)}});
  }
  if (o.classification) {
    const auto& c = *o.classification;
    append("classification", {{"window_end_us", c.window_end_us},
                              {"state", std::string(to_string(c.state))},
                              {"probs", c.probs},
                              {"stable_state", std::string(to_string(o.tracker.emitted))},
                              {"latency_us", c.latency_us},
                              {"timings",
                               {{"filter_us", o.timings.filter_us},
                                {"features_us", o.timings.features_us},
                                {"forward_us", o.timings.forward_us}}}});
  }
  if (o.degraded != DegradedReason::None) {
    append("degraded", {{"window_end_us", o.end_us},
                        {"reason", std::string(to_string(o.degraded))},
                        {"stream", o.stalled_stream},
                        {"stable_state", std::string(to_string(o.tracker.emitted))}});
  }
  if (o.tracker.changed) {
    append("state_change", {{"from", std::string(to_string(state_))},
                            {"to", std::string(to_string(o.tracker.emitted))},
                            {"window_end_us", o.end_us}});
    state_ = o.tracker.emitted;
    if (config_.mode == SessionMode::Adaptive) log_directive(false);
  }
}

void Session::ingest(const SimEvent& ev) {
  std::lock_guard lock(mu_);
  if (closed_) return;
  clock_us_ = std::max(clock_us_, ev.arrival_us);
  switch (ev.kind) {
    case SimEvent::Kind::Sample: {
      append_line(to_ndjson(RecordedSample{ev.stream, ev.sample}));
      for (const auto& o : pipeline_.push(ev.stream, ev.sample)) log_window(o);
      break;
    }
    case SimEvent::Kind::Probe: {
      probes_.push_back(ev.probe);
      append("probe", {{"probe_id", ev.probe.id}, {"probe_ts_us", ev.probe.ts_us}, {"deadline_us", ev.probe.deadline_us}});
      break;
    }
    case SimEvent::Kind::ProbeAnswer: {
      for (auto& p : probes_) {
        if (p.id != ev.probe.id || p.response || !ev.probe.response) continue;
        const std::int64_t ts = ev.probe.response_ts_us.value_or(clock_us_);
        const bool expired = ts > p.deadline_us;
        p.response = ev.probe.response;
        p.response_ts_us = ts;
        append("probe_response", {{"probe_id", p.id},
                                  {"rating", *ev.probe.response},
                                  {"response_ts_us", ts},
                                  {"expired", expired},
                                  {"source", "simulated"}});
        if (!expired) pipeline_.add_probe_response({ts, *ev.probe.response});
      }
      break;
    }
  }
}

void Session::advance_clock(std::int64_t t_us) {
  std::lock_guard lock(mu_);
  clock_us_ = std::max(clock_us_, t_us);
}

void Session::finish_stream() {
  std::lock_guard lock(mu_);
  if (closed_) return;
  for (const auto& o : pipeline_.finish()) log_window(o);
}

void Session::note_steer(std::optional<AttentionState> target) {
  std::lock_guard lock(mu_);
  if (closed_) return;
  append("steer", {{"target", state_json(target)}});
}

void Session::note_pause(bool paused) {
  std::lock_guard lock(mu_);
  if (closed_) return;
  append(paused ? "pause" : "resume", json::object());
}

ChatResult Session::user_message(const std::string& text) {
  ChatRequest request;
  std::int64_t sent_ts = 0;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(ErrorCode::InvalidArgument, "session " + id_ + " is closed");
    const auto directive = directive_locked();
    request = compose_prompt(directive, conversation_, text, config_.history_turns);
    request.state = state_;
    sent_ts = clock_us_;
    append("chat", {{"role", "user"},
                    {"content", text},
                    {"state_at_send", std::string(to_string(state_))},
                    {"directive_id", request.directive_id}});
    conversation_.push_back({ChatRole::User, text, sent_ts, state_, request.directive_id});
  }

  ChatResult result;
  result.state_at_send = request.state;
  result.directive_id = request.directive_id;
  try {
    result.reply = backend_->complete(request);
    result.ok = !result.reply.empty();
    if (!result.ok) result.error = "empty reply";
  } catch (const std::exception& e) {
    result.error = e.what();
  }

  std::lock_guard lock(mu_);
  if (closed_) return result;
  if (result.ok) {
    append("chat", {{"role", "assistant"},
                    {"content", result.reply},
                    {"state_at_send", std::string(to_string(request.state))},
                    {"directive_id", request.directive_id},
                    {"sent_ts_us", sent_ts}});
    conversation_.push_back({ChatRole::Assistant, result.reply, sent_ts, request.state, request.directive_id});
  } else {
    append("chat_error", {{"error", result.error},
                          {"state_at_send", std::string(to_string(request.state))},
                          {"directive_id", request.directive_id},
                          {"sent_ts_us", sent_ts}});
  }
  return result;
}

ProbeAck Session::probe_response(int probe_id, int rating, std::optional<std::int64_t> ts_us,
                                 std::string_view source) {
  if (rating < 1 || rating > 5) throw Error(ErrorCode::InvalidArgument, "probe rating must be 1..5");
  std::lock_guard lock(mu_);
  ProbeAck ack;
  ack.probe_id = probe_id;
  if (closed_) {
    ack.reason = "session closed";
    return ack;
  }
  auto it = std::find_if(probes_.begin(), probes_.end(), [&](const ProbeEvent& p) { return p.id == probe_id; });
  if (it == probes_.end()) {
    ack.reason = "unknown probe";
    return ack;
  }
  if (it->response) {
    ack.reason = "already answered";
    return ack;
  }
  const std::int64_t ts = ts_us.value_or(clock_us_);
  ack.expired = ts > it->deadline_us;
  ack.accepted = true;
  if (ack.expired) ack.reason = "deadline passed";
  it->response = rating;
  it->response_ts_us = ts;
  append("probe_response", {{"probe_id", probe_id},
                            {"rating", rating},
                            {"response_ts_us", ts},
                            {"expired", ack.expired},
                            {"source", std::string(source)}});
  if (!ack.expired) pipeline_.add_probe_response({ts, rating});
  return ack;
}

void Session::close() {
  std::lock_guard lock(mu_);
  if (closed_) return;
  for (const auto& o : pipeline_.finish()) log_window(o);
  // session_end is stamped with the clock, which is what bounds time on task.
  auto m = compute_metrics(events_, labels_, clock_us_);
  append("session_end", {{"metrics", m.to_json()},
                         {"dropped_samples", pipeline_.dropped("eeg") + pipeline_.dropped("eye")}});
  closed_ = true;
}

bool Session::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

EngagementMetrics Session::metrics() const {
  std::lock_guard lock(mu_);
  return compute_metrics(events_, labels_, clock_us_);
}

std::vector<SessionEvent> Session::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<SessionEvent> Session::events_since(std::uint64_t after_seq) const {
  std::lock_guard lock(mu_);
  // seq is the 1-based index into events_.
  const std::size_t from = std::min<std::size_t>(after_seq, events_.size());
  return {events_.begin() + static_cast<std::ptrdiff_t>(from), events_.end()};
}

std::string Session::archive_text() const {
  std::lock_guard lock(mu_);
  return archive_;
}

void Session::write_archive(std::ostream& out) const {
  std::lock_guard lock(mu_);
  out << archive_;
}

std::int64_t Session::clock_us() const {
  std::lock_guard lock(mu_);
  return clock_us_;
}

AttentionState Session::current_state() const {
  std::lock_guard lock(mu_);
  return state_;
}

AdaptationDirective Session::active_directive() const {
  std::lock_guard lock(mu_);
  return directive_locked();
}

std::uint64_t Session::dropped_samples() const {
  std::lock_guard lock(mu_);
  return pipeline_.dropped("eeg") + pipeline_.dropped("eye");
}

void drive(Session& session, ScenarioRunner& runner, std::int64_t until_us) {
  runner.advance_to(until_us, [&](const SimEvent& ev) { session.ingest(ev); });
  session.advance_clock(until_us);
}

void drive_to_end(Session& session, ScenarioRunner& runner) {
  runner.run_to_end([&](const SimEvent& ev) { session.ingest(ev); });
  session.advance_clock(runner.now_us());
  session.close();
}

json feed_message(const SessionEvent& ev) {
  const json& p = ev.payload;
  json m;
  if (ev.type == "classification") {
    m = {{"type", "state_update"},
         {"state", p.at("state")},
         {"stable_state", p.at("stable_state")},
         {"probs", p.at("probs")},
         {"window_end_us", p.at("window_end_us")},
         {"latency_us", p.at("latency_us")}};
  } else if (ev.type == "directive") {
    m = {{"type", "directive"},      {"state", p.at("state")},         {"directive_id", p.at("directive_id")},
         {"visual", p.at("visual")}, {"style", p.at("style")},         {"structure", p.at("structure")},
         {"strategy", p.at("strategy")}, {"initial", p.at("initial")}};
  } else if (ev.type == "chat") {
    m = {{"type", "chat"},
         {"role", p.at("role")},
         {"content", p.at("content")},
         {"state_at_send", p.at("state_at_send")},
         {"directive_id", p.at("directive_id")}};
  } else if (ev.type == "chat_error") {
    m = {{"type", "chat"}, {"role", "assistant"}, {"failed", true}, {"error", p.at("error")}};
  } else if (ev.type == "probe") {
    m = {{"type", "probe"}, {"probe_id", p.at("probe_id")}, {"deadline_us", p.at("deadline_us")},
         {"probe_ts_us", p.at("probe_ts_us")}};
  } else if (ev.type == "probe_response") {
    m = {{"type", "probe_ack"}, {"probe_id", p.at("probe_id")}, {"expired", p.at("expired")}};
  } else if (ev.type == "window") {
    m = {{"type", "quality"},
         {"window_end_us", p.at("end_us")},
         {"quality", p.at("quality")},
         {"low_quality", p.at("low_quality")},
         {"rejected_eye", p.at("rejected_eye")}};
  } else if (ev.type == "degraded") {
    m = {{"type", "quality"},
         {"window_end_us", p.at("window_end_us")},
         {"degraded", p.at("reason")},
         {"stream", p.at("stream")}};
  } else if (ev.type == "session_end") {
    m = {{"type", "session_end"}, {"metrics", p.at("metrics")}};
  } else {
    return nullptr;
  }
  m["version"] = kSchemaVersion;
  m["seq"] = ev.seq;
  m["ts_us"] = ev.ts_us;
  return m;
}

ParsedArchive read_archive(std::istream& in) {
  ParsedArchive out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t last_valid = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::IntegrityError, "line " + std::to_string(line_no) + ": " + what +
                                               " (last valid line " + std::to_string(last_valid) + ")");
  };
  std::optional<std::uint64_t> prev_seq;
  std::int64_t prev_ts = INT64_MIN;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (ended) fail("content after session_end");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      fail("malformed JSON");
    }
    ArchiveEntry entry;
    if (j.contains("stream")) {
      if (out.entries.empty()) fail("archive must start with session_start");
      try {
        entry.is_sample = true;
        entry.sample = parse_sample_line(line);
      } catch (const Error& e) {
        fail(e.what());
      }
    } else {
      try {
        entry.event = SessionEvent::from_json(j);
      } catch (const json::exception&) {
        fail("malformed event");
      }
      if (out.entries.empty() && entry.event.type != "session_start") fail("archive must start with session_start");
      if (prev_seq && entry.event.seq <= *prev_seq) fail("event sequence goes backwards");
      if (entry.event.ts_us < prev_ts) fail("event timestamps go backwards");
      prev_seq = entry.event.seq;
      prev_ts = entry.event.ts_us;
      if (entry.event.type == "session_start") {
        if (!out.entries.empty()) fail("second session_start");
        out.header = entry.event.payload;
      }
      if (entry.event.type == "session_end") ended = true;
      out.events.push_back(entry.event);
    }
    out.entries.push_back(std::move(entry));
    last_valid = line_no;
  }
  if (out.entries.empty()) {
    throw Error(ErrorCode::IntegrityError, "empty archive");
  }
  if (!ended) {
    throw Error(ErrorCode::IntegrityError,
                "archive truncated: no session_end (last valid line " + std::to_string(last_valid) + ")");
  }
  return out;
}

std::vector<json> derived_events(const std::vector<SessionEvent>& events) {
  static const std::set<std::string> kDerived = {"window", "features", "classification",
                                                 "state_change", "directive", "degraded"};
  std::vector<json> out;
  for (const auto& e : events) {
    if (!kDerived.contains(e.type)) continue;
    json p = e.payload;
    p.erase("latency_us");
    p.erase("timings");
    out.push_back({{"type", e.type}, {"payload", std::move(p)}});
  }
  return out;
}

std::string ReplayReport::verdict() const {
  if (match) return "MATCH: " + std::to_string(compared) + " derived events identical";
  return "MISMATCH at derived event " + std::to_string(divergence_index.value_or(0)) + ": expected " +
         expected + " got " + actual;
}

ReplayReport replay_archive(const ParsedArchive& archive, std::shared_ptr<const MlpModel> model) {
  SessionConfig cfg = config_from_header(archive.header);
  Session replay("replay", cfg, std::move(model), std::make_shared<EchoBackend>());
  for (const auto& entry : archive.entries) {
    if (entry.is_sample) {
      SimEvent ev;
      ev.kind = SimEvent::Kind::Sample;
      ev.stream = entry.sample.stream;
      ev.sample = entry.sample.sample;
      ev.arrival_us = entry.sample.sample.ts_us;
      replay.ingest(ev);
      continue;
    }
    const auto& e = entry.event;
    const auto& p = e.payload;
    if (e.type == "probe") {
      SimEvent ev;
      ev.kind = SimEvent::Kind::Probe;
      ev.probe.id = p.at("probe_id").get<int>();
      ev.probe.ts_us = p.at("probe_ts_us").get<std::int64_t>();
      ev.probe.deadline_us = p.at("deadline_us").get<std::int64_t>();
      ev.arrival_us = e.ts_us;
      replay.ingest(ev);
    } else if (e.type == "probe_response") {
      replay.probe_response(p.at("probe_id").get<int>(), p.at("rating").get<int>(),
                            p.at("response_ts_us").get<std::int64_t>(), p.at("source").get<std::string>());
    }
  }
  replay.close();

  ReplayReport r;
  const auto want = derived_events(archive.events);
  const auto got = derived_events(replay.events());
  const std::size_t n = std::min(want.size(), got.size());
  r.compared = std::max(want.size(), got.size());
  r.match = want.size() == got.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (want[i] != got[i]) {
      r.match = false;
      r.divergence_index = i;
      r.expected = want[i].dump();
      r.actual = got[i].dump();
      break;
    }
  }
  if (!r.match && !r.divergence_index) {
    r.divergence_index = n;
    r.expected = n < want.size() ? want[n].dump() : "<end>";
    r.actual = n < got.size() ? got[n].dump() : "<end>";
  }
  r.recomputed_metrics = compute_metrics(archive.events, cfg.scenario.timeline());
  for (const auto& e : archive.events) {
    if (e.type == "session_end") r.archived_metrics = EngagementMetrics::from_json(e.payload.at("metrics"));
  }
  r.metrics_match = r.archived_metrics == r.recomputed_metrics;
  return r;
}

}  // namespace neuroadapt
