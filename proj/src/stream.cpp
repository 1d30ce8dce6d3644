#include "neuroadapt/stream.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

// Upper bound on captured-but-unreleased segments per stream.
constexpr std::size_t kMaxCaptured = 16;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::EEG: return "EEG";
    case StreamKind::EYE: return "EYE";
    case StreamKind::MARKER: return "MARKER";
    case StreamKind::PROBE: return "PROBE";
  }
  return "?";
}

void StreamDescriptor::validate() const {
  if (name.empty()) throw Error(ErrorCode::DescriptorMismatch, "stream name is empty");
  if (channel_count == 0) {
    throw Error(ErrorCode::DescriptorMismatch, "stream '" + name + "' has no channels");
  }
  if (channel_labels.size() != channel_count) {
    throw Error(ErrorCode::DescriptorMismatch,
                "stream '" + name + "' declares " + std::to_string(channel_count) +
                    " channels but " + std::to_string(channel_labels.size()) + " labels");
  }
  const bool regular = kind == StreamKind::EEG || kind == StreamKind::EYE;
  if (regular && !(nominal_rate > 0.0)) {
    throw Error(ErrorCode::DescriptorMismatch, "stream '" + name + "' needs a positive rate");
  }
  if (!regular && nominal_rate != 0.0) {
    throw Error(ErrorCode::DescriptorMismatch,
                "irregular stream '" + name + "' must use rate 0");
  }
  if (kind == StreamKind::EYE && channel_count != eye::kChannels) {
    throw Error(ErrorCode::DescriptorMismatch,
                "eye stream '" + name + "' must carry 6 channels");
  }
}

std::int64_t StreamDescriptor::period_us() const {
  if (nominal_rate <= 0.0) return 0;
  return static_cast<std::int64_t>(std::llround(1e6 / nominal_rate));
}

StreamDescriptor StreamDescriptor::eeg(std::string name, double rate) {
  return {std::move(name), StreamKind::EEG, rate, 1, {"Fp1"}};
}

StreamDescriptor StreamDescriptor::eye(std::string name, double rate) {
  return {std::move(name),
          StreamKind::EYE,
          rate,
          eye::kChannels,
          {"gaze_x", "gaze_y", "pupil_left", "pupil_right", "validity", "blink"}};
}

RingBuffer::RingBuffer(std::int64_t capacity_us, std::int64_t period_us)
    : capacity_us_(capacity_us), period_us_(period_us) {}

void RingBuffer::push(TimestampedSample sample) {
  samples_.push_back(std::move(sample));
  const std::int64_t newest = samples_.back().ts_us;
  while (newest - samples_.front().ts_us > capacity_us_) samples_.pop_front();
}

std::vector<TimestampedSample> RingBuffer::slice(std::int64_t start_us, std::int64_t end_us) const {
  auto lo = std::lower_bound(samples_.begin(), samples_.end(), start_us,
                             [](const TimestampedSample& s, std::int64_t t) { return s.ts_us < t; });
  auto hi = std::lower_bound(lo, samples_.end(), end_us,
                             [](const TimestampedSample& s, std::int64_t t) { return s.ts_us < t; });
  return {lo, hi};
}

LabelTimeline::LabelTimeline(std::vector<LabelSegment> segments) : segments_(std::move(segments)) {
  std::sort(segments_.begin(), segments_.end(),
            [](const LabelSegment& a, const LabelSegment& b) { return a.start_us < b.start_us; });
}

std::optional<AttentionState> LabelTimeline::label_for(std::int64_t start_us,
                                                       std::int64_t end_us) const {
  std::int64_t best_cover = 0;
  const LabelSegment* best = nullptr;
  for (const auto& seg : segments_) {
    const std::int64_t cover =
        std::min(end_us, seg.end_us) - std::max(start_us, seg.start_us);
    // >= so that a tie goes to the later segment.
    if (cover > 0 && cover >= best_cover) {
      best_cover = cover;
      best = &seg;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->label;
}

std::optional<AttentionState> LabelTimeline::label_at(std::int64_t ts_us) const {
  if (auto i = segment_at(ts_us)) return segments_[*i].label;
  return std::nullopt;
}

std::optional<std::size_t> LabelTimeline::segment_at(std::int64_t ts_us) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].start_us <= ts_us && ts_us < segments_[i].end_us) return i;
  }
  return std::nullopt;
}

StreamHub::StreamHub(WindowConfig config) : config_(config) {
  if (config_.length_us <= 0 || config_.hop_us <= 0) {
    throw Error(ErrorCode::InvalidArgument, "window length and hop must be positive");
  }
}

StreamHandle StreamHub::open_stream(StreamDescriptor desc) {
  desc.validate();
  for (const auto& s : streams_) {
    if (s.desc.name == desc.name) {
      throw Error(ErrorCode::DuplicateStream, "stream '" + desc.name + "' already open");
    }
  }
  const std::int64_t period = desc.period_us();
  streams_.push_back(Stream{std::move(desc), RingBuffer(config_.length_us, period), {}, {}, 0, {}});
  return StreamHandle{streams_.size() - 1};
}

StreamHandle StreamHub::handle(const std::string& name) const {
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    if (streams_[i].desc.name == name) return StreamHandle{i};
  }
  throw Error(ErrorCode::UnknownStream, "no stream named '" + name + "'");
}

bool StreamHub::windowed(const Stream& s) const {
  return s.desc.kind == StreamKind::EEG || s.desc.kind == StreamKind::EYE;
}

bool StreamHub::spans_window(const Stream& s, std::int64_t at_us) const {
  return s.first_ts && *s.first_ts <= at_us - config_.length_us + s.buffer.period_us() / 2;
}

void StreamHub::capture_crossed(Stream& s, std::int64_t new_ts) {
  if (!s.last_ts) return;
  std::int64_t k = floor_div(*s.last_ts - config_.origin_us, config_.hop_us) + 1;
  for (std::int64_t b = config_.origin_us + k * config_.hop_us; b <= new_ts;
       b += config_.hop_us) {
    if (last_extracted_ && b <= *last_extracted_) continue;
    if (!spans_window(s, b)) continue;
    s.captured[b] = s.buffer.slice(b - config_.length_us, b);
    while (s.captured.size() > kMaxCaptured) s.captured.erase(s.captured.begin());
  }
}

PushStatus StreamHub::push(StreamHandle handle, TimestampedSample sample) {
  if (handle.index >= streams_.size()) throw Error(ErrorCode::UnknownStream, "bad stream handle");
  Stream& s = streams_[handle.index];
  if (sample.values.size() != s.desc.channel_count) {
    throw Error(ErrorCode::DescriptorMismatch,
                "sample on '" + s.desc.name + "' has " + std::to_string(sample.values.size()) +
                    " values, expected " + std::to_string(s.desc.channel_count));
  }
  if (s.last_ts && sample.ts_us <= *s.last_ts) {
    ++s.dropped;
    return PushStatus::OutOfOrder;
  }
  if (windowed(s)) {
    capture_crossed(s, sample.ts_us);
    latest_ts_ = std::max(latest_ts_.value_or(sample.ts_us), sample.ts_us);
  }
  if (!s.first_ts) s.first_ts = sample.ts_us;
  s.last_ts = sample.ts_us;
  s.buffer.push(std::move(sample));
  return PushStatus::Accepted;
}

void StreamHub::add_probe_response(ProbeResponse response) {
  if (response.rating < 1 || response.rating > 5) {
    throw Error(ErrorCode::InvalidArgument, "probe rating must be in 1..5");
  }
  probes_.push_back(response);
}

WindowResult StreamHub::extract_window(std::int64_t at_us) {
  const std::int64_t start_us = at_us - config_.length_us;
  WindowResult result;
  std::vector<const std::vector<TimestampedSample>*> captured(streams_.size(), nullptr);
  std::vector<std::vector<TimestampedSample>> lazy(streams_.size());

  bool cold = false;
  bool pending = false;
  std::string stalled;
  bool any_windowed = false;
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    Stream& s = streams_[i];
    if (!windowed(s)) continue;
    any_windowed = true;
    if (auto it = s.captured.find(at_us); it != s.captured.end()) {
      captured[i] = &it->second;
      continue;
    }
    if (!spans_window(s, at_us)) {
      cold = true;
      continue;
    }
    const std::int64_t newest = *s.last_ts;
    if (newest + s.buffer.period_us() >= at_us) {
      lazy[i] = s.buffer.slice(start_us, at_us);
      captured[i] = &lazy[i];
    } else if (at_us - newest > config_.stall_us) {
      if (stalled.empty()) stalled = s.desc.name;
    } else {
      pending = true;
    }
  }

  if (!any_windowed || cold) {
    result.status = WindowStatus::NotReady;
    result.reason = NotReadyReason::ColdStart;
    return result;
  }
  if (!stalled.empty()) {
    result.status = WindowStatus::Stalled;
    result.stalled_stream = stalled;
    last_extracted_ = std::max(last_extracted_.value_or(at_us), at_us);
    return result;
  }
  if (pending) {
    result.status = WindowStatus::NotReady;
    result.reason = NotReadyReason::Pending;
    return result;
  }

  AlignedWindow w;
  w.start_us = start_us;
  w.end_us = at_us;
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    if (captured[i] == nullptr) continue;
    auto& dst = streams_[i].desc.kind == StreamKind::EEG ? w.eeg : w.eye;
    // Only the first stream of each kind feeds the window.
    if (dst.empty()) dst = *captured[i];
  }
  w.label = labels_.label_for(start_us, at_us);
  for (const auto& p : probes_) {
    if (p.ts_us >= start_us && p.ts_us < at_us) w.probe_responses.push_back(p);
  }

  last_extracted_ = std::max(last_extracted_.value_or(at_us), at_us);
  for (auto& s : streams_) {
    s.captured.erase(s.captured.begin(), s.captured.upper_bound(*last_extracted_));
  }
  const std::int64_t keep_from = *last_extracted_ + config_.hop_us - config_.length_us;
  std::erase_if(probes_, [&](const ProbeResponse& p) { return p.ts_us < keep_from; });

  result.status = WindowStatus::Ready;
  result.window = std::move(w);
  return result;
}

std::uint64_t StreamHub::dropped(StreamHandle handle) const {
  return streams_.at(handle.index).dropped;
}

const RingBuffer& StreamHub::buffer(StreamHandle handle) const {
  return streams_.at(handle.index).buffer;
}

const StreamDescriptor& StreamHub::descriptor(StreamHandle handle) const {
  return streams_.at(handle.index).desc;
}

}  // namespace neuroadapt
