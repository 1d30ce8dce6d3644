#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuroadapt/attention.hpp"

namespace neuroadapt {

inline constexpr std::int64_t kWindowLengthUs = 5'000'000;
inline constexpr std::int64_t kHopUs = 1'000'000;
inline constexpr std::int64_t kStallUs = 1'000'000;

enum class StreamKind { EEG, EYE, MARKER, PROBE };

std::string_view to_string(StreamKind kind);

struct StreamDescriptor {
  std::string name;
  StreamKind kind = StreamKind::EEG;
  /// Samples per second; 0 for irregular MARKER/PROBE streams.
  double nominal_rate = 0.0;
  std::size_t channel_count = 0;
  std::vector<std::string> channel_labels;

  /// Throws DescriptorMismatch when the invariants do not hold.
  void validate() const;

  std::int64_t period_us() const;

  static StreamDescriptor eeg(std::string name = "eeg", double rate = 250.0);
  static StreamDescriptor eye(std::string name = "eye", double rate = 60.0);
};

/// Channel layout of an EYE sample.
namespace eye {
inline constexpr std::size_t kGazeX = 0;
inline constexpr std::size_t kGazeY = 1;
inline constexpr std::size_t kPupilLeft = 2;
inline constexpr std::size_t kPupilRight = 3;
inline constexpr std::size_t kValidity = 4;
inline constexpr std::size_t kBlink = 5;
inline constexpr std::size_t kChannels = 6;
}  // namespace eye

struct TimestampedSample {
  std::int64_t ts_us = 0;
  std::vector<double> values;

  bool operator==(const TimestampedSample&) const = default;
};

/// Holds the most recent `capacity_us` of one stream. Appending evicts from the
/// front so that newest - oldest never exceeds the capacity.
class RingBuffer {
 public:
  RingBuffer(std::int64_t capacity_us, std::int64_t period_us);

  void push(TimestampedSample sample);

  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  const TimestampedSample& oldest() const { return samples_.front(); }
  const TimestampedSample& newest() const { return samples_.back(); }
  std::int64_t capacity_us() const { return capacity_us_; }
  std::int64_t period_us() const { return period_us_; }

  /// Samples with start_us <= ts < end_us, in order.
  std::vector<TimestampedSample> slice(std::int64_t start_us, std::int64_t end_us) const;

 private:
  std::int64_t capacity_us_;
  std::int64_t period_us_;
  std::deque<TimestampedSample> samples_;
};

struct LabelSegment {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::optional<AttentionState> label;  // nullopt for rest periods
};

/// Ground-truth block schedule. A window takes the label of the segment that
/// covers most of it; exact ties go to the later segment.
class LabelTimeline {
 public:
  LabelTimeline() = default;
  explicit LabelTimeline(std::vector<LabelSegment> segments);

  std::optional<AttentionState> label_for(std::int64_t start_us, std::int64_t end_us) const;
  std::optional<AttentionState> label_at(std::int64_t ts_us) const;
  /// Index of the segment containing ts, if any.
  std::optional<std::size_t> segment_at(std::int64_t ts_us) const;

  const std::vector<LabelSegment>& segments() const { return segments_; }

 private:
  std::vector<LabelSegment> segments_;
};

struct ProbeResponse {
  std::int64_t ts_us = 0;
  int rating = 0;  // 1 (distracted) .. 5 (focused)

  bool operator==(const ProbeResponse&) const = default;
};

struct AlignedWindow {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::vector<TimestampedSample> eeg;
  std::vector<TimestampedSample> eye;
  std::optional<AttentionState> label;
  std::vector<ProbeResponse> probe_responses;
};

struct StreamHandle {
  std::size_t index = 0;
};

enum class PushStatus { Accepted, OutOfOrder };

enum class WindowStatus { Ready, NotReady, Stalled };

enum class NotReadyReason { None, ColdStart, Pending };

struct WindowResult {
  WindowStatus status = WindowStatus::NotReady;
  NotReadyReason reason = NotReadyReason::None;
  std::optional<AlignedWindow> window;
  std::string stalled_stream;
};

struct WindowConfig {
  std::int64_t length_us = kWindowLengthUs;
  std::int64_t hop_us = kHopUs;
  /// Window end times lie on origin + k * hop.
  std::int64_t origin_us = 0;
  std::int64_t stall_us = kStallUs;
};

/// Session-level registry of streams plus the windowing logic that merges the
/// EEG and EYE buffers into aligned windows. Samples are binned by their own
/// timestamps, so the relative arrival order of different streams does not
/// matter; each stream must still arrive in timestamp order.
///
/// When a push crosses a window boundary, that stream's segment for the
/// boundary is captured before eviction can touch it. A window is released
/// once every windowed stream has its segment.
class StreamHub {
 public:
  explicit StreamHub(WindowConfig config = {});

  StreamHandle open_stream(StreamDescriptor desc);
  StreamHandle handle(const std::string& name) const;

  /// OutOfOrder samples are dropped and counted.
  PushStatus push(StreamHandle handle, TimestampedSample sample);

  WindowResult extract_window(std::int64_t at_us);

  void set_labels(LabelTimeline timeline) { labels_ = std::move(timeline); }
  const LabelTimeline& labels() const { return labels_; }
  void add_probe_response(ProbeResponse response);

  std::uint64_t dropped(StreamHandle handle) const;
  const RingBuffer& buffer(StreamHandle handle) const;
  const StreamDescriptor& descriptor(StreamHandle handle) const;
  std::size_t stream_count() const { return streams_.size(); }
  const WindowConfig& config() const { return config_; }

  /// Largest timestamp accepted on any windowed stream.
  std::optional<std::int64_t> latest_ts() const { return latest_ts_; }

 private:
  struct Stream {
    StreamDescriptor desc;
    RingBuffer buffer;
    std::optional<std::int64_t> first_ts;
    std::optional<std::int64_t> last_ts;
    std::uint64_t dropped = 0;
    std::map<std::int64_t, std::vector<TimestampedSample>> captured;
  };

  bool windowed(const Stream& s) const;
  bool spans_window(const Stream& s, std::int64_t at_us) const;
  void capture_crossed(Stream& s, std::int64_t new_ts);

  WindowConfig config_;
  std::vector<Stream> streams_;
  LabelTimeline labels_;
  std::vector<ProbeResponse> probes_;
  std::optional<std::int64_t> latest_ts_;
  std::optional<std::int64_t> last_extracted_;
};

}  // namespace neuroadapt
