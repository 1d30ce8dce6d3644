#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neuroadapt/adapt.hpp"
#include "neuroadapt/features.hpp"
#include "neuroadapt/mlp.hpp"
#include "neuroadapt/preprocess.hpp"
#include "neuroadapt/stream.hpp"

namespace neuroadapt {

struct PipelineConfig {
  WindowConfig window;
  ScreenGeometry geometry;
  std::size_t hysteresis_k = 2;
  AttentionState initial_state = AttentionState::StableAttention;
  /// Used only without a model; a model brings its own.
  FeatureConfig features;
  double eeg_rate = 250.0;
  double eye_rate = 60.0;
};

/// Wall time spent in each stage, microseconds.
struct StageTimings {
  std::int64_t filter_us = 0;
  std::int64_t features_us = 0;
  std::int64_t forward_us = 0;
  std::int64_t total_us = 0;
};

enum class DegradedReason { None, StreamStalled, MissingFeatures };

std::string_view to_string(DegradedReason r);

/// Everything produced for one window end.
struct WindowOutcome {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::optional<AttentionState> label;
  std::size_t eeg_count = 0;
  std::size_t eye_count = 0;
  std::size_t probe_count = 0;
  double quality = 0.0;
  bool low_quality = false;
  std::size_t rejected_eye = 0;
  std::size_t artifact_spans = 0;
  std::optional<WindowFeatures> features;
  std::optional<Classification> classification;
  StateTracker::Update tracker;
  DegradedReason degraded = DegradedReason::None;
  std::string stalled_stream;
  StageTimings timings;
};

/// Window scheduler plus preprocessing, features, classifier and hysteresis.
/// Output depends only on the per-stream sample sequences, so replaying an
/// archive reproduces it exactly (timings aside). Without a model it stops
/// after feature extraction.
class Pipeline {
 public:
  Pipeline(std::shared_ptr<const MlpModel> model, PipelineConfig config = {}, LabelTimeline labels = {});

  /// Feeds one sample ("eeg" or "eye") and returns windows that became ready.
  std::vector<WindowOutcome> push(const std::string& stream, TimestampedSample sample);
  void add_probe_response(ProbeResponse response) { hub_.add_probe_response(response); }

  /// Windows that are still pending when the streams end.
  std::vector<WindowOutcome> finish();

  const StateTracker& tracker() const { return tracker_; }
  const StreamHub& hub() const { return hub_; }
  std::uint64_t dropped(const std::string& stream) const { return hub_.dropped(hub_.handle(stream)); }
  std::int64_t next_window_end() const { return next_at_; }
  const MlpModel* model() const { return model_.get(); }
  const FeatureConfig& feature_config() const { return features_; }

 private:
  std::vector<WindowOutcome> poll(bool flushing);
  WindowOutcome process(const AlignedWindow& w);

  std::shared_ptr<const MlpModel> model_;
  PipelineConfig config_;
  FeatureConfig features_;
  StreamHub hub_;
  StreamHandle eeg_;
  StreamHandle eye_;
  StateTracker tracker_;
  std::int64_t next_at_;
  std::deque<std::int64_t> recent_onsets_;
};

}  // namespace neuroadapt
