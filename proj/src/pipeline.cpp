#include "neuroadapt/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t micros_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
}

}  // namespace

std::string_view to_string(DegradedReason r) {
  switch (r) {
    case DegradedReason::None: return "None";
    case DegradedReason::StreamStalled: return "StreamStalled";
    case DegradedReason::MissingFeatures: return "MissingFeatures";
  }
  return "None";
}

Pipeline::Pipeline(std::shared_ptr<const MlpModel> model, PipelineConfig config, LabelTimeline labels)
    : model_(std::move(model)),
      config_(config),
      features_(model_ ? model_->feature_config : config.features),
      hub_(config.window),
      tracker_(config.hysteresis_k, config.initial_state),
      next_at_(config.window.origin_us + config.window.length_us) {
  if (model_) {
    model_->validate();
    if (model_->input_dim != feature_names(features_).size()) {
      throw Error(ErrorCode::ModelContractError, "model input_dim does not match its feature order");
    }
  }
  eeg_ = hub_.open_stream(StreamDescriptor::eeg("eeg", config.eeg_rate));
  eye_ = hub_.open_stream(StreamDescriptor::eye("eye", config.eye_rate));
  hub_.set_labels(std::move(labels));
}

std::vector<WindowOutcome> Pipeline::push(const std::string& stream, TimestampedSample sample) {
  const StreamHandle h = stream == "eeg" ? eeg_ : stream == "eye" ? eye_ : hub_.handle(stream);
  hub_.push(h, std::move(sample));
  return poll(false);
}

std::vector<WindowOutcome> Pipeline::finish() { return poll(true); }

std::vector<WindowOutcome> Pipeline::poll(bool flushing) {
  std::vector<WindowOutcome> out;
  const auto latest = hub_.latest_ts();
  if (!latest) return out;
  while (next_at_ <= *latest) {
    WindowResult r = hub_.extract_window(next_at_);
    if (r.status == WindowStatus::Ready) {
      out.push_back(process(*r.window));
    } else if (r.status == WindowStatus::Stalled) {
      WindowOutcome o;
      o.start_us = next_at_ - config_.window.length_us;
      o.end_us = next_at_;
      o.label = hub_.labels().label_for(o.start_us, o.end_us);
      o.degraded = DegradedReason::StreamStalled;
      o.stalled_stream = r.stalled_stream;
      o.tracker = tracker_.hold_degraded();
      out.push_back(std::move(o));
    } else if (r.reason == NotReadyReason::Pending && !flushing) {
      break;
    }
    // Cold start, or a window that can no longer complete at end of stream.
    next_at_ += config_.window.hop_us;
  }
  return out;
}

WindowOutcome Pipeline::process(const AlignedWindow& w) {
  const auto t0 = Clock::now();
  WindowOutcome o;
  o.start_us = w.start_us;
  o.end_us = w.end_us;
  o.label = w.label;
  o.eeg_count = w.eeg.size();
  o.eye_count = w.eye.size();
  o.probe_count = w.probe_responses.size();

  // Blinks just before the window can still bleed into its first samples.
  const std::int64_t reach = w.start_us - kBlinkPostUs;
  while (!recent_onsets_.empty() && recent_onsets_.front() < reach) recent_onsets_.pop_front();
  std::vector<std::int64_t> prior;
  for (auto t : recent_onsets_) {
    if (t < w.start_us) prior.push_back(t);
  }

  const auto tf = Clock::now();
  CleanWindow clean = clean_window(w, prior);
  o.timings.filter_us = micros_since(tf);
  o.quality = clean.quality;
  o.low_quality = clean.low_quality;
  o.rejected_eye = clean.rejected_eye_count;
  o.artifact_spans = clean.artifact_spans.size();

  for (auto t : blink_onsets(w.eye)) {
    if (recent_onsets_.empty() || t > recent_onsets_.back()) recent_onsets_.push_back(t);
  }

  const auto tx = Clock::now();
  WindowFeatures f = extract_features(clean, features_, config_.geometry);
  o.timings.features_us = micros_since(tx);

  if (f.vector && !model_) {
    o.timings.total_us = micros_since(t0);
  } else if (f.vector) {
    const auto tm = Clock::now();
    Classification c = forward(*model_, *f.vector, w.end_us);
    o.timings.forward_us = micros_since(tm);
    o.timings.total_us = micros_since(t0);
    c.latency_us = o.timings.total_us;
    o.tracker = tracker_.update(c);
    o.classification = c;
  } else {
    o.degraded = DegradedReason::MissingFeatures;
    o.tracker = tracker_.hold_degraded();
    o.timings.total_us = micros_since(t0);
  }
  o.features = std::move(f);
  return o;
}

}  // namespace neuroadapt
