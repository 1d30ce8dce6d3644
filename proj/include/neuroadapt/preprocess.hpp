#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "neuroadapt/stream.hpp"

namespace neuroadapt {

inline constexpr std::size_t kLowpassTaps = 101;
inline constexpr double kLowpassCutoffHz = 48.0;
inline constexpr double kEegRateHz = 250.0;
inline constexpr std::size_t kMinWindowSamples = 1248;
inline constexpr std::int64_t kBlinkPreUs = 50'000;
inline constexpr std::int64_t kBlinkPostUs = 300'000;

/// Hamming-windowed sinc low-pass with unit DC gain. The cutoff is the
/// half-amplitude (-6 dB) point.
std::vector<double> design_lowpass(std::size_t taps = kLowpassTaps,
                                   double cutoff_hz = kLowpassCutoffHz,
                                   double rate_hz = kEegRateHz);

/// One tap per line, full precision.
void write_taps(std::ostream& out, std::span<const double> taps);

/// |H(f)| of a symmetric FIR evaluated directly.
double magnitude_response(std::span<const double> taps, double freq_hz, double rate_hz);

/// Window mean removal (the 0.25 Hz high-pass stand-in) followed by the
/// 101-tap low-pass. The filter is applied centred on each sample, which
/// cancels its 50-sample (200 ms) group delay; edges are reflection padded so
/// the output has the input's length. Throws WindowUnderfull below 1248
/// samples.
std::vector<double> filter_eeg(std::span<const double> eeg);

struct ArtifactSpan {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;  // inclusive

  bool operator==(const ArtifactSpan&) const = default;
};

struct BlinkRemoval {
  std::vector<double> eeg;
  std::vector<ArtifactSpan> spans;
};

/// Replaces [onset - 50 ms, onset + 300 ms] around each blink with a straight
/// line between the neighbouring untouched samples. Spans are clipped to the
/// sample range and overlapping spans are merged.
BlinkRemoval remove_blink_artifacts(std::span<const double> eeg, std::span<const std::int64_t> ts_us,
                                    std::span<const std::int64_t> blink_onsets_us);

struct ScreenResult {
  std::vector<TimestampedSample> valid;
  std::size_t rejected = 0;
  double quality = 0.0;
  bool low_quality = false;  // more than half of the samples rejected
};

bool eye_sample_valid(const TimestampedSample& s);

ScreenResult screen_eye(std::span<const TimestampedSample> eye, double rate_hz = 60.0,
                        std::int64_t window_us = kWindowLengthUs);

/// First sample of every run of blink_flag = 1.
std::vector<std::int64_t> blink_onsets(std::span<const TimestampedSample> eye);

struct CleanWindow {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::vector<double> eeg_filtered;
  std::vector<TimestampedSample> eye_valid;
  std::size_t rejected_eye_count = 0;
  std::vector<ArtifactSpan> artifact_spans;
  double quality = 0.0;
  bool low_quality = false;
  /// Blinks starting inside the window, counted before screening.
  std::size_t blink_count = 0;
};

/// Artifact removal, filtering and screening for one window. `prior_onsets`
/// may list blinks seen before the window whose EEG transient can still reach
/// into it.
CleanWindow clean_window(const AlignedWindow& window,
                         std::span<const std::int64_t> prior_onsets = {});

}  // namespace neuroadapt
