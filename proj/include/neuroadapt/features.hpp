#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neuroadapt/preprocess.hpp"
#include "neuroadapt/stream.hpp"

namespace neuroadapt {

struct BandPower {
  double theta = 0.0;  // 4-7 Hz, µV²
  double alpha = 0.0;  // 8-12 Hz
  double beta = 0.0;   // 13-30 Hz
};

struct Band {
  double lo_hz;
  double hi_hz;
};
inline constexpr Band kTheta{4.0, 7.0};
inline constexpr Band kAlpha{8.0, 12.0};
inline constexpr Band kBeta{13.0, 30.0};

/// One-sided PSD; psd[k] is the density at k * df.
struct PsdEstimate {
  double df = 0.0;
  std::vector<double> psd;

  /// Sum of psd * df over bins with lo <= f <= hi.
  double integrate(double lo_hz, double hi_hz) const;
  /// Integral over (0, Nyquist].
  double total() const;
};

/// Welch estimate with periodic Hann segments of `segment` samples and 50%
/// overlap. Each segment is mean-detrended. Scaled so that the integral over
/// (0, Nyquist] equals the variance of a stationary input.
PsdEstimate welch_psd(std::span<const double> x, double rate_hz = kEegRateHz,
                      std::size_t segment = 250);

BandPower band_powers(std::span<const double> eeg_filtered, double rate_hz = kEegRateHz);

inline constexpr double kEngagementEpsilon = 1e-12;
inline constexpr double kEngagementCap = 1e6;

struct Engagement {
  double value = 0.0;
  bool saturated = false;
};

/// beta / (alpha + theta), capped when the denominator vanishes.
Engagement engagement_index(const BandPower& bp);

/// Maps normalized gaze to visual angle. Defaults: 530 x 300 mm screen viewed
/// from 600 mm.
struct ScreenGeometry {
  double width_mm = 530.0;
  double height_mm = 300.0;
  double viewing_distance_mm = 600.0;

  double angle_deg(double x0, double y0, double x1, double y1) const;
};

inline constexpr double kSaccadeThresholdDegPerS = 30.0;
inline constexpr std::int64_t kMinFixationUs = 100'000;

struct Fixation {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;  // start of the last sample plus one period
  std::size_t samples = 0;

  double duration_ms() const { return static_cast<double>(end_us - start_us) * 1e-3; }
};

struct Saccade {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  double peak_velocity_deg_s = 0.0;
};

struct GazeEvents {
  std::vector<Fixation> fixations;
  std::vector<Saccade> saccades;
};

/// Velocity-threshold (I-VT) segmentation. Each step between consecutive
/// samples is saccadic when its angular velocity exceeds 30 deg/s; consecutive
/// saccadic steps form one saccade; the samples between saccades form a
/// fixation if they last at least 100 ms.
GazeEvents detect_fixations_saccades(std::span<const TimestampedSample> eye_valid,
                                     const ScreenGeometry& geometry = {},
                                     std::int64_t period_us = 16'667);

struct EyeFeatures {
  double fixation_mean_ms = 0.0;
  double gaze_dispersion = 0.0;
  double saccade_rate = 0.0;
  double blink_rate = 0.0;
  double pupil_variability = 0.0;
  std::size_t fixation_count = 0;
};

/// RMS distance of gaze points from their centroid.
double gaze_dispersion(std::span<const TimestampedSample> eye_valid);

/// Rates are per second of retained data (quality * window length). Returns
/// nullopt when nothing valid survived screening.
std::optional<EyeFeatures> eye_features(std::span<const TimestampedSample> eye_valid,
                                        const GazeEvents& events, std::size_t blink_count,
                                        double quality, std::int64_t window_us = kWindowLengthUs);

struct FeatureConfig {
  bool include_fixation_count = false;
};

/// Field order is part of the model contract.
std::vector<std::string> feature_names(const FeatureConfig& config);

struct FeatureVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

/// Throws FusionError if any part is non-finite.
FeatureVector fuse(const BandPower& bp, double engagement, const EyeFeatures& eye,
                   const FeatureConfig& config = {});

struct WindowFeatures {
  BandPower bands;
  Engagement engagement;
  std::optional<EyeFeatures> eye;
  std::optional<FeatureVector> vector;  // empty when eye features are missing
};

WindowFeatures extract_features(const CleanWindow& window, const FeatureConfig& config = {},
                                const ScreenGeometry& geometry = {});

std::string feature_csv_header(const FeatureConfig& config);

}  // namespace neuroadapt
