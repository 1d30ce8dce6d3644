#include "neuroadapt/features.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

double ScreenGeometry::angle_deg(double x0, double y0, double x1, double y1) const {
  const double ax = (x0 - 0.5) * width_mm;
  const double ay = (y0 - 0.5) * height_mm;
  const double bx = (x1 - 0.5) * width_mm;
  const double by = (y1 - 0.5) * height_mm;
  const double d = viewing_distance_mm;
  // Angle between the two eye-to-point rays.
  const double cx = ay * d - d * by;
  const double cy = d * bx - ax * d;
  const double cz = ax * by - ay * bx;
  const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  const double dot = ax * bx + ay * by + d * d;
  return std::atan2(cross, dot) * 180.0 / std::numbers::pi;
}

GazeEvents detect_fixations_saccades(std::span<const TimestampedSample> eye_valid,
                                     const ScreenGeometry& geometry, std::int64_t period_us) {
  GazeEvents ev;
  const std::size_t n = eye_valid.size();
  if (n < 2) return ev;

  std::vector<double> velocity(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& a = eye_valid[i].values;
    const auto& b = eye_valid[i + 1].values;
    const double dt = static_cast<double>(eye_valid[i + 1].ts_us - eye_valid[i].ts_us) * 1e-6;
    const double deg = geometry.angle_deg(a[eye::kGazeX], a[eye::kGazeY], b[eye::kGazeX], b[eye::kGazeY]);
    velocity[i] = dt > 0.0 ? deg / dt : 0.0;
  }

  std::size_t run_start = 0;  // first sample of the current non-saccadic run
  auto close_run = [&](std::size_t last) {
    Fixation f;
    f.start_us = eye_valid[run_start].ts_us;
    f.end_us = eye_valid[last].ts_us + period_us;
    f.samples = last - run_start + 1;
    if (f.end_us - f.start_us >= kMinFixationUs) ev.fixations.push_back(f);
  };

  std::size_t i = 0;
  while (i + 1 < n) {
    if (velocity[i] <= kSaccadeThresholdDegPerS) {
      ++i;
      continue;
    }
    close_run(i);
    Saccade s;
    s.start_us = eye_valid[i].ts_us;
    while (i + 1 < n && velocity[i] > kSaccadeThresholdDegPerS) {
      s.peak_velocity_deg_s = std::max(s.peak_velocity_deg_s, velocity[i]);
      ++i;
    }
    s.end_us = eye_valid[i].ts_us;
    ev.saccades.push_back(s);
    run_start = i;
  }
  close_run(n - 1);
  return ev;
}

double gaze_dispersion(std::span<const TimestampedSample> eye_valid) {
  if (eye_valid.empty()) return 0.0;
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& s : eye_valid) {
    cx += s.values[eye::kGazeX];
    cy += s.values[eye::kGazeY];
  }
  const double n = static_cast<double>(eye_valid.size());
  cx /= n;
  cy /= n;
  double sq = 0.0;
  for (const auto& s : eye_valid) {
    const double dx = s.values[eye::kGazeX] - cx;
    const double dy = s.values[eye::kGazeY] - cy;
    sq += dx * dx + dy * dy;
  }
  return std::sqrt(sq / n);
}

std::optional<EyeFeatures> eye_features(std::span<const TimestampedSample> eye_valid,
                                        const GazeEvents& events, std::size_t blink_count,
                                        double quality, std::int64_t window_us) {
  const double retained_s = quality * static_cast<double>(window_us) * 1e-6;
  if (eye_valid.empty() || !(retained_s > 0.0)) return std::nullopt;

  EyeFeatures f;
  f.fixation_count = events.fixations.size();
  if (!events.fixations.empty()) {
    double total = 0.0;
    for (const auto& fx : events.fixations) total += fx.duration_ms();
    f.fixation_mean_ms = total / static_cast<double>(events.fixations.size());
  }
  f.gaze_dispersion = gaze_dispersion(eye_valid);
  f.saccade_rate = static_cast<double>(events.saccades.size()) / retained_s;
  f.blink_rate = static_cast<double>(blink_count) / retained_s;

  double mean = 0.0;
  for (const auto& s : eye_valid) {
    mean += 0.5 * (s.values[eye::kPupilLeft] + s.values[eye::kPupilRight]);
  }
  mean /= static_cast<double>(eye_valid.size());
  double var = 0.0;
  for (const auto& s : eye_valid) {
    const double d = 0.5 * (s.values[eye::kPupilLeft] + s.values[eye::kPupilRight]) - mean;
    var += d * d;
  }
  f.pupil_variability = std::sqrt(var / static_cast<double>(eye_valid.size()));
  return f;
}

std::vector<std::string> feature_names(const FeatureConfig& config) {
  std::vector<std::string> names = {"theta",          "alpha",        "beta",
                                    "engagement",     "fixation_mean_ms", "gaze_dispersion",
                                    "saccade_rate",   "blink_rate",   "pupil_variability"};
  if (config.include_fixation_count) names.emplace_back("fixation_count");
  return names;
}

FeatureVector fuse(const BandPower& bp, double engagement, const EyeFeatures& eye,
                   const FeatureConfig& config) {
  FeatureVector fv;
  fv.values = {bp.theta,           bp.alpha,           bp.beta,
               engagement,         eye.fixation_mean_ms, eye.gaze_dispersion,
               eye.saccade_rate,   eye.blink_rate,     eye.pupil_variability};
  if (config.include_fixation_count) fv.values.push_back(static_cast<double>(eye.fixation_count));
  const auto names = feature_names(config);
  for (std::size_t i = 0; i < fv.values.size(); ++i) {
    if (!std::isfinite(fv.values[i])) {
      throw Error(ErrorCode::FusionError, "feature '" + names[i] + "' is not finite");
    }
  }
  return fv;
}

WindowFeatures extract_features(const CleanWindow& window, const FeatureConfig& config,
                                const ScreenGeometry& geometry) {
  WindowFeatures wf;
  wf.bands = band_powers(window.eeg_filtered);
  wf.engagement = engagement_index(wf.bands);
  const auto events = detect_fixations_saccades(window.eye_valid, geometry);
  wf.eye = eye_features(window.eye_valid, events, window.blink_count, window.quality,
                        window.end_us - window.start_us);
  if (wf.eye) wf.vector = fuse(wf.bands, wf.engagement.value, *wf.eye, config);
  return wf;
}

std::string feature_csv_header(const FeatureConfig& config) {
  std::ostringstream out;
  out << "window_end_us";
  for (const auto& n : feature_names(config)) out << ',' << n;
  return out.str();
}

}  // namespace neuroadapt
