#include "neuroadapt/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

const std::vector<double>& default_taps() {
  static const std::vector<double> taps = design_lowpass();
  return taps;
}

}  // namespace

std::vector<double> design_lowpass(std::size_t taps, double cutoff_hz, double rate_hz) {
  if (taps % 2 == 0 || taps < 3) {
    throw Error(ErrorCode::InvalidArgument, "low-pass needs an odd tap count >= 3");
  }
  if (!(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0)) {
    throw Error(ErrorCode::InvalidArgument, "cutoff must lie inside (0, Nyquist)");
  }
  const double fc = cutoff_hz / rate_hz;
  const double mid = static_cast<double>(taps - 1) / 2.0;
  std::vector<double> h(taps);
  // Mirror the first half so the taps are exactly symmetric.
  for (std::size_t i = 0; i <= taps / 2; ++i) {
    const double n = static_cast<double>(i) - mid;
    const double sinc = n == 0.0 ? 2.0 * fc
                                 : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
    const double hamming =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                               static_cast<double>(taps - 1));
    h[i] = sinc * hamming;
    h[taps - 1 - i] = h[i];
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

void write_taps(std::ostream& out, std::span<const double> taps) {
  out << std::setprecision(17);
  for (double t : taps) out << t << '\n';
}

double magnitude_response(std::span<const double> taps, double freq_hz, double rate_hz) {
  double re = 0.0;
  double im = 0.0;
  const double w = 2.0 * std::numbers::pi * freq_hz / rate_hz;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    re += taps[i] * std::cos(w * static_cast<double>(i));
    im -= taps[i] * std::sin(w * static_cast<double>(i));
  }
  return std::hypot(re, im);
}

std::vector<double> filter_eeg(std::span<const double> eeg) {
  if (eeg.size() < kMinWindowSamples) {
    throw Error(ErrorCode::WindowUnderfull, "EEG window has " + std::to_string(eeg.size()) +
                                                " samples, need at least " +
                                                std::to_string(kMinWindowSamples));
  }
  const auto& h = default_taps();
  const std::size_t half = h.size() / 2;
  const std::size_t n = eeg.size();

  double mean = 0.0;
  for (double v : eeg) mean += v;
  mean /= static_cast<double>(n);

  // Reflection about the edge samples: x[-k] = x[k], x[n-1+k] = x[n-1-k].
  std::vector<double> padded(n + 2 * half);
  for (std::size_t i = 0; i < n; ++i) padded[half + i] = eeg[i] - mean;
  for (std::size_t k = 1; k <= half; ++k) {
    padded[half - k] = padded[half + k];
    padded[half + n - 1 + k] = padded[half + n - 1 - k];
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    // Output i is centred on padded[half + i].
    for (std::size_t k = 0; k < h.size(); ++k) acc += h[k] * padded[i + 2 * half - k];
    out[i] = acc;
  }
  return out;
}

BlinkRemoval remove_blink_artifacts(std::span<const double> eeg, std::span<const std::int64_t> ts_us,
                                    std::span<const std::int64_t> blink_onsets_us) {
  if (eeg.size() != ts_us.size()) {
    throw Error(ErrorCode::InvalidArgument, "EEG values and timestamps differ in length");
  }
  BlinkRemoval out;
  out.eeg.assign(eeg.begin(), eeg.end());
  if (eeg.empty() || blink_onsets_us.empty()) return out;

  const std::int64_t first = ts_us.front();
  const std::int64_t last = ts_us.back();
  std::vector<ArtifactSpan> spans;
  for (std::int64_t onset : blink_onsets_us) {
    ArtifactSpan s{std::max(onset - kBlinkPreUs, first), std::min(onset + kBlinkPostUs, last)};
    if (s.start_us > s.end_us) continue;
    spans.push_back(s);
  }
  std::sort(spans.begin(), spans.end(),
            [](const ArtifactSpan& a, const ArtifactSpan& b) { return a.start_us < b.start_us; });
  for (const auto& s : spans) {
    if (!out.spans.empty() && s.start_us <= out.spans.back().end_us) {
      out.spans.back().end_us = std::max(out.spans.back().end_us, s.end_us);
    } else {
      out.spans.push_back(s);
    }
  }

  for (const auto& s : out.spans) {
    const auto lo = static_cast<std::size_t>(
        std::lower_bound(ts_us.begin(), ts_us.end(), s.start_us) - ts_us.begin());
    const auto hi = static_cast<std::size_t>(
        std::upper_bound(ts_us.begin(), ts_us.end(), s.end_us) - ts_us.begin());
    if (lo >= hi) continue;
    const bool has_left = lo > 0;
    const bool has_right = hi < eeg.size();
    double left = 0.0;
    double right = 0.0;
    if (has_left && has_right) {
      left = eeg[lo - 1];
      right = eeg[hi];
    } else if (has_left) {
      left = right = eeg[lo - 1];
    } else if (has_right) {
      left = right = eeg[hi];
    }
    const double t0 = has_left ? static_cast<double>(ts_us[lo - 1]) : static_cast<double>(ts_us[lo]);
    const double t1 = has_right ? static_cast<double>(ts_us[hi]) : static_cast<double>(ts_us[hi - 1]);
    for (std::size_t i = lo; i < hi; ++i) {
      const double frac = t1 > t0 ? (static_cast<double>(ts_us[i]) - t0) / (t1 - t0) : 0.0;
      out.eeg[i] = left + (right - left) * frac;
    }
  }
  return out;
}

bool eye_sample_valid(const TimestampedSample& s) {
  if (s.values.size() != eye::kChannels) return false;
  for (double v : s.values) {
    if (!std::isfinite(v)) return false;
  }
  return s.values[eye::kValidity] == 1.0 && s.values[eye::kBlink] == 0.0;
}

ScreenResult screen_eye(std::span<const TimestampedSample> eye, double rate_hz,
                        std::int64_t window_us) {
  ScreenResult r;
  r.valid.reserve(eye.size());
  for (const auto& s : eye) {
    if (eye_sample_valid(s)) {
      r.valid.push_back(s);
    } else {
      ++r.rejected;
    }
  }
  const double retained_s = static_cast<double>(r.valid.size()) / rate_hz;
  r.quality = std::clamp(retained_s / (static_cast<double>(window_us) * 1e-6), 0.0, 1.0);
  r.low_quality = 2 * r.rejected > eye.size();
  return r;
}

std::vector<std::int64_t> blink_onsets(std::span<const TimestampedSample> eye) {
  std::vector<std::int64_t> out;
  bool in_blink = false;
  for (const auto& s : eye) {
    const bool b = s.values.size() > eye::kBlink && s.values[eye::kBlink] == 1.0;
    if (b && !in_blink) out.push_back(s.ts_us);
    in_blink = b;
  }
  return out;
}

CleanWindow clean_window(const AlignedWindow& window, std::span<const std::int64_t> prior_onsets) {
  CleanWindow cw;
  cw.start_us = window.start_us;
  cw.end_us = window.end_us;

  std::vector<double> raw(window.eeg.size());
  std::vector<std::int64_t> ts(window.eeg.size());
  for (std::size_t i = 0; i < window.eeg.size(); ++i) {
    raw[i] = window.eeg[i].values.at(0);
    ts[i] = window.eeg[i].ts_us;
  }

  const auto onsets_in = blink_onsets(window.eye);
  cw.blink_count = onsets_in.size();
  std::vector<std::int64_t> onsets(prior_onsets.begin(), prior_onsets.end());
  onsets.insert(onsets.end(), onsets_in.begin(), onsets_in.end());
  std::sort(onsets.begin(), onsets.end());
  onsets.erase(std::unique(onsets.begin(), onsets.end()), onsets.end());

  auto removed = remove_blink_artifacts(raw, ts, onsets);
  cw.artifact_spans = std::move(removed.spans);
  cw.eeg_filtered = filter_eeg(removed.eeg);

  auto screened = screen_eye(window.eye);
  cw.eye_valid = std::move(screened.valid);
  cw.rejected_eye_count = screened.rejected;
  cw.quality = screened.quality;
  cw.low_quality = screened.low_quality;
  return cw;
}

}  // namespace neuroadapt
