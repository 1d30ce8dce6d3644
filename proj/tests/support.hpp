#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "neuroadapt/stream.hpp"

namespace test_support {

inline std::vector<double> sine(double freq_hz, double amp, std::size_t n, double rate = 250.0,
                                double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate + phase);
  }
  return x;
}

inline double variance(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

inline std::int64_t eeg_ts(std::int64_t i) { return i * 4000; }
inline std::int64_t eye_ts(std::int64_t i) { return static_cast<std::int64_t>(std::llround(i * 1e6 / 60.0)); }

inline neuroadapt::TimestampedSample eye_sample(std::int64_t ts, double x, double y, double pupil = 4.0,
                                                bool valid = true, bool blink = false) {
  return {ts, {x, y, pupil, pupil, valid ? 1.0 : 0.0, blink ? 1.0 : 0.0}};
}

inline std::vector<neuroadapt::TimestampedSample> eeg_samples(const std::vector<double>& x,
                                                              std::int64_t start_us = 0) {
  std::vector<neuroadapt::TimestampedSample> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.push_back({start_us + eeg_ts(static_cast<std::int64_t>(i)), {x[i]}});
  }
  return out;
}

}  // namespace test_support
