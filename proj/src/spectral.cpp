#include <cmath>
#include <numbers>

#include "neuroadapt/error.hpp"
#include "neuroadapt/features.hpp"

namespace neuroadapt {

double PsdEstimate::integrate(double lo_hz, double hi_hz) const {
  double sum = 0.0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double f = static_cast<double>(k) * df;
    if (f >= lo_hz - 1e-9 && f <= hi_hz + 1e-9) sum += psd[k];
  }
  return sum * df;
}

double PsdEstimate::total() const {
  double sum = 0.0;
  for (std::size_t k = 1; k < psd.size(); ++k) sum += psd[k];
  return sum * df;
}

PsdEstimate welch_psd(std::span<const double> x, double rate_hz, std::size_t segment) {
  if (segment < 8) throw Error(ErrorCode::InvalidArgument, "Welch segment too short");
  if (x.size() < segment) {
    throw Error(ErrorCode::WindowUnderfull, "signal shorter than one Welch segment");
  }
  const std::size_t n = segment;
  const std::size_t hop = n / 2;
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n));
    wsum2 += window[i] * window[i];
  }
  std::vector<double> cos_table(n);
  std::vector<double> sin_table(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    cos_table[i] = std::cos(a);
    sin_table[i] = std::sin(a);
  }

  PsdEstimate est;
  est.df = rate_hz / static_cast<double>(n);
  est.psd.assign(bins, 0.0);
  const double scale = 1.0 / (rate_hz * wsum2);

  std::vector<double> seg(n);
  std::size_t count = 0;
  for (std::size_t start = 0; start + n <= x.size(); start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[start + i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) seg[i] = (x[start + i] - mean) * window[i];

    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0.0;
      double im = 0.0;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        re += seg[i] * cos_table[idx];
        im -= seg[i] * sin_table[idx];
        idx += k;
        if (idx >= n) idx -= n;
      }
      double p = (re * re + im * im) * scale;
      if (k != 0 && !(n % 2 == 0 && k == n / 2)) p *= 2.0;
      est.psd[k] += p;
    }
    ++count;
  }
  for (double& p : est.psd) p /= static_cast<double>(count);
  return est;
}

BandPower band_powers(std::span<const double> eeg_filtered, double rate_hz) {
  if (eeg_filtered.size() < kMinWindowSamples) {
    throw Error(ErrorCode::WindowUnderfull, "band power needs at least 1248 samples");
  }
  const auto psd = welch_psd(eeg_filtered, rate_hz, static_cast<std::size_t>(std::llround(rate_hz)));
  return {psd.integrate(kTheta.lo_hz, kTheta.hi_hz), psd.integrate(kAlpha.lo_hz, kAlpha.hi_hz),
          psd.integrate(kBeta.lo_hz, kBeta.hi_hz)};
}

Engagement engagement_index(const BandPower& bp) {
  const double denom = bp.alpha + bp.theta;
  if (denom < kEngagementEpsilon) return {kEngagementCap, true};
  return {bp.beta / denom, false};
}

}  // namespace neuroadapt
