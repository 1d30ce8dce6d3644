#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "neuroadapt/error.hpp"
#include "neuroadapt/features.hpp"
#include "neuroadapt/rng.hpp"
#include "neuroadapt/signal_sim.hpp"
#include "support.hpp"

using namespace neuroadapt;
using test_support::sine;

namespace {

// scipy.signal.welch(x, fs=250, window="hann", nperseg=250, noverlap=125,
// detrend="constant") integrated over the same bins.
constexpr double kRefAlpha10Hz = 0.49999999999999994;
constexpr double kRefTheta6Plus20 = 0.5;
constexpr double kRefBeta6Plus20 = 0.49999999999999983;
constexpr double kRefEngagement10Plus20 = 1.0000000000000004;
// tan(5 deg) * 600 mm / 530 mm: a 5 degree horizontal shift from the centre.
constexpr double kFiveDegreesX = 0.09904377002934793;

std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

std::vector<TimestampedSample> gaze(const std::vector<std::pair<double, double>>& pts) {
  std::vector<TimestampedSample> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.push_back(test_support::eye_sample(test_support::eye_ts(static_cast<std::int64_t>(i)), pts[i].first,
                                           pts[i].second));
  }
  return out;
}

}  // namespace

TEST_CASE("band power of a unit 10 Hz sine") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bp = band_powers(sine(10.0, 1.0, 1250));
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(bp.alpha == doctest::Approx(kRefAlpha10Hz).epsilon(1e-9));
  CHECK(std::abs(bp.alpha - 0.5) <= 0.05 * 0.5);
  CHECK(bp.theta < 0.01 * bp.alpha);
  CHECK(bp.beta < 0.01 * bp.alpha);
  CHECK(elapsed < std::chrono::seconds(1));
}

TEST_CASE("band power of silence and of two tones") {
  const auto zero = band_powers(std::vector<double>(1250, 0.0));
  CHECK(zero.theta == 0.0);
  CHECK(zero.alpha == 0.0);
  CHECK(zero.beta == 0.0);

  const auto bp = band_powers(add(sine(6.0, 1.0, 1250), sine(20.0, 1.0, 1250)));
  CHECK(bp.theta == doctest::Approx(kRefTheta6Plus20).epsilon(1e-9));
  CHECK(bp.beta == doctest::Approx(kRefBeta6Plus20).epsilon(1e-9));
  CHECK(std::abs(bp.theta - 0.5) <= 0.025);
  CHECK(std::abs(bp.beta - 0.5) <= 0.025);
}

TEST_CASE("engagement index") {
  CHECK(std::abs(engagement_index({1.0, 1.0, 1.0}).value - 0.5) <= 1e-9);
  CHECK(engagement_index({0.3, 0.7, 0.0}).value == 0.0);
  const auto sat = engagement_index({0.0, 0.0, 2.0});
  CHECK(sat.saturated);
  CHECK(sat.value == kEngagementCap);
  CHECK_FALSE(engagement_index({1e-3, 0.0, 1.0}).saturated);

  const auto bp = band_powers(add(sine(10.0, 1.0, 1250), sine(20.0, 1.0, 1250)));
  const auto e = engagement_index(bp).value;
  CHECK(e == doctest::Approx(kRefEngagement10Plus20).epsilon(1e-9));
  CHECK(std::abs(e - 1.0) <= 0.1);

  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    BandPower b{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)};
    const double expect = b.beta / (b.alpha + b.theta);
    const auto got = engagement_index(b);
    CHECK_FALSE(got.saturated);
    CHECK(got.value == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("band powers never exceed the window variance") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(1250);
    for (double& v : x) v = rng.normal(0, rng.uniform(0.5, 5));
    const auto f = filter_eeg(x);
    const auto bp = band_powers(f);
    const auto psd = welch_psd(f);
    const double sum = bp.theta + bp.alpha + bp.beta;
    CHECK(sum <= psd.total() * (1 + 1e-6));
    CHECK(sum < test_support::variance(f));
  }
  // All power inside 4-30 Hz: equality.
  const auto tones = add(add(sine(6.0, 1.0, 1250), sine(10.0, 1.0, 1250)), sine(20.0, 1.0, 1250));
  const auto bp = band_powers(tones);
  CHECK((bp.theta + bp.alpha + bp.beta) == doctest::Approx(test_support::variance(tones)).epsilon(1e-6));
}

TEST_CASE("scaling the signal by k scales band power by k squared") {
  Rng rng(9);
  std::vector<double> x(1250);
  for (double& v : x) v = rng.normal(0, 2);
  const auto base = band_powers(x);
  for (double k : {0.1, 3.0, 250.0}) {
    std::vector<double> y(x);
    for (double& v : y) v *= k;
    const auto bp = band_powers(y);
    CHECK(bp.theta == doctest::Approx(k * k * base.theta).epsilon(1e-9));
    CHECK(bp.alpha == doctest::Approx(k * k * base.alpha).epsilon(1e-9));
    CHECK(bp.beta == doctest::Approx(k * k * base.beta).epsilon(1e-9));
    CHECK(engagement_index(bp).value == doctest::Approx(engagement_index(base).value).epsilon(1e-9));
  }
}

TEST_CASE("gaze dispersion") {
  const auto two = gaze({{0.0, 0.0}, {1.0, 1.0}});
  CHECK(gaze_dispersion(two) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

  Rng rng(2);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(rng.uniform(), rng.uniform());
  const double d = gaze_dispersion(gaze(pts));
  auto shifted = pts;
  for (auto& p : shifted) {
    p.first += 0.3;
    p.second -= 0.2;
  }
  CHECK(gaze_dispersion(gaze(shifted)) == doctest::Approx(d).epsilon(1e-9));
  auto scaled = pts;
  for (auto& p : scaled) {
    p.first *= 2.5;
    p.second *= 2.5;
  }
  CHECK(gaze_dispersion(gaze(scaled)) == doctest::Approx(2.5 * d).epsilon(1e-9));
}

TEST_CASE("visual angle from screen geometry") {
  ScreenGeometry g;
  CHECK(g.angle_deg(0.5, 0.5, 0.5 + kFiveDegreesX, 0.5) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(g.angle_deg(0.2, 0.7, 0.2, 0.7) == 0.0);
  CHECK(g.angle_deg(0.1, 0.2, 0.8, 0.9) == doctest::Approx(g.angle_deg(0.8, 0.9, 0.1, 0.2)));
}

TEST_CASE("fixations and saccades") {
  SUBCASE("constant gaze is one long fixation") {
    const auto eye = gaze(std::vector<std::pair<double, double>>(300, {0.4, 0.6}));
    const auto ev = detect_fixations_saccades(eye);
    REQUIRE(ev.fixations.size() == 1);
    CHECK(ev.saccades.empty());
    CHECK(ev.fixations[0].duration_ms() == doctest::Approx(5000.0).epsilon(0.001));
  }
  SUBCASE("one 5 degree jump is one saccade") {
    std::vector<std::pair<double, double>> pts(300, {0.5, 0.5});
    for (std::size_t i = 150; i < 300; ++i) pts[i].first = 0.5 + kFiveDegreesX;
    const auto ev = detect_fixations_saccades(gaze(pts));
    REQUIRE(ev.saccades.size() == 1);
    CHECK(ev.saccades[0].peak_velocity_deg_s == doctest::Approx(5.0 / (16'667e-6)).epsilon(1e-3));
    CHECK(ev.fixations.size() == 2);
  }
  SUBCASE("fewer than two samples give nothing") {
    const auto ev = detect_fixations_saccades(gaze({{0.5, 0.5}}));
    CHECK(ev.fixations.empty());
    CHECK(ev.saccades.empty());
  }
  SUBCASE("saccade count survives time reversal") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto eye = generate_eye(default_profile(AttentionState::Distraction), 5.0, 60.0, seed);
      // Same clock, gaze values played backwards.
      auto mirrored = eye;
      for (std::size_t i = 0; i < eye.size(); ++i) mirrored[i].values = eye[eye.size() - 1 - i].values;
      CHECK(detect_fixations_saccades(mirrored).saccades.size() == detect_fixations_saccades(eye).saccades.size());
    }
  }
}

TEST_CASE("eye features") {
  const auto eye = gaze(std::vector<std::pair<double, double>>(300, {0.5, 0.5}));
  const auto ev = detect_fixations_saccades(eye);
  const auto f = eye_features(eye, ev, 3, 1.0);
  REQUIRE(f.has_value());
  CHECK(f->blink_rate == doctest::Approx(0.6));
  CHECK(f->pupil_variability == 0.0);
  CHECK(f->saccade_rate == 0.0);
  CHECK(f->gaze_dispersion == 0.0);
  CHECK(f->fixation_count == 1);

  // Rates use the retained duration.
  const auto half = eye_features(eye, ev, 3, 0.5);
  CHECK(half->blink_rate == doctest::Approx(1.2));

  CHECK_FALSE(eye_features({}, {}, 0, 0.0).has_value());
}

TEST_CASE("fusion") {
  const auto v9 = fuse({}, 0.0, {});
  CHECK(v9.dim() == 9);
  for (double v : v9.values) CHECK(v == 0.0);
  CHECK(feature_names({}).size() == 9);
  CHECK(feature_names({}).front() == "theta");
  CHECK(feature_names({}).at(3) == "engagement");

  FeatureConfig ten{true};
  EyeFeatures e;
  e.fixation_count = 7;
  const auto v10 = fuse({1, 2, 3}, 1.0, e, ten);
  CHECK(v10.dim() == 10);
  CHECK(v10.values.back() == 7.0);
  CHECK(feature_names(ten).back() == "fixation_count");
  CHECK(feature_csv_header(ten).find("fixation_count") != std::string::npos);

  EyeFeatures bad;
  bad.pupil_variability = std::numeric_limits<double>::quiet_NaN();
  try {
    fuse({}, 0.0, bad);
    FAIL("expected FusionError");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::FusionError);
    CHECK(std::string(err.what()).find("pupil_variability") != std::string::npos);
  }
}

TEST_CASE("feature extraction stays under 10 ms per window") {
  const auto p = default_profile(AttentionState::Distraction);
  AlignedWindow w;
  w.start_us = 0;
  w.end_us = 5'000'000;
  w.eeg = generate_eeg(p, 5.0, 250.0, 1);
  w.eye = generate_eye(p, 5.0, 60.0, 1);
  const auto cw = clean_window(w);
  std::vector<double> ms;
  for (int i = 0; i < 200; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto wf = extract_features(cw);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    REQUIRE(wf.vector.has_value());
  }
  std::sort(ms.begin(), ms.end());
  MESSAGE("feature extraction p50 " << ms[100] << " ms, max " << ms.back() << " ms");
  CHECK(ms[198] < 10.0);
}
