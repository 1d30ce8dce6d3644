#include "neuroadapt/signal_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kNoiseTonesPerBand = 8;
constexpr double kPerEyePupilSigma = 0.02;
constexpr double kMinJump = 0.05;  // normalized screen units

std::int64_t sample_ts(std::int64_t origin_us, std::int64_t index, double rate) {
  return origin_us + static_cast<std::int64_t>(std::llround(static_cast<double>(index) * 1e6 / rate));
}

double clamp_screen(double v) { return std::clamp(v, 0.02, 0.98); }

}  // namespace

void StateSignalProfile::validate() const {
  const double fields[] = {theta_amp,       alpha_amp,        beta_amp,      noise_sigma,
                           blink_rate_hz,   saccade_rate_hz,  fixation_mean_ms,
                           pupil_sigma_mm,  gaze_dispersion_scale};
  for (double f : fields) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw Error(ErrorCode::InvalidArgument, "signal profile values must be finite and >= 0");
    }
  }
  if (!(pupil_mean_mm >= 2.0 && pupil_mean_mm <= 8.0)) {
    throw Error(ErrorCode::InvalidArgument, "pupil_mean_mm must lie in [2, 8]");
  }
}

StateSignalProfile default_profile(AttentionState state) {
  StateSignalProfile p;
  switch (state) {
    case AttentionState::HighAttention:
      p.theta_amp = 0.5;
      p.alpha_amp = 0.5;
      p.beta_amp = 2.0;
      p.blink_rate_hz = 0.2;
      p.saccade_rate_hz = 2.5;
      p.fixation_mean_ms = 400.0;
      p.pupil_mean_mm = 4.2;
      p.pupil_sigma_mm = 0.1;
      p.gaze_dispersion_scale = 0.05;
      break;
    case AttentionState::StableAttention:
      p.theta_amp = 0.5;
      p.alpha_amp = 1.0;
      p.beta_amp = 1.0;
      p.blink_rate_hz = 0.3;
      p.saccade_rate_hz = 3.3;
      p.fixation_mean_ms = 300.0;
      p.pupil_mean_mm = 3.8;
      p.pupil_sigma_mm = 0.1;
      p.gaze_dispersion_scale = 0.1;
      break;
    case AttentionState::DroppingAttention:
      p.theta_amp = 1.0;
      p.alpha_amp = 1.5;
      p.beta_amp = 0.5;
      p.blink_rate_hz = 0.4;
      p.saccade_rate_hz = 4.0;
      p.fixation_mean_ms = 250.0;
      p.pupil_mean_mm = 3.4;
      p.pupil_sigma_mm = 0.1;
      p.gaze_dispersion_scale = 0.1;
      break;
    case AttentionState::CognitiveOverload:
      p.theta_amp = 2.0;
      p.alpha_amp = 0.5;
      p.beta_amp = 1.0;
      p.blink_rate_hz = 0.3;
      p.saccade_rate_hz = 3.3;
      p.fixation_mean_ms = 300.0;
      p.pupil_mean_mm = 5.0;
      p.pupil_sigma_mm = 0.3;
      p.gaze_dispersion_scale = 0.1;
      break;
    case AttentionState::Distraction:
      p.theta_amp = 0.8;
      p.alpha_amp = 1.0;
      p.beta_amp = 0.8;
      p.blink_rate_hz = 0.8;
      p.saccade_rate_hz = 3.0;
      p.fixation_mean_ms = 250.0;
      p.pupil_mean_mm = 3.8;
      p.pupil_sigma_mm = 0.15;
      p.gaze_dispersion_scale = 0.25;
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Blinks

BlinkProcess::BlinkProcess(std::uint64_t seed, std::int64_t origin_us) : rng_(seed) {
  (void)origin_us;
}

void BlinkProcess::schedule_first(std::int64_t from_us) {
  const double mean_s = 1.0 / rate_hz_;
  const double dead_s = static_cast<double>(kDeadTimeUs) * 1e-6;
  double gap_s;
  if (mean_s <= dead_s) {
    gap_s = rng_.uniform(0.0, dead_s);
  } else if (rng_.uniform() < dead_s / mean_s) {
    // Equilibrium forward recurrence: uniform over the dead time with
    // probability dead/mean, otherwise dead time plus an exponential tail.
    gap_s = rng_.uniform(0.0, dead_s);
  } else {
    gap_s = dead_s + rng_.exponential(mean_s - dead_s);
  }
  next_ = from_us + static_cast<std::int64_t>(std::llround(gap_s * 1e6));
}

void BlinkProcess::schedule_next() {
  const double mean_s = 1.0 / rate_hz_;
  const double dead_s = static_cast<double>(kDeadTimeUs) * 1e-6;
  const double gap_s = dead_s + (mean_s > dead_s ? rng_.exponential(mean_s - dead_s) : 0.0);
  next_ = *next_ + static_cast<std::int64_t>(std::llround(gap_s * 1e6));
}

void BlinkProcess::set_rate(double hz, std::int64_t now_us) {
  if (hz == rate_hz_) return;
  const double old = rate_hz_;
  rate_hz_ = hz;
  if (hz <= 0.0) {
    next_.reset();
  } else if (old <= 0.0 || !next_) {
    schedule_first(now_us);
  }
}

void BlinkProcess::advance(std::int64_t t_us) {
  while (next_ && *next_ < t_us) {
    onsets_.push_back(*next_);
    if (rate_hz_ > 0.0) {
      schedule_next();
    } else {
      next_.reset();
    }
  }
  while (!onsets_.empty() && onsets_.front() < t_us - 2'000'000) onsets_.pop_front();
}

std::optional<std::int64_t> BlinkProcess::active(std::int64_t t_us, std::int64_t span_us) {
  advance(t_us + 1);
  for (auto it = onsets_.rbegin(); it != onsets_.rend(); ++it) {
    if (*it <= t_us && t_us < *it + span_us) return *it;
    if (*it + BlinkProcess::kDeadTimeUs < t_us) break;
  }
  return std::nullopt;
}

std::vector<std::int64_t> BlinkProcess::onsets(std::int64_t from_us, std::int64_t to_us) {
  advance(to_us);
  std::vector<std::int64_t> out;
  for (auto t : onsets_) {
    if (t >= from_us && t < to_us) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EEG

EegGenerator::EegGenerator(std::uint64_t seed, double rate, SimOptions options,
                           std::int64_t origin_us)
    : rng_(seed), rate_(rate), origin_us_(origin_us) {
  auto make_band = [&](double tone_hz, double lo_hz, double hi_hz) {
    std::vector<Tone> tones;
    if (!options.band_limited_noise) {
      tones.push_back({tone_hz, rng_.uniform(0.0, kTwoPi), 1.0});
    } else {
      const double w = 1.0 / std::sqrt(static_cast<double>(kNoiseTonesPerBand));
      for (int i = 0; i < kNoiseTonesPerBand; ++i) {
        tones.push_back({rng_.uniform(lo_hz, hi_hz), rng_.uniform(0.0, kTwoPi), w});
      }
    }
    return tones;
  };
  theta_ = make_band(kThetaToneHz, 4.0, 7.0);
  alpha_ = make_band(kAlphaToneHz, 8.0, 12.0);
  beta_ = make_band(kBetaToneHz, 13.0, 30.0);
}

double EegGenerator::band_value(const std::vector<Tone>& tones, double t) const {
  double v = 0.0;
  for (const auto& tone : tones) v += tone.weight * std::sin(kTwoPi * tone.freq_hz * t + tone.phase);
  return v;
}

std::int64_t EegGenerator::next_ts() const { return sample_ts(origin_us_, index_, rate_); }

TimestampedSample EegGenerator::next(BlinkProcess& blinks) {
  const std::int64_t ts = next_ts();
  const double t = static_cast<double>(index_) / rate_;
  double v = profile_.theta_amp * band_value(theta_, t) + profile_.alpha_amp * band_value(alpha_, t) +
             profile_.beta_amp * band_value(beta_, t);
  v += profile_.noise_sigma * rng_.normal();
  if (auto onset = blinks.active(ts, kBlinkArtifactUs)) {
    const double phase = static_cast<double>(ts - *onset) / static_cast<double>(kBlinkArtifactUs);
    v += kBlinkArtifactUv * std::sin(std::numbers::pi * phase);
  }
  ++index_;
  return {ts, {v}};
}

// ---------------------------------------------------------------------------
// Eye

EyeGenerator::EyeGenerator(std::uint64_t seed, double rate, std::int64_t origin_us)
    : rng_(seed), rate_(rate), origin_us_(origin_us) {}

std::int64_t EyeGenerator::next_ts() const { return sample_ts(origin_us_, index_, rate_); }

void EyeGenerator::new_dwell(std::int64_t now_us, bool allow_jump) {
  const double disp = profile_.gaze_dispersion_scale;
  if (!allow_jump) {
    gaze_x_ = clamp_screen(0.5 + disp * rng_.normal());
    gaze_y_ = clamp_screen(0.5 + disp * rng_.normal());
  } else {
    const double p_jump = std::min(1.0, profile_.saccade_rate_hz * profile_.fixation_mean_ms * 1e-3);
    if (rng_.uniform() < p_jump && disp > 0.0) {
      double x = gaze_x_;
      double y = gaze_y_;
      for (int attempt = 0; attempt < 32; ++attempt) {
        x = clamp_screen(0.5 + disp * rng_.normal());
        y = clamp_screen(0.5 + disp * rng_.normal());
        if (std::hypot(x - gaze_x_, y - gaze_y_) >= kMinJump) break;
      }
      gaze_x_ = x;
      gaze_y_ = y;
    }
  }
  const double extra_ms = std::max(0.0, profile_.fixation_mean_ms - kMinDwellMs);
  const double dwell_ms = kMinDwellMs + (extra_ms > 0.0 ? rng_.exponential(extra_ms) : 0.0);
  dwell_end_us_ = now_us + static_cast<std::int64_t>(std::llround(dwell_ms * 1e3));
}

TimestampedSample EyeGenerator::next(BlinkProcess& blinks) {
  const std::int64_t ts = next_ts();
  if (!started_) {
    new_dwell(ts, false);
    started_ = true;
  } else if (ts >= dwell_end_us_) {
    new_dwell(ts, true);
  }
  const double pupil = profile_.pupil_mean_mm + profile_.pupil_sigma_mm * rng_.normal();
  double left = pupil + kPerEyePupilSigma * rng_.normal();
  double right = pupil + kPerEyePupilSigma * rng_.normal();
  double validity = 1.0;
  double blink = 0.0;
  if (blinks.active(ts, kEyeBlinkUs)) {
    validity = 0.0;
    blink = 1.0;
    left = 0.0;
    right = 0.0;
  }
  ++index_;
  return {ts, {gaze_x_, gaze_y_, left, right, validity, blink}};
}

// ---------------------------------------------------------------------------

SourceSeeds derive_seeds(std::uint64_t seed) {
  Rng root(seed);
  SourceSeeds s{};
  s.blink = root.fork();
  s.eeg = root.fork();
  s.eye = root.fork();
  s.probes = root.fork();
  s.jitter = root.fork();
  return s;
}

std::vector<TimestampedSample> generate_eeg(const StateSignalProfile& profile, double duration_s,
                                            double rate, std::uint64_t seed, SimOptions options) {
  profile.validate();
  const auto seeds = derive_seeds(seed);
  BlinkProcess blinks(seeds.blink);
  blinks.set_rate(profile.blink_rate_hz, 0);
  EegGenerator gen(seeds.eeg, rate, options);
  gen.set_profile(profile);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
  std::vector<TimestampedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen.next(blinks));
  return out;
}

std::vector<TimestampedSample> generate_eye(const StateSignalProfile& profile, double duration_s,
                                            double rate, std::uint64_t seed) {
  profile.validate();
  const auto seeds = derive_seeds(seed);
  BlinkProcess blinks(seeds.blink);
  blinks.set_rate(profile.blink_rate_hz, 0);
  EyeGenerator gen(seeds.eye, rate);
  gen.set_profile(profile);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
  std::vector<TimestampedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen.next(blinks));
  return out;
}

int simulated_rating(std::optional<AttentionState> state) {
  if (!state) return 4;
  switch (*state) {
    case AttentionState::HighAttention: return 5;
    case AttentionState::StableAttention: return 4;
    case AttentionState::DroppingAttention: return 3;
    case AttentionState::CognitiveOverload: return 2;
    case AttentionState::Distraction: return 1;
  }
  return 3;
}

// ---------------------------------------------------------------------------
// Scenario runner

ScenarioRunner::ScenarioRunner(ScenarioScript script, SimOptions options)
    : script_(std::move(script)),
      options_(options),
      labels_(script_.timeline()),
      duration_us_(script_.duration_us()),
      blinks_(derive_seeds(script_.seed).blink),
      eeg_(derive_seeds(script_.seed).eeg, options.eeg_rate, options),
      eye_(derive_seeds(script_.seed).eye, options.eye_rate),
      jitter_rng_(derive_seeds(script_.seed).jitter),
      probe_rng_(derive_seeds(script_.seed).probes) {
  script_.validate();
  schedule_probes();
}

std::int64_t ScenarioRunner::flush_us() const {
  return 2 * static_cast<std::int64_t>(std::llround(script_.jitter_ms * 1e3)) + 1;
}

void ScenarioRunner::schedule_probes() {
  if (script_.probes == ProbeMode::Off) return;
  int id = 1;
  std::int64_t t = static_cast<std::int64_t>(std::llround(probe_rng_.uniform(30.0, 60.0) * 1e6));
  while (t < duration_us_) {
    ProbeEvent p;
    p.id = id++;
    p.ts_us = t;
    p.deadline_us = t + kProbeDeadlineUs;
    const double latency_s = probe_rng_.uniform(0.5, 2.5);
    if (script_.probes == ProbeMode::Simulated) {
      p.response_ts_us = t + static_cast<std::int64_t>(std::llround(latency_s * 1e6));
    }
    probes_.push_back(p);
    SimEvent ev;
    ev.kind = SimEvent::Kind::Probe;
    ev.probe = p;
    ev.arrival_us = p.ts_us;
    probe_events_.push_back(ev);
    t += static_cast<std::int64_t>(std::llround(probe_rng_.uniform(30.0, 60.0) * 1e6));
  }
  if (script_.probes == ProbeMode::Simulated) {
    for (const auto& p : probes_) {
      SimEvent ev;
      ev.kind = SimEvent::Kind::ProbeAnswer;
      ev.probe = p;
      ev.arrival_us = *p.response_ts_us;
      probe_events_.push_back(ev);
    }
    std::stable_sort(probe_events_.begin(), probe_events_.end(),
                     [](const SimEvent& a, const SimEvent& b) { return a.arrival_us < b.arrival_us; });
  }
}

AttentionState ScenarioRunner::profile_state_at(std::int64_t ts_us) const {
  if (steer_) return *steer_;
  return labels_.label_at(ts_us).value_or(AttentionState::StableAttention);
}

void ScenarioRunner::steer(std::optional<AttentionState> target) { steer_ = target; }

void ScenarioRunner::generate_until(std::int64_t t_us) {
  const std::int64_t limit = std::min(t_us, duration_us_);
  const std::int64_t jitter_us = static_cast<std::int64_t>(std::llround(script_.jitter_ms * 1e3));
  auto arrival_for = [&](std::int64_t ts, std::int64_t& last) {
    const std::int64_t delay =
        jitter_us > 0 ? static_cast<std::int64_t>(jitter_rng_.below(2 * static_cast<std::uint64_t>(jitter_us) + 1))
                      : 0;
    last = std::max(last, ts + delay);
    return last;
  };
  while (true) {
    const std::int64_t te = eeg_.next_ts();
    const std::int64_t ty = eye_.next_ts();
    const std::int64_t ts = std::min(te, ty);
    if (ts >= limit) break;
    const AttentionState st = profile_state_at(ts);
    if (active_profile_ != st) {
      const auto prof = default_profile(st);
      eeg_.set_profile(prof);
      eye_.set_profile(prof);
      blinks_.set_rate(prof.blink_rate_hz, ts);
      active_profile_ = st;
    }
    if (te <= ty) {
      auto s = eeg_.next(blinks_);
      const std::int64_t a = arrival_for(s.ts_us, eeg_last_arrival_);
      eeg_pending_.push_back({a, std::move(s)});
    } else {
      auto s = eye_.next(blinks_);
      const std::int64_t a = arrival_for(s.ts_us, eye_last_arrival_);
      eye_pending_.push_back({a, std::move(s)});
    }
  }
}

void ScenarioRunner::advance_to(std::int64_t t_us, const std::function<void(const SimEvent&)>& sink) {
  generate_until(t_us + flush_us());
  while (true) {
    std::int64_t best = INT64_MAX;
    int which = -1;
    if (!eeg_pending_.empty() && eeg_pending_.front().arrival_us < best) {
      best = eeg_pending_.front().arrival_us;
      which = 0;
    }
    if (!eye_pending_.empty() && eye_pending_.front().arrival_us < best) {
      best = eye_pending_.front().arrival_us;
      which = 1;
    }
    if (!probe_events_.empty() && probe_events_.front().arrival_us < best) {
      best = probe_events_.front().arrival_us;
      which = 2;
    }
    if (which < 0 || best >= t_us) break;
    if (which == 2) {
      SimEvent ev = std::move(probe_events_.front());
      probe_events_.pop_front();
      if (ev.kind == SimEvent::Kind::ProbeAnswer) {
        ev.probe.response = simulated_rating(profile_state_at(ev.probe.ts_us));
        for (auto& p : probes_) {
          if (p.id == ev.probe.id) p.response = ev.probe.response;
        }
      }
      sink(ev);
      continue;
    }
    auto& q = which == 0 ? eeg_pending_ : eye_pending_;
    SimEvent ev;
    ev.kind = SimEvent::Kind::Sample;
    ev.stream = which == 0 ? "eeg" : "eye";
    ev.sample = std::move(q.front().sample);
    ev.arrival_us = q.front().arrival_us;
    q.pop_front();
    sink(ev);
  }
  now_us_ = std::max(now_us_, t_us);
}

void ScenarioRunner::run_to_end(const std::function<void(const SimEvent&)>& sink) {
  advance_to(duration_us_ + flush_us(), sink);
}

SimulatedSession run_scenario(const ScenarioScript& script, SimOptions options, double accel) {
  ScenarioRunner runner(script, options);
  SimulatedSession out;
  out.labels = runner.labels();
  out.duration_us = runner.duration_us();
  auto sink = [&](const SimEvent& ev) {
    if (ev.kind == SimEvent::Kind::Sample) out.samples.push_back({ev.stream, ev.sample});
  };
  if (accel > 0.0) {
    const auto wall0 = std::chrono::steady_clock::now();
    for (std::int64_t t = 1'000'000; !runner.finished(); t += 1'000'000) {
      runner.advance_to(t, sink);
      std::this_thread::sleep_until(wall0 + std::chrono::microseconds(static_cast<std::int64_t>(t / accel)));
    }
  }
  runner.run_to_end(sink);
  out.probes = runner.probes();
  return out;
}

}  // namespace neuroadapt
