#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "neuroadapt/attention.hpp"
#include "neuroadapt/recording.hpp"
#include "neuroadapt/rng.hpp"
#include "neuroadapt/scenario.hpp"
#include "neuroadapt/stream.hpp"

namespace neuroadapt {

/// Generator parameters for one attention state.
struct StateSignalProfile {
  double theta_amp = 0.5;  // µV, 6 Hz tone
  double alpha_amp = 1.0;  // µV, 10 Hz tone
  double beta_amp = 1.0;   // µV, 20 Hz tone
  double noise_sigma = 0.5;
  double blink_rate_hz = 0.3;
  double saccade_rate_hz = 3.0;
  double fixation_mean_ms = 300.0;
  double pupil_mean_mm = 3.8;
  double pupil_sigma_mm = 0.1;
  double gaze_dispersion_scale = 0.1;

  void validate() const;
};

StateSignalProfile default_profile(AttentionState state);

inline constexpr double kThetaToneHz = 6.0;
inline constexpr double kAlphaToneHz = 10.0;
inline constexpr double kBetaToneHz = 20.0;
inline constexpr std::int64_t kBlinkArtifactUs = 300'000;
inline constexpr double kBlinkArtifactUv = 100.0;
inline constexpr std::int64_t kEyeBlinkUs = 150'000;
inline constexpr double kMinDwellMs = 100.0;

struct SimOptions {
  /// Replace each tone with a sum of in-band sinusoids of random frequency
  /// carrying the same power.
  bool band_limited_noise = false;
  double eeg_rate = 250.0;
  double eye_rate = 60.0;
};

/// Blink onsets as a renewal process: a 350 ms dead time plus an exponential
/// gap, keeping the long-run rate equal to blink_rate_hz. The first gap is
/// drawn from the equilibrium distribution so the expected count over any
/// interval [0, T] is exactly rate * T.
class BlinkProcess {
 public:
  explicit BlinkProcess(std::uint64_t seed, std::int64_t origin_us = 0);

  void set_rate(double hz, std::int64_t now_us);
  /// Makes sure every onset before t_us has been drawn.
  void advance(std::int64_t t_us);
  /// Onset whose artifact interval [onset, onset + span) contains t_us.
  std::optional<std::int64_t> active(std::int64_t t_us, std::int64_t span_us);
  /// Onsets in [from, to).
  std::vector<std::int64_t> onsets(std::int64_t from_us, std::int64_t to_us);

  static constexpr std::int64_t kDeadTimeUs = 350'000;

 private:
  void schedule_first(std::int64_t from_us);
  void schedule_next();

  Rng rng_;
  double rate_hz_ = 0.0;
  std::optional<std::int64_t> next_;
  std::deque<std::int64_t> onsets_;
};

/// Single-channel EEG: three in-band tones, Gaussian noise and half-sine
/// blink transients.
class EegGenerator {
 public:
  EegGenerator(std::uint64_t seed, double rate, SimOptions options, std::int64_t origin_us = 0);

  void set_profile(const StateSignalProfile& p) { profile_ = p; }
  std::int64_t next_ts() const;
  TimestampedSample next(BlinkProcess& blinks);

 private:
  struct Tone {
    double freq_hz;
    double phase;
    double weight;
  };
  double band_value(const std::vector<Tone>& tones, double t) const;

  Rng rng_;
  double rate_;
  std::int64_t origin_us_;
  std::int64_t index_ = 0;
  StateSignalProfile profile_;
  std::vector<Tone> theta_, alpha_, beta_;
};

/// Gaze as piecewise-constant fixations joined by one-interval jumps. Dwell
/// times are 100 ms plus an exponential remainder (mean fixation_mean_ms); each
/// dwell end jumps with probability saccade_rate * fixation_mean, so the jump
/// rate is saccade_rate_hz whenever that product is at most one.
class EyeGenerator {
 public:
  EyeGenerator(std::uint64_t seed, double rate, std::int64_t origin_us = 0);

  void set_profile(const StateSignalProfile& p) { profile_ = p; }
  std::int64_t next_ts() const;
  TimestampedSample next(BlinkProcess& blinks);

 private:
  void new_dwell(std::int64_t now_us, bool allow_jump);

  Rng rng_;
  double rate_;
  std::int64_t origin_us_;
  std::int64_t index_ = 0;
  StateSignalProfile profile_;
  double gaze_x_ = 0.5;
  double gaze_y_ = 0.5;
  std::int64_t dwell_end_us_ = 0;
  bool started_ = false;
};

/// Seeds for (blink, eeg, eye) derived from one session seed.
struct SourceSeeds {
  std::uint64_t blink;
  std::uint64_t eeg;
  std::uint64_t eye;
  std::uint64_t probes;
  std::uint64_t jitter;
};
SourceSeeds derive_seeds(std::uint64_t seed);

std::vector<TimestampedSample> generate_eeg(const StateSignalProfile& profile, double duration_s,
                                            double rate, std::uint64_t seed,
                                            SimOptions options = {});
std::vector<TimestampedSample> generate_eye(const StateSignalProfile& profile, double duration_s,
                                            double rate, std::uint64_t seed);

struct ProbeEvent {
  int id = 0;
  std::int64_t ts_us = 0;
  std::int64_t deadline_us = 0;  // ts + 3 s
  std::optional<int> response;
  std::optional<std::int64_t> response_ts_us;
};

inline constexpr std::int64_t kProbeDeadlineUs = 3'000'000;

/// Something the simulator emits, in arrival order.
struct SimEvent {
  enum class Kind { Sample, Probe, ProbeAnswer };
  Kind kind = Kind::Sample;
  std::string stream;  // "eeg" or "eye" for samples
  TimestampedSample sample;
  ProbeEvent probe;
  std::int64_t arrival_us = 0;
};

/// Drives the generators through a scenario. Sample timestamps come from the
/// source clock; arrival times carry up to 2 * jitter_ms of delay, which
/// perturbs the interleaving of the two streams but never the order within
/// one stream.
class ScenarioRunner {
 public:
  explicit ScenarioRunner(ScenarioScript script, SimOptions options = {});

  /// Emits every event whose arrival time is before t_us.
  void advance_to(std::int64_t t_us, const std::function<void(const SimEvent&)>& sink);
  void run_to_end(const std::function<void(const SimEvent&)>& sink);

  /// Overrides the scripted profile from now on; nullopt returns to the script.
  void steer(std::optional<AttentionState> target);
  std::optional<AttentionState> steering() const { return steer_; }

  std::int64_t duration_us() const { return duration_us_; }
  std::int64_t now_us() const { return now_us_; }
  bool finished() const { return now_us_ >= duration_us_ + flush_us(); }
  const ScenarioScript& script() const { return script_; }
  const LabelTimeline& labels() const { return labels_; }
  const std::vector<ProbeEvent>& probes() const { return probes_; }

 private:
  struct Pending {
    std::int64_t arrival_us;
    TimestampedSample sample;
  };
  std::int64_t flush_us() const;
  AttentionState profile_state_at(std::int64_t ts_us) const;
  void generate_until(std::int64_t t_us);
  void schedule_probes();

  ScenarioScript script_;
  SimOptions options_;
  LabelTimeline labels_;
  std::int64_t duration_us_;
  BlinkProcess blinks_;
  EegGenerator eeg_;
  EyeGenerator eye_;
  Rng jitter_rng_;
  Rng probe_rng_;
  std::deque<Pending> eeg_pending_;
  std::deque<Pending> eye_pending_;
  std::int64_t eeg_last_arrival_ = INT64_MIN;
  std::int64_t eye_last_arrival_ = INT64_MIN;
  std::vector<ProbeEvent> probes_;
  std::deque<SimEvent> probe_events_;
  std::optional<AttentionState> steer_;
  std::optional<AttentionState> active_profile_;
  std::int64_t now_us_ = 0;
};

/// Full run. With accel > 0 the simulation is paced at `accel` simulated
/// seconds per wall second; otherwise it runs as fast as possible.
struct SimulatedSession {
  std::vector<RecordedSample> samples;  // arrival order
  std::vector<ProbeEvent> probes;
  LabelTimeline labels;
  std::int64_t duration_us = 0;
};

SimulatedSession run_scenario(const ScenarioScript& script, SimOptions options = {}, double accel = 0.0);

/// Rating a simulated participant gives for a state (5 focused .. 1 distracted).
int simulated_rating(std::optional<AttentionState> state);

}  // namespace neuroadapt
