#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>

#include "neuroadapt/error.hpp"
#include "neuroadapt/recording.hpp"
#include "neuroadapt/rng.hpp"
#include "neuroadapt/scenario.hpp"
#include "neuroadapt/signal_sim.hpp"
#include "neuroadapt/stream.hpp"
#include "support.hpp"

using namespace neuroadapt;
using test_support::eeg_ts;
using test_support::eye_ts;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

TimestampedSample eeg_at(std::int64_t ts, double v = 0.0) { return {ts, {v}}; }
TimestampedSample eye_at(std::int64_t ts, double v = 0.0) { return test_support::eye_sample(ts, 0.5, 0.5, 4.0 + v); }

struct Collector {
  StreamHub hub;
  StreamHandle eeg;
  StreamHandle eye;
  std::int64_t next_at;
  std::vector<AlignedWindow> windows;

  Collector() : eeg(hub.open_stream(StreamDescriptor::eeg())), eye(hub.open_stream(StreamDescriptor::eye())),
                next_at(kWindowLengthUs) {}

  void poll() {
    while (hub.latest_ts() && next_at <= *hub.latest_ts()) {
      auto r = hub.extract_window(next_at);
      if (r.status == WindowStatus::NotReady && r.reason == NotReadyReason::Pending) break;
      if (r.status == WindowStatus::Ready) windows.push_back(std::move(*r.window));
      next_at += kHopUs;
    }
  }

  void flush(std::int64_t end_us) {
    while (next_at <= end_us) {
      auto r = hub.extract_window(next_at);
      if (r.status == WindowStatus::Ready) windows.push_back(std::move(*r.window));
      next_at += kHopUs;
    }
  }
};

// Both streams for `seconds`, eye samples interleaved by timestamp.
void push_both(Collector& c, double seconds) {
  const auto n_eeg = static_cast<std::int64_t>(seconds * 250);
  const auto n_eye = static_cast<std::int64_t>(seconds * 60);
  std::int64_t i = 0, j = 0;
  while (i < n_eeg || j < n_eye) {
    if (j >= n_eye || (i < n_eeg && eeg_ts(i) <= eye_ts(j))) {
      c.hub.push(c.eeg, eeg_at(eeg_ts(i), static_cast<double>(i)));
      ++i;
    } else {
      c.hub.push(c.eye, eye_at(eye_ts(j), static_cast<double>(j)));
      ++j;
    }
    c.poll();
  }
}

}  // namespace

TEST_CASE("open_stream validates descriptors and names") {
  StreamHub hub;
  auto h = hub.open_stream(StreamDescriptor::eeg());
  CHECK(hub.buffer(h).empty());
  CHECK(code_of([&] { hub.open_stream(StreamDescriptor::eeg()); }) == ErrorCode::DuplicateStream);

  auto bad = StreamDescriptor::eye("eye2");
  bad.channel_labels.pop_back();
  CHECK(code_of([&] { hub.open_stream(bad); }) == ErrorCode::DescriptorMismatch);

  auto no_rate = StreamDescriptor::eeg("eeg2", 0.0);
  CHECK(code_of([&] { hub.open_stream(no_rate); }) == ErrorCode::DescriptorMismatch);

  CHECK(code_of([&] { (void)hub.handle("missing"); }) == ErrorCode::UnknownStream);
  CHECK(code_of([&] { hub.push(h, {0, {1.0, 2.0}}); }) == ErrorCode::DescriptorMismatch);
}

TEST_CASE("push keeps per-stream order and counts drops") {
  StreamHub hub;
  auto h = hub.open_stream(StreamDescriptor::eeg());
  CHECK(hub.push(h, eeg_at(1000)) == PushStatus::Accepted);
  CHECK(hub.push(h, eeg_at(2000)) == PushStatus::Accepted);
  CHECK(hub.buffer(h).size() == 2);
  CHECK(hub.dropped(h) == 0);

  StreamHub hub2;
  auto h2 = hub2.open_stream(StreamDescriptor::eeg());
  hub2.push(h2, eeg_at(2000));
  CHECK(hub2.push(h2, eeg_at(1500)) == PushStatus::OutOfOrder);
  CHECK(hub2.dropped(h2) == 1);
  CHECK(hub2.buffer(h2).size() == 1);
  // Equal timestamps are not increasing either.
  CHECK(hub2.push(h2, eeg_at(2000)) == PushStatus::OutOfOrder);
  CHECK(hub2.dropped(h2) == 2);
}

TEST_CASE("six seconds at 250 Hz leaves the last five seconds in the buffer") {
  StreamHub hub;
  auto h = hub.open_stream(StreamDescriptor::eeg());
  std::size_t pushed = 0;
  for (std::int64_t i = 0; i < 1500; ++i, ++pushed) hub.push(h, eeg_at(eeg_ts(i)));
  CHECK(pushed == 1500);
  // Scripted count: the newest sample is at 5.996 s, so the samples at
  // 0.996 s .. 5.996 s (a 5 s span) remain: (5996 - 996) / 4 + 1 = 1251.
  const std::size_t expected = (5'996'000 - 996'000) / 4000 + 1;
  CHECK(hub.buffer(h).size() == expected);
  CHECK(hub.buffer(h).size() >= 1249);
  CHECK(hub.buffer(h).size() <= 1251);
  CHECK(hub.buffer(h).newest().ts_us - hub.buffer(h).oldest().ts_us <= kWindowLengthUs + 4000);
}

TEST_CASE("seven seconds of both streams give three windows overlapping by four seconds") {
  Collector c;
  push_both(c, 7.0);
  c.flush(7'000'000);
  REQUIRE(c.windows.size() == 3);
  CHECK(c.windows[0].end_us == 5'000'000);
  CHECK(c.windows[1].end_us == 6'000'000);
  CHECK(c.windows[2].end_us == 7'000'000);
  for (std::size_t k = 0; k < c.windows.size(); ++k) {
    const auto& w = c.windows[k];
    CHECK(w.end_us - w.start_us == kWindowLengthUs);
    CHECK(w.eeg.size() == 1250);
    CHECK(w.eye.size() == 300);
    CHECK(w.eeg.front().ts_us == w.start_us);
    CHECK(w.eye.front().ts_us == w.start_us);
    for (const auto& s : w.eeg) CHECK((s.ts_us >= w.start_us && s.ts_us < w.end_us));
    for (const auto& s : w.eye) CHECK((s.ts_us >= w.start_us && s.ts_us < w.end_us));
    if (k > 0) {
      CHECK(w.start_us == c.windows[k - 1].start_us + 1'000'000);
      CHECK(c.windows[k - 1].end_us - w.start_us == 4'000'000);
    }
  }
}

TEST_CASE("less than five seconds of data is not ready") {
  Collector c;
  push_both(c, 4.9);
  CHECK(c.windows.empty());
  auto r = c.hub.extract_window(5'000'000);
  CHECK(r.status == WindowStatus::NotReady);
  // The buffers start at 0 but the tail of the window has not arrived yet.
  CHECK(r.reason == NotReadyReason::Pending);
  CHECK_FALSE(r.window.has_value());

  // Streams that begin after the window start cannot fill it.
  StreamHub late;
  auto e = late.open_stream(StreamDescriptor::eeg());
  auto y = late.open_stream(StreamDescriptor::eye());
  for (std::int64_t i = 250; i < 2000; ++i) late.push(e, eeg_at(eeg_ts(i)));
  for (std::int64_t j = 60; j < 480; ++j) late.push(y, eye_at(eye_ts(j)));
  auto cold = late.extract_window(5'000'000);
  CHECK(cold.status == WindowStatus::NotReady);
  CHECK(cold.reason == NotReadyReason::ColdStart);
  CHECK(late.extract_window(7'000'000).status == WindowStatus::Ready);
}

TEST_CASE("a stream that stops for more than a second is reported as stalled") {
  Collector c;
  push_both(c, 6.0);
  // EEG keeps going, eye stops at 6 s.
  for (std::int64_t i = 1500; i < 2500; ++i) c.hub.push(c.eeg, eeg_at(eeg_ts(i)));
  auto r = c.hub.extract_window(8'000'000);
  CHECK(r.status == WindowStatus::Stalled);
  CHECK(r.stalled_stream == "eye");
}

TEST_CASE("window labels follow the majority block with ties going to the later block") {
  LabelTimeline t({{0, 60'000'000, AttentionState::HighAttention},
                   {60'000'000, 90'000'000, std::nullopt},
                   {90'000'000, 150'000'000, AttentionState::Distraction}});
  CHECK(t.label_for(10'000'000, 15'000'000) == AttentionState::HighAttention);
  // 3 s High, 2 s rest.
  CHECK(t.label_for(57'000'000, 62'000'000) == AttentionState::HighAttention);
  // 2 s High, 3 s rest.
  CHECK_FALSE(t.label_for(58'000'000, 63'000'000).has_value());
  // 2.5 s rest, 2.5 s Distraction: tie, later block wins.
  CHECK(t.label_for(87'500'000, 92'500'000) == AttentionState::Distraction);

  LabelTimeline t2({{0, 60'000'000, AttentionState::HighAttention},
                    {60'000'000, 120'000'000, AttentionState::Distraction}});
  CHECK(t2.label_for(57'500'000, 62'500'000) == AttentionState::Distraction);
}

TEST_CASE("jittered arrival keeps windows aligned and loses nothing over ten minutes") {
  // Counted stream: every sample carries its index. Arrival times carry up to
  // 4 ms of delay, which reorders the two streams relative to each other.
  Rng rng(11);
  struct Arrival {
    std::int64_t at;
    bool is_eeg;
    std::int64_t index;
  };
  std::vector<Arrival> arrivals;
  const std::int64_t n_eeg = 600 * 250;
  const std::int64_t n_eye = 600 * 60;
  std::int64_t last = INT64_MIN;
  for (std::int64_t i = 0; i < n_eeg; ++i) {
    last = std::max(last, eeg_ts(i) + static_cast<std::int64_t>(rng.uniform(0.0, 4000.0)));
    arrivals.push_back({last, true, i});
  }
  last = INT64_MIN;
  for (std::int64_t j = 0; j < n_eye; ++j) {
    last = std::max(last, eye_ts(j) + static_cast<std::int64_t>(rng.uniform(0.0, 4000.0)));
    arrivals.push_back({last, false, j});
  }
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const Arrival& a, const Arrival& b) { return a.at < b.at; });

  Collector c;
  for (const auto& a : arrivals) {
    if (a.is_eeg) {
      c.hub.push(c.eeg, eeg_at(eeg_ts(a.index), static_cast<double>(a.index)));
    } else {
      c.hub.push(c.eye, eye_at(eye_ts(a.index), static_cast<double>(a.index)));
    }
    c.poll();
  }
  c.flush(600'000'000);
  CHECK(c.hub.dropped(c.eeg) == 0);
  CHECK(c.hub.dropped(c.eye) == 0);

  // Windows end at 5, 6, ..., 600 s.
  REQUIRE(c.windows.size() == 596);
  std::vector<int> eeg_seen(n_eeg, 0);
  std::vector<int> eye_seen(n_eye, 0);
  std::int64_t max_skew = 0;
  for (std::size_t k = 0; k < c.windows.size(); ++k) {
    const auto& w = c.windows[k];
    CHECK(w.end_us == static_cast<std::int64_t>(5 + k) * 1'000'000);
    // Expected contents computed from the sample clocks alone.
    const std::int64_t first_eeg = w.start_us / 4000;
    REQUIRE(w.eeg.size() == 1250);
    for (std::size_t i = 0; i < w.eeg.size(); ++i) {
      const auto idx = static_cast<std::int64_t>(w.eeg[i].values[0]);
      CHECK(idx == first_eeg + static_cast<std::int64_t>(i));
      ++eeg_seen[static_cast<std::size_t>(idx)];
    }
    std::int64_t first_eye = 0;
    while (eye_ts(first_eye) < w.start_us) ++first_eye;
    std::int64_t end_eye = first_eye;
    while (eye_ts(end_eye) < w.end_us) ++end_eye;
    REQUIRE(static_cast<std::int64_t>(w.eye.size()) == end_eye - first_eye);
    for (std::size_t i = 0; i < w.eye.size(); ++i) {
      const auto idx = static_cast<std::int64_t>(std::llround(w.eye[i].values[eye::kPupilLeft] - 4.0));
      CHECK(idx == first_eye + static_cast<std::int64_t>(i));
      ++eye_seen[static_cast<std::size_t>(idx)];
    }
    max_skew = std::max({max_skew, w.eeg.front().ts_us - w.start_us, w.eye.front().ts_us - w.start_us});
  }
  CHECK(max_skew < 1000);
  // Samples inside [5 s, 595 s) belong to exactly five windows.
  for (std::int64_t i = 5 * 250; i < 595 * 250; ++i) REQUIRE(eeg_seen[static_cast<std::size_t>(i)] == 5);
  for (std::int64_t j = 5 * 60; j < 595 * 60; ++j) REQUIRE(eye_seen[static_cast<std::size_t>(j)] == 5);
}

TEST_CASE("simulator windows stay aligned under two milliseconds of jitter") {
  ScenarioScript script = short_scenario(3);
  script.jitter_ms = 2.0;
  const auto sim = run_scenario(script);
  Collector c;
  std::map<std::string, StreamHandle> handles{{"eeg", c.eeg}, {"eye", c.eye}};
  for (const auto& r : sim.samples) {
    c.hub.push(handles.at(r.stream), r.sample);
    c.poll();
  }
  c.flush(sim.duration_us);
  REQUIRE(c.windows.size() >= 400);
  for (const auto& w : c.windows) {
    REQUIRE(w.eeg.size() >= 1248);
    REQUIRE(w.eeg.size() <= 1252);
    REQUIRE(w.eye.size() >= 298);
    REQUIRE(w.eye.size() <= 302);
    CHECK(std::abs(w.eeg.front().ts_us - w.start_us) < 1000);
    CHECK(std::abs(w.eye.front().ts_us - w.start_us) < 1000);
  }
}

TEST_CASE("ring buffer stays bounded over a simulated day") {
  RingBuffer eeg(kWindowLengthUs, 4000);
  RingBuffer eye(kWindowLengthUs, 16'667);
  std::size_t max_eeg = 0;
  std::size_t max_eye = 0;
  const std::int64_t day_us = 24LL * 3600 * 1'000'000;
  for (std::int64_t i = 0; eeg_ts(i) < day_us; ++i) {
    eeg.push({eeg_ts(i), {0.0}});
    max_eeg = std::max(max_eeg, eeg.size());
  }
  for (std::int64_t j = 0; eye_ts(j) < day_us; ++j) {
    eye.push({eye_ts(j), {}});
    max_eye = std::max(max_eye, eye.size());
    REQUIRE(eye.newest().ts_us - eye.oldest().ts_us <= kWindowLengthUs + 16'667);
  }
  CHECK(max_eeg == 1251);
  CHECK(max_eye == 301);
}

TEST_CASE("NDJSON records round-trip bit for bit") {
  Rng rng(5);
  std::vector<RecordedSample> recs;
  for (int i = 0; i < 500; ++i) {
    RecordedSample r;
    r.stream = i % 3 == 0 ? "eye" : "eeg";
    r.sample.ts_us = i * 4000 + static_cast<std::int64_t>(rng.below(1000));
    const std::size_t n = r.stream == "eye" ? 6 : 1;
    for (std::size_t k = 0; k < n; ++k) r.sample.values.push_back(rng.normal(0.0, 1e3) * std::pow(10.0, rng.uniform(-20, 20)));
    recs.push_back(r);
  }
  std::stringstream ss;
  for (const auto& r : recs) ss << to_ndjson(r) << '\n';
  const auto back = read_recording(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i] == recs[i]);
  }

  CHECK(code_of([] { parse_sample_line("{\"stream\":\"eeg\"}"); }) == ErrorCode::ParseError);
  std::stringstream bad("{\"stream\":\"eeg\",\"ts_us\":0,\"values\":[1]}\nnot json\n");
  CHECK(code_of([&] { read_recording(bad); }) == ErrorCode::IntegrityError);
}

TEST_CASE("record and replay reproduce identical windows") {
  const auto sim = run_scenario(short_scenario(9));
  std::stringstream ss;
  SampleRecorder rec(ss);
  for (const auto& r : sim.samples) rec.write(r.stream, r.sample);
  CHECK(rec.written() == sim.samples.size());
  const auto replayed = read_recording(ss);

  auto windows_of = [](const std::vector<RecordedSample>& samples) {
    Collector c;
    for (const auto& r : samples) {
      c.hub.push(r.stream == "eeg" ? c.eeg : c.eye, r.sample);
      c.poll();
    }
    return c.windows;
  };
  const auto a = windows_of(sim.samples);
  const auto b = windows_of(replayed);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].eeg == b[k].eeg);
    CHECK(a[k].eye == b[k].eye);
  }
}
