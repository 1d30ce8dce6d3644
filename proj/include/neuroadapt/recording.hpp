#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "neuroadapt/stream.hpp"

namespace neuroadapt {

/// One line of the NDJSON sample format:
///   {"stream": name, "ts_us": int, "values": [float, ...]}
/// Doubles are written with shortest round-trip formatting, so recording and
/// replaying reproduces every bit.
struct RecordedSample {
  std::string stream;
  TimestampedSample sample;

  bool operator==(const RecordedSample&) const = default;
};

std::string to_ndjson(const RecordedSample& rec);

/// Throws ParseError on malformed input.
RecordedSample parse_sample_line(std::string_view line);

class SampleRecorder {
 public:
  explicit SampleRecorder(std::ostream& out) : out_(out) {}
  void write(const std::string& stream, const TimestampedSample& sample);
  std::size_t written() const { return written_; }

 private:
  std::ostream& out_;
  std::size_t written_ = 0;
};

/// Reads a whole recording; a bad line raises IntegrityError naming the line
/// number and the last valid line.
std::vector<RecordedSample> read_recording(std::istream& in);

}  // namespace neuroadapt
