#include "neuroadapt/recording.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "neuroadapt/error.hpp"

namespace neuroadapt {

using nlohmann::json;

std::string to_ndjson(const RecordedSample& rec) {
  json values = json::array();
  for (double v : rec.sample.values) {
    if (std::isfinite(v)) {
      values.push_back(v);
    } else {
      values.push_back(nullptr);
    }
  }
  json j = {{"stream", rec.stream}, {"ts_us", rec.sample.ts_us}, {"values", std::move(values)}};
  return j.dump();
}

RecordedSample parse_sample_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("stream") || !j.contains("ts_us") || !j.contains("values") ||
      !j["stream"].is_string() || !j["ts_us"].is_number_integer() || !j["values"].is_array()) {
    throw Error(ErrorCode::ParseError, "sample line needs stream, ts_us and values");
  }
  RecordedSample rec;
  rec.stream = j["stream"].get<std::string>();
  rec.sample.ts_us = j["ts_us"].get<std::int64_t>();
  rec.sample.values.reserve(j["values"].size());
  for (const auto& v : j["values"]) {
    if (v.is_null()) {
      rec.sample.values.push_back(std::numeric_limits<double>::quiet_NaN());
    } else if (v.is_number()) {
      rec.sample.values.push_back(v.get<double>());
    } else {
      throw Error(ErrorCode::ParseError, "sample values must be numbers");
    }
  }
  return rec;
}

void SampleRecorder::write(const std::string& stream, const TimestampedSample& sample) {
  out_ << to_ndjson(RecordedSample{stream, sample}) << '\n';
  ++written_;
}

std::vector<RecordedSample> read_recording(std::istream& in) {
  std::vector<RecordedSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_sample_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::IntegrityError,
                  "line " + std::to_string(line_no) + ": " + e.what() +
                      " (last valid line " + std::to_string(line_no - 1) + ")");
    }
  }
  return out;
}

}  // namespace neuroadapt
