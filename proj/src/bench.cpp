#include "neuroadapt/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "neuroadapt/dataset.hpp"
#include "neuroadapt/error.hpp"

namespace neuroadapt {

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

std::string LatencyReport::table() const {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %10s %10s %10s\n", "stage", "p50_ms", "p99_ms", "max_ms");
  out += line;
  for (const auto& s : stages) {
    std::snprintf(line, sizeof line, "%-10s %10.3f %10.3f %10.3f\n", s.stage.c_str(), s.p50_ms, s.p99_ms, s.max_ms);
    out += line;
  }
  std::snprintf(line, sizeof line, "windows    %zu\n", windows);
  out += line;
  return out;
}

LatencyReport run_latency_bench(std::shared_ptr<const MlpModel> model, std::size_t windows, std::uint64_t seed) {
  if (!model) throw Error(ErrorCode::InvalidArgument, "bench needs a model");
  if (windows == 0) throw Error(ErrorCode::InvalidArgument, "bench needs at least one window");
  // One recorded session is replayed through fresh pipelines; timing does not
  // depend on which samples are used.
  const auto session = run_scenario(short_scenario(seed));
  std::vector<double> filter, features, forward, total;
  while (total.size() < windows) {
    PipelineConfig cfg;
    Pipeline pipeline(model, cfg, session.labels);
    for (const auto& o : run_pipeline(pipeline, session.samples)) {
      if (!o.classification) continue;
      filter.push_back(static_cast<double>(o.timings.filter_us) / 1e3);
      features.push_back(static_cast<double>(o.timings.features_us) / 1e3);
      forward.push_back(static_cast<double>(o.timings.forward_us) / 1e3);
      total.push_back(static_cast<double>(o.timings.total_us) / 1e3);
      if (total.size() == windows) break;
    }
  }
  LatencyReport r;
  r.windows = total.size();
  auto stats = [](std::string name, const std::vector<double>& v) {
    return StageStats{std::move(name), percentile(v, 50), percentile(v, 99), *std::max_element(v.begin(), v.end())};
  };
  r.stages = {stats("filter", filter), stats("features", features), stats("forward", forward), stats("total", total)};
  return r;
}

}  // namespace neuroadapt
