#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "neuroadapt/mlp.hpp"

namespace neuroadapt {

/// Nearest-rank percentile of `values` (p in [0, 100]). Empty input gives 0.
double percentile(std::vector<double> values, double p);

struct StageStats {
  std::string stage;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

struct LatencyReport {
  std::size_t windows = 0;
  std::vector<StageStats> stages;  // filter, features, forward, total

  const StageStats& total() const { return stages.back(); }
  std::string table() const;
};

/// Streams simulated sessions through the full pipeline until `windows`
/// classified windows have been timed (window close to classification).
LatencyReport run_latency_bench(std::shared_ptr<const MlpModel> model, std::size_t windows,
                                std::uint64_t seed = 7);

}  // namespace neuroadapt
