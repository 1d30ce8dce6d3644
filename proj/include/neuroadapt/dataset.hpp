#pragma once

#include <iosfwd>
#include <vector>

#include "neuroadapt/mlp.hpp"
#include "neuroadapt/pipeline.hpp"
#include "neuroadapt/scenario.hpp"
#include "neuroadapt/signal_sim.hpp"

namespace neuroadapt {

/// Pushes every sample through `pipeline` in order and flushes at the end.
std::vector<WindowOutcome> run_pipeline(Pipeline& pipeline, const std::vector<RecordedSample>& samples);

struct GeneratedData {
  SimulatedSession session;
  std::vector<WindowOutcome> windows;
  Dataset examples;  // labeled windows with a full feature vector
  std::vector<std::int64_t> window_end_us;
  std::size_t unlabeled = 0;
  std::size_t missing_features = 0;
};

/// Extracts one labeled example per window of an already simulated session.
GeneratedData dataset_from_session(SimulatedSession session, const FeatureConfig& features = {},
                                   SimOptions options = {});

/// Simulates the scenario and extracts one labeled example per window.
GeneratedData generate_dataset(const ScenarioScript& script, const FeatureConfig& features = {},
                               SimOptions options = {});

/// Default training set (default scenario, seed 7) and the model trained on
/// it with `config`.
MlpModel train_default_model(const TrainConfig& config = {});

/// start_us,end_us,label (label empty for rest).
void write_labels_csv(std::ostream& out, const LabelTimeline& labels);

}  // namespace neuroadapt
