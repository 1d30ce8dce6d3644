#include "neuroadapt/dataset.hpp"

#include <ostream>

namespace neuroadapt {

std::vector<WindowOutcome> run_pipeline(Pipeline& pipeline, const std::vector<RecordedSample>& samples) {
  std::vector<WindowOutcome> out;
  for (const auto& s : samples) {
    auto ready = pipeline.push(s.stream, s.sample);
    std::move(ready.begin(), ready.end(), std::back_inserter(out));
  }
  auto rest = pipeline.finish();
  std::move(rest.begin(), rest.end(), std::back_inserter(out));
  return out;
}

GeneratedData generate_dataset(const ScenarioScript& script, const FeatureConfig& features, SimOptions options) {
  return dataset_from_session(run_scenario(script, options), features, options);
}

MlpModel train_default_model(const TrainConfig& config) {
  const auto g = generate_dataset(default_scenario(7));
  return train(g.examples, feature_names({}), config).model;
}

GeneratedData dataset_from_session(SimulatedSession session, const FeatureConfig& features, SimOptions options) {
  GeneratedData g;
  g.session = std::move(session);
  PipelineConfig cfg;
  cfg.features = features;
  cfg.eeg_rate = options.eeg_rate;
  cfg.eye_rate = options.eye_rate;
  Pipeline pipeline(nullptr, cfg, g.session.labels);
  g.windows = run_pipeline(pipeline, g.session.samples);
  for (const auto& w : g.windows) {
    if (!w.features || !w.features->vector) {
      ++g.missing_features;
      continue;
    }
    if (!w.label) {
      ++g.unlabeled;
      continue;
    }
    g.examples.push_back(Example{w.features->vector->values, *w.label});
    g.window_end_us.push_back(w.end_us);
  }
  return g;
}

void write_labels_csv(std::ostream& out, const LabelTimeline& labels) {
  out << "start_us,end_us,label\n";
  for (const auto& s : labels.segments()) {
    out << s.start_us << ',' << s.end_us << ',' << (s.label ? std::string(to_string(*s.label)) : "") << '\n';
  }
}

}  // namespace neuroadapt
