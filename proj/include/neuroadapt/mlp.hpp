#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "neuroadapt/attention.hpp"
#include "neuroadapt/features.hpp"

namespace neuroadapt {

inline constexpr int kModelFormatVersion = 1;
inline constexpr double kNormClampSigma = 5.0;

struct TrainConfig {
  std::size_t hidden = 32;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 42;
  // Adam moments
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct NormStat {
  double mean = 0.0;
  double std = 1.0;
  bool degenerate = false;  // constant column, std forced to 1
};

/// One hidden layer (ReLU) and a five-way softmax.
/// Weights are row-major: hidden_w[i * hidden + j] connects input i to unit j,
/// output_w[j * 5 + c] connects unit j to class c.
struct MlpModel {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::vector<double> hidden_w;
  std::vector<double> hidden_b;
  std::vector<double> output_w;
  std::vector<double> output_b;
  std::vector<NormStat> norm;
  std::vector<std::string> feature_order;
  FeatureConfig feature_config;
  TrainConfig config;

  static MlpModel zeros(std::size_t input_dim, std::size_t hidden,
                        std::vector<std::string> feature_order = {});

  /// Throws ModelContractError on shape mismatch or non-finite weights.
  void validate() const;
  std::size_t parameter_count() const;
};

using Probabilities = std::array<double, kNumStates>;

struct Classification {
  AttentionState state = AttentionState::HighAttention;
  Probabilities probs{};
  std::int64_t window_end_us = 0;
  std::int64_t latency_us = 0;
};

/// Numerically stable softmax.
Probabilities softmax(const Probabilities& logits);

/// Index of the largest probability; ties go to the lowest index.
AttentionState argmax_state(const Probabilities& probs);

/// z-score, clamped to +-5 sigma.
std::vector<double> normalize(const MlpModel& model, std::span<const double> x);

/// Logits for already-normalized input.
Probabilities logits(const MlpModel& model, std::span<const double> normalized);

/// Throws ModelContractError when fv.dim() != model.input_dim.
Classification forward(const MlpModel& model, const FeatureVector& fv, std::int64_t window_end_us = 0);

struct Example {
  std::vector<double> x;
  AttentionState y = AttentionState::HighAttention;
};
using Dataset = std::vector<Example>;

/// Gradient buffers laid out like MlpModel's parameters.
struct Gradients {
  std::vector<double> hidden_w;
  std::vector<double> hidden_b;
  std::vector<double> output_w;
  std::vector<double> output_b;
};

/// Mean cross-entropy over `batch` (inputs already normalized). Fills `grad`
/// with its exact gradient when non-null.
double cross_entropy(const MlpModel& model, std::span<const Example> batch, Gradients* grad = nullptr);

using ConfusionMatrix = std::array<std::array<std::size_t, kNumStates>, kNumStates>;  // [truth][pred]

struct Metrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  Probabilities precision{};
  Probabilities recall{};
  Probabilities f1{};
  ConfusionMatrix confusion{};
};

Metrics metrics_from_predictions(std::span<const AttentionState> truth,
                                 std::span<const AttentionState> predicted);

/// Throws EmptyDataset for an empty dataset.
Metrics evaluate(const MlpModel& model, const Dataset& data);

struct TrainingReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
  Metrics validation;
};

struct TrainResult {
  MlpModel model;
  TrainingReport report;
};

/// Stratified split, Adam mini-batches, early stopping on validation loss with
/// the best weights restored. Requires >= 50 examples and >= 2 classes.
TrainResult train(const Dataset& data, const std::vector<std::string>& feature_order,
                  const TrainConfig& config = {}, const FeatureConfig& feature_config = {});

struct CrossValidation {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  Metrics pooled;
};

/// Stratified k-fold; each fold trains with `config` on the other folds.
CrossValidation cross_validate(const Dataset& data, const std::vector<std::string>& feature_order,
                               std::size_t folds, const TrainConfig& config = {},
                               const FeatureConfig& feature_config = {});

// Model file: JSON document, see docs in README ("Model file").
std::string model_to_string(const MlpModel& model);
MlpModel model_from_string(const std::string& text);
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

/// FNV-1a 64-bit digest, hex encoded.
std::string content_hash(std::string_view bytes);

// Dataset CSV: feature_csv_header(...) columns followed by an integer `label`.
void write_dataset_csv(std::ostream& out, const Dataset& data, const FeatureConfig& config,
                       std::span<const std::int64_t> window_end_us = {});
struct LoadedDataset {
  Dataset data;
  std::vector<std::string> feature_order;
  std::vector<std::int64_t> window_end_us;
};
/// Throws SchemaError naming any missing column.
LoadedDataset read_dataset_csv(std::istream& in);
LoadedDataset load_dataset(const std::string& path);

}  // namespace neuroadapt
