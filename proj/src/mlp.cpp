#include "neuroadapt/mlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "neuroadapt/error.hpp"
#include "neuroadapt/rng.hpp"

namespace neuroadapt {

namespace {

constexpr std::size_t kClasses = kNumStates;

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& st,
               const TrainConfig& cfg, double bias1, double bias2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = st.m[i] / bias1;
    const double v_hat = st.v[i] / bias2;
    param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
  }
}

Gradients zero_gradients(const MlpModel& m) {
  return {std::vector<double>(m.hidden_w.size(), 0.0), std::vector<double>(m.hidden_b.size(), 0.0),
          std::vector<double>(m.output_w.size(), 0.0), std::vector<double>(m.output_b.size(), 0.0)};
}

std::vector<NormStat> fit_norm(const Dataset& data, std::span<const std::size_t> rows, std::size_t dim) {
  std::vector<NormStat> stats(dim);
  const double n = static_cast<double>(rows.size());
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (auto r : rows) mean += data[r].x[d];
    mean /= n;
    double var = 0.0;
    for (auto r : rows) {
      const double e = data[r].x[d] - mean;
      var += e * e;
    }
    const double sd = std::sqrt(var / n);
    stats[d].mean = mean;
    if (sd > 1e-12 && std::isfinite(sd)) {
      stats[d].std = sd;
    } else {
      stats[d].std = 1.0;
      stats[d].degenerate = true;
    }
  }
  return stats;
}

void check_dataset(const Dataset& data, std::size_t dim) {
  for (const auto& ex : data) {
    if (ex.x.size() != dim) {
      throw Error(ErrorCode::ModelContractError, "dataset rows have inconsistent dimension");
    }
  }
}

std::size_t class_count(const Dataset& data) {
  std::array<bool, kClasses> seen{};
  for (const auto& ex : data) seen[to_index(ex.y)] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

MlpModel MlpModel::zeros(std::size_t input_dim, std::size_t hidden,
                         std::vector<std::string> feature_order) {
  MlpModel m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  m.hidden_w.assign(input_dim * hidden, 0.0);
  m.hidden_b.assign(hidden, 0.0);
  m.output_w.assign(hidden * kClasses, 0.0);
  m.output_b.assign(kClasses, 0.0);
  m.norm.assign(input_dim, NormStat{});
  m.feature_order = std::move(feature_order);
  m.config.hidden = hidden;
  return m;
}

void MlpModel::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ModelContractError, msg); };
  if (input_dim == 0 || hidden == 0) fail("model dimensions must be positive");
  if (hidden_w.size() != input_dim * hidden || hidden_b.size() != hidden ||
      output_w.size() != hidden * kClasses || output_b.size() != kClasses) {
    fail("model weight shapes do not match its dimensions");
  }
  if (norm.size() != input_dim) fail("model normalization stats do not match input_dim");
  if (!feature_order.empty() && feature_order.size() != input_dim) {
    fail("model feature order does not match input_dim");
  }
  for (const auto* vec : {&hidden_w, &hidden_b, &output_w, &output_b}) {
    for (double w : *vec) {
      if (!std::isfinite(w)) fail("model contains a non-finite weight");
    }
  }
  for (const auto& s : norm) {
    if (!(s.std > 0.0) || !std::isfinite(s.mean)) fail("model normalization stats invalid");
  }
}

std::size_t MlpModel::parameter_count() const {
  return hidden_w.size() + hidden_b.size() + output_w.size() + output_b.size();
}

Probabilities softmax(const Probabilities& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  Probabilities p{};
  double sum = 0.0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    p[c] = std::exp(z[c] - mx);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

AttentionState argmax_state(const Probabilities& probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kClasses; ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return static_cast<AttentionState>(best);
}

std::vector<double> normalize(const MlpModel& model, std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - model.norm[i].mean) / model.norm[i].std;
    out[i] = std::clamp(z, -kNormClampSigma, kNormClampSigma);
  }
  return out;
}

Probabilities logits(const MlpModel& model, std::span<const double> xn) {
  const std::size_t H = model.hidden;
  std::vector<double> h(model.hidden_b);
  for (std::size_t i = 0; i < model.input_dim; ++i) {
    const double xi = xn[i];
    const double* row = &model.hidden_w[i * H];
    for (std::size_t j = 0; j < H; ++j) h[j] += xi * row[j];
  }
  Probabilities z{};
  for (std::size_t c = 0; c < kClasses; ++c) z[c] = model.output_b[c];
  for (std::size_t j = 0; j < H; ++j) {
    const double a = h[j] > 0.0 ? h[j] : 0.0;
    if (a == 0.0) continue;
    const double* row = &model.output_w[j * kClasses];
    for (std::size_t c = 0; c < kClasses; ++c) z[c] += a * row[c];
  }
  return z;
}

Classification forward(const MlpModel& model, const FeatureVector& fv, std::int64_t window_end_us) {
  const auto t0 = std::chrono::steady_clock::now();
  if (fv.dim() != model.input_dim) {
    throw Error(ErrorCode::ModelContractError,
                "feature vector has dimension " + std::to_string(fv.dim()) + ", model expects " +
                    std::to_string(model.input_dim));
  }
  const auto xn = normalize(model, fv.values);
  Classification c;
  c.probs = softmax(logits(model, xn));
  c.state = argmax_state(c.probs);
  c.window_end_us = window_end_us;
  c.latency_us = std::chrono::duration_cast<std::chrono::microseconds>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return c;
}

double cross_entropy(const MlpModel& model, std::span<const Example> batch, Gradients* grad) {
  const std::size_t H = model.hidden;
  const std::size_t D = model.input_dim;
  if (grad != nullptr) *grad = zero_gradients(model);
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  std::vector<double> pre(H);
  double loss = 0.0;
  for (const auto& ex : batch) {
    for (std::size_t j = 0; j < H; ++j) pre[j] = model.hidden_b[j];
    for (std::size_t i = 0; i < D; ++i) {
      const double* row = &model.hidden_w[i * H];
      for (std::size_t j = 0; j < H; ++j) pre[j] += ex.x[i] * row[j];
    }
    Probabilities z{};
    for (std::size_t c = 0; c < kClasses; ++c) z[c] = model.output_b[c];
    for (std::size_t j = 0; j < H; ++j) {
      const double a = pre[j] > 0.0 ? pre[j] : 0.0;
      for (std::size_t c = 0; c < kClasses; ++c) z[c] += a * model.output_w[j * kClasses + c];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double log_sum = mx + std::log(sum);
    const std::size_t y = to_index(ex.y);
    loss += (log_sum - z[y]) * inv_n;

    if (grad == nullptr) continue;
    Probabilities dz{};
    for (std::size_t c = 0; c < kClasses; ++c) {
      dz[c] = (std::exp(z[c] - log_sum) - (c == y ? 1.0 : 0.0)) * inv_n;
      grad->output_b[c] += dz[c];
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double a = pre[j] > 0.0 ? pre[j] : 0.0;
      double da = 0.0;
      for (std::size_t c = 0; c < kClasses; ++c) {
        grad->output_w[j * kClasses + c] += a * dz[c];
        da += model.output_w[j * kClasses + c] * dz[c];
      }
      if (pre[j] <= 0.0) continue;
      grad->hidden_b[j] += da;
      for (std::size_t i = 0; i < D; ++i) grad->hidden_w[i * H + j] += ex.x[i] * da;
    }
  }
  return loss;
}

Metrics metrics_from_predictions(std::span<const AttentionState> truth,
                                 std::span<const AttentionState> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::InvalidArgument, "truth and prediction lengths differ");
  }
  if (truth.empty()) throw Error(ErrorCode::EmptyDataset, "no examples to evaluate");
  Metrics m;
  m.count = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion[to_index(truth[i])][to_index(predicted[i])];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
  for (std::size_t c = 0; c < kClasses; ++c) {
    std::size_t col = 0;
    std::size_t row = 0;
    for (std::size_t k = 0; k < kClasses; ++k) {
      col += m.confusion[k][c];
      row += m.confusion[c][k];
    }
    const double tp = static_cast<double>(m.confusion[c][c]);
    m.precision[c] = col > 0 ? tp / static_cast<double>(col) : 0.0;
    m.recall[c] = row > 0 ? tp / static_cast<double>(row) : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
  }
  return m;
}

Metrics evaluate(const MlpModel& model, const Dataset& data) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no examples to evaluate");
  std::vector<AttentionState> truth;
  std::vector<AttentionState> pred;
  truth.reserve(data.size());
  pred.reserve(data.size());
  for (const auto& ex : data) {
    truth.push_back(ex.y);
    pred.push_back(forward(model, FeatureVector{ex.x}).state);
  }
  return metrics_from_predictions(truth, pred);
}

TrainResult train(const Dataset& data, const std::vector<std::string>& feature_order,
                  const TrainConfig& cfg, const FeatureConfig& feature_config) {
  if (data.size() < 50) {
    throw Error(ErrorCode::DegenerateDataset,
                "training needs at least 50 examples, got " + std::to_string(data.size()));
  }
  if (class_count(data) < 2) {
    throw Error(ErrorCode::DegenerateDataset, "training needs at least two classes");
  }
  if (cfg.hidden == 0 || cfg.batch_size == 0) {
    throw Error(ErrorCode::InvalidArgument, "hidden width and batch size must be positive");
  }
  const std::size_t D = data.front().x.size();
  check_dataset(data, D);
  if (!feature_order.empty() && feature_order.size() != D) {
    throw Error(ErrorCode::ModelContractError, "feature order does not match dataset width");
  }

  Rng rng(cfg.seed);

  // Stratified split.
  std::array<std::vector<std::size_t>, kClasses> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[to_index(data[i].y)].push_back(i);
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  for (auto& rows : by_class) {
    shuffle(rows, rng);
    const auto n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(rows.size())));
    for (std::size_t k = 0; k < rows.size(); ++k) (k < n_val ? val_rows : train_rows).push_back(rows[k]);
  }
  if (val_rows.empty()) {
    val_rows.push_back(train_rows.back());
    train_rows.pop_back();
  }

  MlpModel model = MlpModel::zeros(D, cfg.hidden, feature_order);
  model.config = cfg;
  model.feature_config = feature_config;
  model.norm = fit_norm(data, train_rows, D);

  // He-uniform hidden layer, Glorot-uniform output layer.
  const double hidden_limit = std::sqrt(6.0 / static_cast<double>(D));
  for (double& w : model.hidden_w) w = rng.uniform(-hidden_limit, hidden_limit);
  const double out_limit = std::sqrt(6.0 / static_cast<double>(cfg.hidden + kClasses));
  for (double& w : model.output_w) w = rng.uniform(-out_limit, out_limit);

  auto normalized = [&](const std::vector<std::size_t>& rows) {
    Dataset out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back({normalize(model, data[r].x), data[r].y});
    return out;
  };
  Dataset train_set = normalized(train_rows);
  const Dataset val_set = normalized(val_rows);

  AdamState s_hw{std::vector<double>(model.hidden_w.size()), std::vector<double>(model.hidden_w.size())};
  AdamState s_hb{std::vector<double>(model.hidden_b.size()), std::vector<double>(model.hidden_b.size())};
  AdamState s_ow{std::vector<double>(model.output_w.size()), std::vector<double>(model.output_w.size())};
  AdamState s_ob{std::vector<double>(model.output_b.size()), std::vector<double>(model.output_b.size())};

  TrainingReport report;
  report.train_count = train_set.size();
  report.validation_count = val_set.size();
  MlpModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t step = 0;
  Gradients g;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle(train_set, rng);
    for (std::size_t start = 0; start < train_set.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, train_set.size() - start);
      cross_entropy(model, std::span<const Example>(train_set).subspan(start, len), &g);
      ++step;
      const double b1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double b2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      adam_step(model.hidden_w, g.hidden_w, s_hw, cfg, b1, b2);
      adam_step(model.hidden_b, g.hidden_b, s_hb, cfg, b1, b2);
      adam_step(model.output_w, g.output_w, s_ow, cfg, b1, b2);
      adam_step(model.output_b, g.output_b, s_ob, cfg, b1, b2);
    }
    report.train_loss.push_back(cross_entropy(model, train_set));
    const double vl = cross_entropy(model, val_set);
    report.validation_loss.push_back(vl);
    report.epochs_run = epoch + 1;
    if (vl < best_loss) {
      best_loss = vl;
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  Dataset raw_val;
  raw_val.reserve(val_rows.size());
  for (auto r : val_rows) raw_val.push_back(data[r]);
  report.validation = evaluate(best, raw_val);
  return {std::move(best), std::move(report)};
}

CrossValidation cross_validate(const Dataset& data, const std::vector<std::string>& feature_order,
                               std::size_t folds, const TrainConfig& config,
                               const FeatureConfig& feature_config) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "cross-validation needs >= 2 folds");
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no examples to cross-validate");
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> fold_of(data.size());
  std::array<std::vector<std::size_t>, kClasses> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[to_index(data[i].y)].push_back(i);
  std::size_t offset = 0;
  for (auto& rows : by_class) {
    shuffle(rows, rng);
    for (std::size_t k = 0; k < rows.size(); ++k) fold_of[rows[k]] = (offset + k) % folds;
    offset += rows.size();
  }

  CrossValidation cv;
  std::vector<AttentionState> truth;
  std::vector<AttentionState> pred;
  for (std::size_t f = 0; f < folds; ++f) {
    Dataset train_part;
    Dataset test_part;
    for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == f ? test_part : train_part).push_back(data[i]);
    const auto result = train(train_part, feature_order, config, feature_config);
    const auto m = evaluate(result.model, test_part);
    cv.fold_accuracy.push_back(m.accuracy);
    for (const auto& ex : test_part) {
      truth.push_back(ex.y);
      pred.push_back(forward(result.model, FeatureVector{ex.x}).state);
    }
  }
  cv.mean_accuracy = std::accumulate(cv.fold_accuracy.begin(), cv.fold_accuracy.end(), 0.0) /
                     static_cast<double>(folds);
  cv.pooled = metrics_from_predictions(truth, pred);
  return cv;
}

}  // namespace neuroadapt
