#include <doctest.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "neuroadapt/dataset.hpp"
#include "neuroadapt/error.hpp"
#include "neuroadapt/mlp.hpp"
#include "neuroadapt/rng.hpp"

using namespace neuroadapt;

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

std::vector<std::string> names(std::size_t dim) {
  std::vector<std::string> n;
  for (std::size_t i = 0; i < dim; ++i) n.push_back("f" + std::to_string(i));
  return n;
}

MlpModel random_model(Rng& rng, std::size_t in, std::size_t hidden) {
  auto m = MlpModel::zeros(in, hidden, names(in));
  for (double& w : m.hidden_w) w = rng.normal(0, 0.8);
  for (double& w : m.hidden_b) w = rng.normal(0, 0.3);
  for (double& w : m.output_w) w = rng.normal(0, 0.8);
  for (double& w : m.output_b) w = rng.normal(0, 0.3);
  return m;
}

// Sign of every hidden pre-activation over the batch.
std::vector<bool> relu_pattern(const MlpModel& m, const Dataset& batch) {
  std::vector<bool> out;
  for (const auto& ex : batch) {
    for (std::size_t j = 0; j < m.hidden; ++j) {
      double pre = m.hidden_b[j];
      for (std::size_t i = 0; i < m.input_dim; ++i) pre += ex.x[i] * m.hidden_w[i * m.hidden + j];
      out.push_back(pre > 0.0);
    }
  }
  return out;
}

// Five Gaussian clusters whose centres sit 1.0 apart along the first axis.
Dataset clusters(std::uint64_t seed, std::size_t per_class, std::size_t dim = 9) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t c = 0; c < kNumStates; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Example ex;
      ex.y = kAllStates[c];
      for (std::size_t k = 0; k < dim; ++k) ex.x.push_back((k == 0 ? static_cast<double>(c) : 0.0) + rng.normal(0, 0.1));
      d.push_back(ex);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("a zero model predicts uniformly") {
  const auto m = MlpModel::zeros(9, 8, names(9));
  FeatureVector fv{std::vector<double>(9, 1.0)};
  const auto c = forward(m, fv);
  for (double p : c.probs) CHECK(p == doctest::Approx(0.2));
  CHECK(c.state == AttentionState::HighAttention);

  Dataset batch{{std::vector<double>(9, 0.3), AttentionState::Distraction}};
  CHECK(cross_entropy(m, batch) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("forward rejects a wrong input width") {
  const auto m = MlpModel::zeros(9, 4, names(9));
  CHECK(code_of([&] { forward(m, FeatureVector{std::vector<double>(10, 0.0)}); }) == ErrorCode::ModelContractError);
}

TEST_CASE("probabilities sum to one and softmax ignores shifts") {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    auto m = random_model(rng, 9, 6);
    std::vector<double> x(9);
    for (double& v : x) v = rng.normal(0, 3);
    const auto c = forward(m, FeatureVector{x});
    double sum = 0.0;
    for (double p : c.probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    Probabilities l{};
    for (double& v : l) v = rng.normal(0, 5);
    const double shift = rng.uniform(-500, 500);
    Probabilities shifted = l;
    for (double& v : shifted) v += shift;
    const auto a = softmax(l);
    const auto b = softmax(shifted);
    for (std::size_t k = 0; k < kNumStates; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-9));
  }
  const auto big = softmax({1000.0, 999.0, -1000.0, 0.0, 1000.0});
  for (double p : big) CHECK(std::isfinite(p));
  CHECK(argmax_state(big) == AttentionState::HighAttention);
}

TEST_CASE("inputs are z-scored and clamped at five sigma") {
  auto m = MlpModel::zeros(2, 2, names(2));
  m.norm = {{10.0, 2.0, false}, {0.0, 1.0, false}};
  const auto z = normalize(m, std::vector<double>{14.0, -100.0});
  CHECK(z[0] == doctest::Approx(2.0));
  CHECK(z[1] == -kNormClampSigma);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 2 + rng.below(5);
    const std::size_t hidden = 2 + rng.below(6);
    auto m = random_model(rng, in, hidden);
    Dataset batch;
    for (int i = 0; i < 8; ++i) {
      Example ex;
      for (std::size_t k = 0; k < in; ++k) ex.x.push_back(rng.normal(0, 1.5));
      ex.y = kAllStates[rng.below(kNumStates)];
      batch.push_back(ex);
    }
    Gradients g;
    cross_entropy(m, batch, &g);

    auto check = [&](std::vector<double>& params, const std::vector<double>& grad) {
      REQUIRE(params.size() == grad.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double h = 1e-3;
        const double orig = params[i];
        const auto base = relu_pattern(m, batch);
        params[i] = orig + h;
        const double up = cross_entropy(m, batch);
        const bool up_same = relu_pattern(m, batch) == base;
        params[i] = orig - h;
        const double down = cross_entropy(m, batch);
        const bool down_same = relu_pattern(m, batch) == base;
        params[i] = orig;
        // No derivative exists where a step crosses a ReLU kink.
        if (!up_same || !down_same) {
          ++kinks;
          continue;
        }
        ++checked;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max(std::abs(numeric) + std::abs(grad[i]), 1e-6);
        worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
      }
    };
    check(m.hidden_w, g.hidden_w);
    check(m.hidden_b, g.hidden_b);
    check(m.output_w, g.output_w);
    check(m.output_b, g.output_b);
  }
  MESSAGE("worst relative gradient error: " << worst << " over " << checked << " parameters, " << kinks
                                              << " kink crossings skipped");
  CHECK(worst < 1e-4);
  CHECK(kinks * 100 < checked);
}

TEST_CASE("well separated clusters are learned") {
  const auto data = clusters(5, 200);
  const auto r = train(data, names(9));
  MESSAGE("validation accuracy " << r.report.validation.accuracy << " after " << r.report.epochs_run << " epochs");
  CHECK(r.report.validation.accuracy >= 0.99);
  CHECK(r.report.validation_count == 200);
  CHECK(r.report.train_count == 800);
  CHECK(r.report.best_epoch < r.report.epochs_run);
  CHECK(evaluate(r.model, clusters(6, 50)).accuracy >= 0.99);
}

TEST_CASE("training is deterministic and invariant to affine feature scaling") {
  auto data = clusters(8, 60);
  // Blur the clusters so validation accuracy is not trivially perfect.
  Rng rng(3);
  for (auto& ex : data) ex.x[0] += rng.normal(0, 0.45);
  TrainConfig cfg;
  cfg.max_epochs = 60;
  const auto a = train(data, names(9), cfg);
  const auto b = train(data, names(9), cfg);
  CHECK(model_to_string(a.model) == model_to_string(b.model));

  auto scaled = data;
  for (auto& ex : scaled) ex.x[0] = 7.5 * ex.x[0] - 3.0;
  const auto c = train(scaled, names(9), cfg);
  MESSAGE("accuracy original " << a.report.validation.accuracy << ", scaled " << c.report.validation.accuracy);
  CHECK(c.report.validation.accuracy == a.report.validation.accuracy);
}

TEST_CASE("evaluation metrics") {
  std::vector<AttentionState> truth;
  for (std::size_t c = 0; c < kNumStates; ++c) {
    for (int i = 0; i < 20; ++i) truth.push_back(kAllStates[c]);
  }
  const auto perfect = metrics_from_predictions(truth, truth);
  CHECK(perfect.accuracy == 1.0);
  for (std::size_t c = 0; c < kNumStates; ++c) {
    CHECK(perfect.precision[c] == 1.0);
    CHECK(perfect.recall[c] == 1.0);
    CHECK(perfect.confusion[c][c] == 20);
  }

  const std::vector<AttentionState> constant(truth.size(), AttentionState::Distraction);
  const auto m = metrics_from_predictions(truth, constant);
  CHECK(m.accuracy == doctest::Approx(0.2));
  CHECK(m.precision[4] == doctest::Approx(0.2));
  CHECK(m.recall[4] == 1.0);
  CHECK(m.recall[0] == 0.0);

  // Tally oracle on a random prediction set.
  Rng rng(12);
  std::vector<AttentionState> pred;
  for (std::size_t i = 0; i < truth.size(); ++i) pred.push_back(kAllStates[rng.below(kNumStates)]);
  const auto r = metrics_from_predictions(truth, pred);
  for (std::size_t c = 0; c < kNumStates; ++c) {
    std::size_t tp = 0, pc = 0, tc = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == kAllStates[c]) ++pc;
      if (truth[i] == kAllStates[c]) ++tc;
      if (pred[i] == kAllStates[c] && truth[i] == kAllStates[c]) ++tp;
    }
    CHECK(r.precision[c] == doctest::Approx(pc ? double(tp) / double(pc) : 0.0));
    CHECK(r.recall[c] == doctest::Approx(double(tp) / double(tc)));
  }

  const auto zero = MlpModel::zeros(9, 4, names(9));
  CHECK(code_of([&] { evaluate(zero, {}); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("training rejects degenerate datasets") {
  auto one_class = clusters(1, 20);
  std::erase_if(one_class, [](const Example& e) { return e.y != AttentionState::HighAttention; });
  one_class.insert(one_class.end(), one_class.begin(), one_class.end());
  one_class.insert(one_class.end(), one_class.begin(), one_class.end());
  CHECK(one_class.size() == 80);
  CHECK(code_of([&] { train(one_class, names(9)); }) == ErrorCode::DegenerateDataset);
  CHECK(code_of([&] { train(clusters(1, 5), names(9)); }) == ErrorCode::DegenerateDataset);
}

TEST_CASE("cross-validation on the default scenario") {
  const auto data = generate_dataset(default_scenario(7));
  std::array<std::size_t, kNumStates> per{};
  for (const auto& ex : data.examples) ++per[to_index(ex.y)];
  for (auto n : per) CHECK(n >= 60);
  const auto cv = cross_validate(data.examples, feature_names({}), 5);
  REQUIRE(cv.fold_accuracy.size() == 5);
  MESSAGE("5-fold mean accuracy " << cv.mean_accuracy);
  CHECK(cv.mean_accuracy >= 0.70);
  CHECK(cv.mean_accuracy >= 0.90);
  CHECK(cv.pooled.count == data.examples.size());
}

TEST_CASE("model files round-trip") {
  Rng rng(77);
  auto m = random_model(rng, 9, 5);
  m.norm[2] = {3.5, 0.25, false};
  m.norm[4] = {1.0, 1.0, true};
  m.feature_order = feature_names({});
  const auto text = model_to_string(m);
  const auto back = model_from_string(text);
  CHECK(model_to_string(back) == text);
  CHECK(content_hash(text) == content_hash(model_to_string(back)));
  CHECK(content_hash(text).size() == 16);
  FeatureVector fv{{1, 2, 3, 4, 5, 6, 7, 8, 9}};
  CHECK(forward(m, fv).probs == forward(back, fv).probs);

  CHECK(code_of([] { model_from_string("{}"); }) == ErrorCode::ModelContractError);
  CHECK(code_of([] { model_from_string("not json"); }) == ErrorCode::ModelContractError);
  CHECK(code_of([] { load_model("/nonexistent/model.json"); }) == ErrorCode::Io);
}

TEST_CASE("dataset CSV") {
  const auto data = clusters(3, 4);
  std::stringstream ss;
  write_dataset_csv(ss, data, {});
  const auto back = read_dataset_csv(ss);
  REQUIRE(back.data.size() == data.size());
  CHECK(back.feature_order == feature_names({}));
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.data[i].x == data[i].x);
    CHECK(back.data[i].y == data[i].y);
  }

  std::stringstream no_label("theta,alpha,beta,engagement,fixation_mean_ms,gaze_dispersion,saccade_rate,blink_rate,pupil_variability\n1,2,3,4,5,6,7,8,9\n");
  try {
    read_dataset_csv(no_label);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }
}

TEST_CASE("evaluate agrees with a recount of the model's own decisions") {
  const auto data = clusters(21, 60);
  TrainConfig cfg;
  cfg.max_epochs = 5;  // deliberately undertrained so mistakes exist
  const auto model = train(data, names(9), cfg).model;
  const auto held_out = clusters(22, 40);
  const auto m = evaluate(model, held_out);
  ConfusionMatrix tally{};
  std::size_t correct = 0;
  for (const auto& ex : held_out) {
    const auto pred = forward(model, FeatureVector{ex.x}).state;
    ++tally[to_index(ex.y)][to_index(pred)];
    if (pred == ex.y) ++correct;
  }
  CHECK(m.confusion == tally);
  CHECK(m.accuracy == static_cast<double>(correct) / static_cast<double>(held_out.size()));
}

TEST_CASE("forward p99 stays under a millisecond") {
  Rng rng(4);
  const auto m = random_model(rng, 9, 32);
  std::vector<double> ms;
  for (int i = 0; i < 2000; ++i) {
    FeatureVector fv;
    for (int k = 0; k < 9; ++k) fv.values.push_back(rng.normal(0, 1));
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = forward(m, fv);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    CHECK(c.probs[0] >= 0.0);
  }
  std::sort(ms.begin(), ms.end());
  CHECK(ms[1979] < 1.0);
}
