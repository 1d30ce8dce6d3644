// neuroadapt command line: generate, train, evaluate, bench, serve, run, replay.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "neuroadapt/bench.hpp"
#include "neuroadapt/config.hpp"
#include "neuroadapt/dataset.hpp"
#include "neuroadapt/error.hpp"
#include "neuroadapt/service.hpp"
#include "neuroadapt/session.hpp"

namespace fs = std::filesystem;
using namespace neuroadapt;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Usage problems that CLI11 cannot express (e.g. an empty path).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

/// Collects string flags so they can be layered over env and config file.
class Flags {
 public:
  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_[cmd][key];
    options_[cmd].emplace_back(key, cmd->add_option(flag, slot, help));
  }
  void add_switch(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    options_[cmd].emplace_back(key, cmd->add_flag(flag, help));
  }
  void apply(CLI::App* cmd, Settings& settings) {
    for (auto& [key, opt] : options_[cmd]) {
      if (opt->count() == 0) continue;
      if (opt->get_expected_min() == 0) {
        settings.set_flag(key, "true");
      } else {
        settings.set_flag(key, values_[cmd][key]);
      }
    }
  }

 private:
  std::map<CLI::App*, std::map<std::string, std::string>> values_;
  std::map<CLI::App*, std::vector<std::pair<std::string, CLI::Option*>>> options_;
};

std::string require_path(const Settings& s, const std::string& key, const std::string& flag) {
  auto v = s.raw(key);
  if (!v || v->empty()) throw UsageError(flag + " is required and must not be empty");
  return *v;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  return out;
}

std::shared_ptr<const MlpModel> model_or_default(const Settings& s) {
  const auto path = s.get_string("model", "");
  if (!path.empty()) return std::make_shared<MlpModel>(load_model(path));
  std::cerr << "no --model given; training the default model\n";
  return std::make_shared<MlpModel>(train_default_model());
}

TrainConfig train_config(const Settings& s) {
  TrainConfig c;
  c.seed = static_cast<std::uint64_t>(s.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.hidden = static_cast<std::size_t>(s.get_int("hidden", static_cast<std::int64_t>(c.hidden)));
  c.batch_size = static_cast<std::size_t>(s.get_int("batch_size", static_cast<std::int64_t>(c.batch_size)));
  c.max_epochs = static_cast<std::size_t>(s.get_int("epochs", static_cast<std::int64_t>(c.max_epochs)));
  c.patience = static_cast<std::size_t>(s.get_int("patience", static_cast<std::int64_t>(c.patience)));
  c.learning_rate = s.get_double("learning_rate", c.learning_rate);
  c.validation_fraction = s.get_double("validation_fraction", c.validation_fraction);
  return c;
}

void print_metrics(std::ostream& out, const Metrics& m) {
  out << std::fixed << std::setprecision(4);
  out << "accuracy " << m.accuracy << " over " << m.count << " windows\n";
  out << std::left << std::setw(20) << "class" << std::right << std::setw(10) << "precision" << std::setw(10)
      << "recall" << std::setw(10) << "f1" << "\n";
  for (auto st : kAllStates) {
    const auto i = to_index(st);
    out << std::left << std::setw(20) << to_string(st) << std::right << std::setw(10) << m.precision[i]
        << std::setw(10) << m.recall[i] << std::setw(10) << m.f1[i] << "\n";
  }
  out << "confusion (rows = truth, columns = predicted, order as above)\n";
  for (const auto& row : m.confusion) {
    for (auto v : row) out << std::setw(6) << v;
    out << "\n";
  }
  out.unsetf(std::ios::fixed);
}

Dataset dataset_for(const Settings& s, std::vector<std::string>& feature_order, std::uint64_t default_seed) {
  const auto path = s.get_string("dataset", "");
  if (!path.empty()) {
    auto loaded = load_dataset(path);
    feature_order = loaded.feature_order;
    return loaded.data;
  }
  const auto seed = static_cast<std::uint64_t>(s.get_int("data_seed", static_cast<std::int64_t>(default_seed)));
  auto g = generate_dataset(resolve_scenario(s.get_string("scenario", "default"), seed));
  feature_order = feature_names({});
  return g.examples;
}

int cmd_generate(const Settings& s) {
  const auto script = resolve_scenario(s.get_string("scenario", "default"), s.get_int("seed", 7));
  const fs::path out_dir = require_path(s, "out", "--out");
  SimOptions opts;
  opts.band_limited_noise = s.get_bool("band_limited", false);
  FeatureConfig fc;
  fc.include_fixation_count = s.get_bool("fixation_count", false);
  const double accel = s.get_double("accel", 0.0);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
  auto raw = open_out(out_dir / "raw.ndjson");
  auto features = open_out(out_dir / "features.csv");
  auto labels = open_out(out_dir / "labels.csv");

  const auto t0 = std::chrono::steady_clock::now();
  auto g = dataset_from_session(run_scenario(script, opts, accel), fc, opts);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (const auto& rec : g.session.samples) raw << to_ndjson(rec) << '\n';
  write_dataset_csv(features, g.examples, fc, g.window_end_us);
  write_labels_csv(labels, g.session.labels);
  if (!raw || !features || !labels) throw Error(ErrorCode::Io, "write failed under '" + out_dir.string() + "'");

  std::array<std::size_t, kNumStates> per_class{};
  for (const auto& e : g.examples) ++per_class[to_index(e.y)];
  std::cout << "simulated " << static_cast<double>(g.session.duration_us) / 1e6 << " s in " << std::setprecision(3)
            << wall << " s wall\n";
  std::cout << "samples " << g.session.samples.size() << ", windows " << g.windows.size() << ", labeled "
            << g.examples.size() << ", rest " << g.unlabeled << "\n";
  for (auto st : kAllStates) std::cout << "  " << to_string(st) << " " << per_class[to_index(st)] << "\n";
  std::cout << "wrote " << (out_dir / "raw.ndjson").string() << ", features.csv, labels.csv\n";
  return 0;
}

int cmd_train(const Settings& s) {
  const auto out_path = require_path(s, "out", "--out");
  const auto cfg = train_config(s);
  std::vector<std::string> order;
  const Dataset data = dataset_for(s, order, 7);
  FeatureConfig fc;
  fc.include_fixation_count = order.size() == feature_names({true}).size();

  auto result = train(data, order, cfg, fc);
  save_model(result.model, out_path);
  const auto& r = result.report;
  std::cout << "examples " << data.size() << " (train " << r.train_count << ", validation " << r.validation_count
            << ")\n";
  std::cout << "epochs run " << r.epochs_run << ", best epoch " << r.best_epoch << "\n";
  std::cout << "validation ";
  print_metrics(std::cout, r.validation);
  const auto folds = s.get_int("cv", 0);
  if (folds > 1) {
    const auto cv = cross_validate(data, order, static_cast<std::size_t>(folds), cfg, fc);
    std::cout << folds << "-fold cv accuracy " << std::fixed << std::setprecision(4) << cv.mean_accuracy << " (";
    for (std::size_t i = 0; i < cv.fold_accuracy.size(); ++i) {
      std::cout << (i ? " " : "") << cv.fold_accuracy[i];
    }
    std::cout << ")\n";
  }
  std::cout << "model hash " << content_hash(model_to_string(result.model)) << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const Settings& s) {
  const auto model = load_model(require_path(s, "model", "--model"));
  std::vector<std::string> order;
  const Dataset data = dataset_for(s, order, 99);
  if (order != model.feature_order) {
    throw Error(ErrorCode::ModelContractError, "dataset feature columns do not match the model");
  }
  print_metrics(std::cout, evaluate(model, data));
  return 0;
}

int cmd_bench(const Settings& s) {
  const auto path = require_path(s, "model", "--model");
  auto model = std::make_shared<MlpModel>(load_model(path));
  const auto n = s.get_int("windows", 10'000);
  if (n <= 0) throw UsageError("--windows must be positive");
  const auto report = run_latency_bench(model, static_cast<std::size_t>(n), s.get_int("seed", 7));
  std::cout << report.table();
  const bool ok = report.total().p99_ms < 100.0;
  std::cout << std::fixed << std::setprecision(3) << "p99 window close to classification " << report.total().p99_ms << " ms (" << (ok ? "<" : ">=")
            << " 100 ms)\n";
  return 0;
}

int cmd_serve(const Settings& s) {
  ServiceConfig cfg;
  cfg.host = s.get_string("host", cfg.host);
  cfg.port = static_cast<std::uint16_t>(s.get_int("port", cfg.port));
  cfg.backend = s.get_string("backend", cfg.backend);
  cfg.templates_path = s.get_string("templates", "");
  cfg.accel = s.get_double("accel", cfg.accel);
  cfg.hysteresis_k = static_cast<std::size_t>(s.get_int("hysteresis_k", 2));
  cfg.history_turns = static_cast<std::size_t>(s.get_int("history_turns", kDefaultHistoryTurns));
  cfg.http.endpoint = s.get_string("chat_endpoint", cfg.http.endpoint);
  cfg.http.model = s.get_string("chat_model", cfg.http.model);
  cfg.http.api_key = s.get_string("chat_api_key", "");
  cfg.http.timeout = std::chrono::milliseconds(s.get_int("chat_timeout_ms", cfg.http.timeout.count()));
  cfg.http.retries = static_cast<int>(s.get_int("chat_retries", cfg.http.retries));

  Service service(cfg, model_or_default(s));
  service.start();
  std::cout << "listening on " << cfg.host << ":" << service.port() << " (backend " << cfg.backend << ")"
            << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const double duration = s.get_double("duration", 0.0);
  const auto t0 = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= duration) {
      break;
    }
  }
  service.stop();
  return 0;
}

/// "SECONDS:message" chat turns injected during a headless run.
std::vector<std::pair<std::int64_t, std::string>> parse_says(const std::vector<std::string>& says) {
  std::vector<std::pair<std::int64_t, std::string>> out;
  for (const auto& say : says) {
    const auto colon = say.find(':');
    if (colon == std::string::npos) throw UsageError("--say expects SECONDS:message, got '" + say + "'");
    try {
      out.emplace_back(static_cast<std::int64_t>(std::stod(say.substr(0, colon)) * 1e6), say.substr(colon + 1));
    } catch (const std::exception&) {
      throw UsageError("--say expects SECONDS:message, got '" + say + "'");
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

int cmd_run(const Settings& s, const std::vector<std::string>& says) {
  const auto out_path = require_path(s, "out", "--out");
  SessionConfig cfg;
  auto mode = mode_from_string(s.get_string("mode", "adaptive"));
  if (!mode) throw UsageError("--mode must be adaptive or baseline");
  cfg.mode = *mode;
  cfg.scenario = resolve_scenario(s.get_string("scenario", "short"), s.get_int("seed", 7));
  cfg.pipeline.hysteresis_k = static_cast<std::size_t>(s.get_int("hysteresis_k", 2));
  cfg.history_turns = static_cast<std::size_t>(s.get_int("history_turns", kDefaultHistoryTurns));
  const DirectiveTable directives = s.get_string("templates", "").empty()
                                        ? DirectiveTable::builtin()
                                        : DirectiveTable::load(s.get_string("templates", ""));

  auto out = open_out(out_path);
  Session session("run", cfg, model_or_default(s), make_backend("stub"), directives);
  ScenarioRunner runner(cfg.scenario, cfg.sim);
  for (const auto& [at, text] : parse_says(says)) {
    drive(session, runner, at);
    const auto r = session.user_message(text);
    std::cout << "[" << std::fixed << std::setprecision(1) << static_cast<double>(at) / 1e6 << " s] "
              << (r.ok ? r.reply : "failed: " + r.error) << "\n";
  }
  drive_to_end(session, runner);
  session.write_archive(out);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + out_path + "'");

  std::size_t windows = 0, changes = 0, directives_changed = 0;
  for (const auto& e : session.events()) {
    windows += e.type == "window";
    changes += e.type == "state_change";
    directives_changed += e.type == "directive" && !e.payload.at("initial").get<bool>();
  }
  std::cout << "windows " << windows << ", state changes " << changes << ", directive changes "
            << directives_changed << "\n";
  std::cout << "metrics " << session.metrics().to_json().dump() << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_replay(const Settings& s) {
  const auto archive_path = require_path(s, "archive", "--archive");
  auto model = std::make_shared<MlpModel>(load_model(require_path(s, "model", "--model")));
  std::ifstream in(archive_path);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + archive_path + "'");
  const auto parsed = read_archive(in);
  const auto report = replay_archive(parsed, model);
  std::cout << report.verdict() << "\n";
  std::cout << "metrics " << (report.metrics_match ? "MATCH" : "MISMATCH") << " "
            << report.recomputed_metrics.to_json().dump() << "\n";
  return report.match && report.metrics_match ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuroadapt: attention-adaptive chat pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags > environment > file > defaults)");

  Flags flags;
  auto* gen = app.add_subcommand("generate", "Simulate a scenario and write raw samples, features and labels");
  flags.add(gen, "--scenario", "scenario", "default, short or a .scn file");
  flags.add(gen, "--seed", "seed", "scenario seed");
  flags.add(gen, "--accel", "accel", "pace at N x real time (0 = as fast as possible)");
  flags.add(gen, "--out", "out", "output directory");
  flags.add_switch(gen, "--band-limited", "band_limited", "band-limited noise instead of pure tones");
  flags.add_switch(gen, "--fixation-count", "fixation_count", "add fixation_count as a tenth feature");

  auto* tr = app.add_subcommand("train", "Train the classifier");
  flags.add(tr, "--dataset", "dataset", "features CSV (default: simulate the default scenario)");
  flags.add(tr, "--scenario", "scenario", "scenario to simulate when no dataset is given");
  flags.add(tr, "--data-seed", "data_seed", "scenario seed when no dataset is given");
  flags.add(tr, "--out", "out", "model file to write");
  flags.add(tr, "--seed", "seed", "training seed");
  flags.add(tr, "--hidden", "hidden", "hidden units");
  flags.add(tr, "--epochs", "epochs", "maximum epochs");
  flags.add(tr, "--batch-size", "batch_size", "mini-batch size");
  flags.add(tr, "--learning-rate", "learning_rate", "Adam learning rate");
  flags.add(tr, "--patience", "patience", "early-stopping patience");
  flags.add(tr, "--cv", "cv", "also run k-fold cross-validation");

  auto* ev = app.add_subcommand("evaluate", "Score a model on a dataset");
  flags.add(ev, "--model", "model", "model file");
  flags.add(ev, "--dataset", "dataset", "features CSV (default: simulate a fresh session)");
  flags.add(ev, "--scenario", "scenario", "scenario to simulate when no dataset is given");
  flags.add(ev, "--data-seed", "data_seed", "scenario seed when no dataset is given (default 99)");

  auto* be = app.add_subcommand("bench", "Measure per-window latency");
  flags.add(be, "--model", "model", "model file");
  flags.add(be, "--windows", "windows", "windows to time (default 10000)");
  flags.add(be, "--seed", "seed", "scenario seed");

  auto* sv = app.add_subcommand("serve", "Run the HTTP/websocket service");
  flags.add(sv, "--host", "host", "bind address");
  flags.add(sv, "--port", "port", "port (0 picks a free one)");
  flags.add(sv, "--backend", "backend", "stub or http");
  flags.add(sv, "--model", "model", "model file (default: train the default model)");
  flags.add(sv, "--templates", "templates", "directive template file");
  flags.add(sv, "--accel", "accel", "simulated seconds per wall second for new sessions");
  flags.add(sv, "--duration", "duration", "exit after N seconds (0 = until interrupted)");
  flags.add(sv, "--chat-endpoint", "chat_endpoint", "chat completions URL for --backend http");
  flags.add(sv, "--chat-model", "chat_model", "model name sent to the chat backend");
  flags.add(sv, "--chat-timeout-ms", "chat_timeout_ms", "chat request timeout");

  std::vector<std::string> says;
  auto* rn = app.add_subcommand("run", "Run a headless accelerated session and write its archive");
  flags.add(rn, "--scenario", "scenario", "default, short or a .scn file");
  flags.add(rn, "--seed", "seed", "scenario seed");
  flags.add(rn, "--mode", "mode", "adaptive or baseline");
  flags.add(rn, "--model", "model", "model file (default: train the default model)");
  flags.add(rn, "--templates", "templates", "directive template file");
  flags.add(rn, "--out", "out", "archive to write");
  rn->add_option("--say", says, "SECONDS:message chat turn (repeatable)");

  auto* rp = app.add_subcommand("replay", "Re-run an archive and compare derived events");
  flags.add(rp, "--archive", "archive", "session archive");
  flags.add(rp, "--model", "model", "model file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: Usage: " << msg << "\n";
    return kExitUsage;
  }

  try {
    Settings settings;
    if (!config_path.empty()) settings.load_file(config_path);
    for (auto* cmd : app.get_subcommands()) flags.apply(cmd, settings);
    if (gen->parsed()) return cmd_generate(settings);
    if (tr->parsed()) return cmd_train(settings);
    if (ev->parsed()) return cmd_evaluate(settings);
    if (be->parsed()) return cmd_bench(settings);
    if (sv->parsed()) return cmd_serve(settings);
    if (rn->parsed()) return cmd_run(settings, says);
    if (rp->parsed()) return cmd_replay(settings);
  } catch (const UsageError& e) {
    std::cerr << "error: Usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << to_string(e.code()) << ": " << msg << "\n";
    return e.code() == ErrorCode::Io ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
