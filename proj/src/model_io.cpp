#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neuroadapt/error.hpp"
#include "neuroadapt/mlp.hpp"

namespace neuroadapt {

using nlohmann::json;

namespace {

json matrix(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  json out = json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    out.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                      flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)));
  }
  return out;
}

std::vector<double> flatten(const json& m, std::size_t rows, std::size_t cols, const char* what) {
  if (!m.is_array() || m.size() != rows) {
    throw Error(ErrorCode::ModelContractError, std::string("model ") + what + " has wrong row count");
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& row : m) {
    if (!row.is_array() || row.size() != cols) {
      throw Error(ErrorCode::ModelContractError, std::string("model ") + what + " has wrong column count");
    }
    for (const auto& v : row) out.push_back(v.get<double>());
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
    while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
    out.push_back(cur);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string model_to_string(const MlpModel& model) {
  model.validate();
  json norm_mean = json::array();
  json norm_std = json::array();
  json norm_deg = json::array();
  for (const auto& s : model.norm) {
    norm_mean.push_back(s.mean);
    norm_std.push_back(s.std);
    norm_deg.push_back(s.degenerate);
  }
  const auto& c = model.config;
  json j = {
      {"format", "neuroadapt-mlp"},
      {"version", kModelFormatVersion},
      {"input_dim", model.input_dim},
      {"hidden", model.hidden},
      {"classes", kNumStates},
      {"class_order", {"HighAttention", "StableAttention", "DroppingAttention", "CognitiveOverload", "Distraction"}},
      {"activation", "relu"},
      {"feature_order", model.feature_order},
      {"norm", {{"mean", norm_mean}, {"std", norm_std}, {"degenerate", norm_deg}, {"clamp_sigma", kNormClampSigma}}},
      {"hidden_layer", {{"weights", matrix(model.hidden_w, model.input_dim, model.hidden)}, {"bias", model.hidden_b}}},
      {"output_layer", {{"weights", matrix(model.output_w, model.hidden, kNumStates)}, {"bias", model.output_b}}},
      {"meta",
       {{"seed", c.seed},
        {"feature_config", {{"include_fixation_count", model.feature_config.include_fixation_count}}},
        {"engagement_epsilon", kEngagementEpsilon},
        {"engagement_cap", kEngagementCap},
        {"train_config",
         {{"hidden", c.hidden},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"validation_fraction", c.validation_fraction},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon}}}}},
  };
  return j.dump(1) + "\n";
}

MlpModel model_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ModelContractError, std::string("model file is not JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "neuroadapt-mlp") {
      throw Error(ErrorCode::ModelContractError, "not a neuroadapt model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::ModelContractError, "unsupported model version");
    }
    if (j.at("classes").get<std::size_t>() != kNumStates) {
      throw Error(ErrorCode::ModelContractError, "model must have five classes");
    }
    MlpModel m;
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.hidden = j.at("hidden").get<std::size_t>();
    m.feature_order = j.at("feature_order").get<std::vector<std::string>>();
    const auto& norm = j.at("norm");
    const auto mean = norm.at("mean").get<std::vector<double>>();
    const auto sd = norm.at("std").get<std::vector<double>>();
    const auto deg = norm.at("degenerate").get<std::vector<bool>>();
    if (mean.size() != m.input_dim || sd.size() != m.input_dim || deg.size() != m.input_dim) {
      throw Error(ErrorCode::ModelContractError, "normalization stats do not match input_dim");
    }
    for (std::size_t i = 0; i < m.input_dim; ++i) m.norm.push_back({mean[i], sd[i], deg[i]});
    m.hidden_w = flatten(j.at("hidden_layer").at("weights"), m.input_dim, m.hidden, "hidden weights");
    m.hidden_b = j.at("hidden_layer").at("bias").get<std::vector<double>>();
    m.output_w = flatten(j.at("output_layer").at("weights"), m.hidden, kNumStates, "output weights");
    m.output_b = j.at("output_layer").at("bias").get<std::vector<double>>();
    const auto& meta = j.at("meta");
    m.config.seed = meta.at("seed").get<std::uint64_t>();
    m.feature_config.include_fixation_count =
        meta.at("feature_config").at("include_fixation_count").get<bool>();
    const auto& tc = meta.at("train_config");
    m.config.hidden = tc.at("hidden").get<std::size_t>();
    m.config.batch_size = tc.at("batch_size").get<std::size_t>();
    m.config.learning_rate = tc.at("learning_rate").get<double>();
    m.config.max_epochs = tc.at("max_epochs").get<std::size_t>();
    m.config.patience = tc.at("patience").get<std::size_t>();
    m.config.validation_fraction = tc.at("validation_fraction").get<double>();
    m.config.beta1 = tc.at("beta1").get<double>();
    m.config.beta2 = tc.at("beta2").get<double>();
    m.config.adam_epsilon = tc.at("adam_epsilon").get<double>();
    if (m.feature_order != feature_names(m.feature_config)) {
      throw Error(ErrorCode::ModelContractError, "model feature order differs from the extractor's");
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ModelContractError, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::string& path) {
  const auto text = model_to_string(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write model file '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing model file '" + path + "'");
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_string(buf.str());
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_dataset_csv(std::ostream& out, const Dataset& data, const FeatureConfig& config,
                       std::span<const std::int64_t> window_end_us) {
  out << feature_csv_header(config) << ",label\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << (i < window_end_us.size() ? window_end_us[i] : 0);
    for (double v : data[i].x) out << ',' << v;
    out << ',' << to_index(data[i].y) << '\n';
  }
}

LoadedDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, "dataset is empty: no header row");
  const auto header = split_csv(line);

  LoadedDataset out;
  const bool ten = std::find(header.begin(), header.end(), "fixation_count") != header.end();
  FeatureConfig cfg;
  cfg.include_fixation_count = ten;
  out.feature_order = feature_names(cfg);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorCode::SchemaError, "dataset is missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_cols;
  for (const auto& n : out.feature_order) feature_cols.push_back(column(n));
  const std::size_t label_col = column("label");
  const auto end_it = std::find(header.begin(), header.end(), "window_end_us");
  const bool has_end = end_it != header.end();
  const auto end_col = static_cast<std::size_t>(end_it - header.begin());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(header.size()) + " cells");
    }
    Example ex;
    try {
      for (auto c : feature_cols) ex.x.push_back(std::stod(cells[c]));
      const long label = std::stol(cells[label_col]);
      auto st = state_from_index(label);
      if (!st) throw std::out_of_range("label");
      ex.y = *st;
      if (has_end) out.window_end_us.push_back(std::stoll(cells[end_col]));
    } catch (const std::exception&) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(line_no) + ": bad value");
    }
    out.data.push_back(std::move(ex));
  }
  return out;
}

LoadedDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset '" + path + "'");
  return read_dataset_csv(in);
}

}  // namespace neuroadapt
