// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "s2tp/errors.hpp"

namespace s2tp {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

class Reader {
 public:
  explicit Reader(const Config& c) : config_(c) {}

  std::size_t size(const std::string& key, bool allow_zero = false) const {
    const std::string& text = config_.get(key);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" +
                        text + "'");
    }
    if (!allow_zero && value == 0) {
      throw ConfigError("key '" + key + "': must be positive");
    }
    return value;
  }

  double real(const std::string& key, double lo, double hi) const {
    const std::string& text = config_.get(key);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
    }
    if (!std::isfinite(value) || value < lo || value > hi) {
      throw ConfigError("key '" + key + "': value " + text + " outside [" +
                        format_double(lo) + ", " + format_double(hi) + "]");
    }
    return value;
  }

  bool flag(const std::string& key) const {
    const std::string& text = config_.get(key);
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
  }

 private:
  const Config& config_;
};

}  // namespace

const std::vector<std::pair<std::string, std::string>>& Config::defaults() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"family", "perceiver"},
      {"d_model", "64"},
      {"heads", "4"},
      {"ffn_hidden", "256"},
      {"self_layers", "4"},
      {"encoder_layers", "6"},
      {"decoder_layers", "2"},
      {"n_latents", "64"},
      {"k_train", "16"},
      {"k_prime", "0"},
      {"feature_dim", "16"},
      {"use_input_processor", "true"},
      {"conv_kernel", "5"},
      {"conv_channels", "64"},
      {"conv_stride", "1"},
      {"dropout", "0.15"},
      {"vocab_symbols", "16"},
      {"t_min", "5"},
      {"t_max", "20"},
      {"frames_per_token", "8"},
      {"noise_std", "0.1"},
      {"task", "copy"},
      {"train_size", "5000"},
      {"valid_size", "500"},
      {"learning_rate", "0.002"},
      {"warmup_steps", "500"},
      {"batch_size", "16"},
      {"max_epochs", "100"},
      {"max_steps", "0"},
      {"max_minutes", "0"},
      {"patience", "15"},
      {"label_smoothing", "0.1"},
      {"weight_decay", "0.01"},
      {"adam_beta1", "0.9"},
      {"adam_beta2", "0.98"},
      {"adam_eps", "1e-8"},
      {"keep_best", "10"},
      {"beam", "5"},
      {"seed", "1"},
  };
  return table;
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config config;
  for (const auto& [key, value] : defaults()) config.values_[key] = value;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!config.values_.contains(key)) {
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
    if (value.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": key '" +
                        key + "' has no value");
    }
    config.values_[key] = value;
  }
  return config;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (values_.empty()) {
    for (const auto& [k, v] : defaults()) values_[k] = v;
  }
  if (!values_.contains(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  static const std::map<std::string, std::string> fallback = [] {
    std::map<std::string, std::string> m;
    for (const auto& [k, v] : defaults()) m[k] = v;
    return m;
  }();
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  if (auto it = fallback.find(key); it != fallback.end()) return it->second;
  throw ConfigError("unknown key '" + key + "'");
}

ExperimentConfig Config::experiment() const {
  Reader r(*this);
  ExperimentConfig e;
  ModelConfig& m = e.model;
  const std::string& family = get("family");
  if (family == "perceiver") {
    m.family = flops::Family::kPerceiver;
  } else if (family == "transformer") {
    m.family = flops::Family::kTransformer;
  } else {
    throw ConfigError("key 'family': expected perceiver or transformer, got '" +
                      family + "'");
  }
  m.d = r.size("d_model");
  m.heads = r.size("heads");
  m.ffn_hidden = r.size("ffn_hidden");
  m.self_layers = r.size("self_layers", true);
  m.encoder_layers = r.size("encoder_layers");
  m.decoder_layers = r.size("decoder_layers");
  m.n_latents = r.size("n_latents");
  m.feature_dim = r.size("feature_dim");
  m.use_input_processor = r.flag("use_input_processor");
  m.conv_kernel = r.size("conv_kernel");
  m.conv_channels = r.size("conv_channels");
  m.conv_stride = r.size("conv_stride");
  m.dropout = r.real("dropout", 0.0, 0.999);
  m.vocab_symbols = r.size("vocab_symbols");
  if (m.d % m.heads != 0) {
    throw ConfigError("key 'heads': d_model " + std::to_string(m.d) +
                      " is not divisible by " + std::to_string(m.heads));
  }
  if (m.conv_kernel % 2 == 0) {
    throw ConfigError("key 'conv_kernel': kernel width must be odd");
  }
  if (m.conv_stride > 2) {
    throw ConfigError("key 'conv_stride': supported strides are 1 and 2");
  }

  ToyTask& t = e.task;
  t.vocab_symbols = m.vocab_symbols;
  t.feature_dim = m.feature_dim;
  t.t_min = r.size("t_min");
  t.t_max = r.size("t_max");
  t.frames_per_token = r.size("frames_per_token");
  t.noise_std = r.real("noise_std", 0.0, 1e6);
  const std::string& task = get("task");
  if (task == "copy") {
    t.mode = TaskMode::kCopy;
  } else if (task == "reverse") {
    t.mode = TaskMode::kReverse;
  } else {
    throw ConfigError("key 'task': expected copy or reverse, got '" + task + "'");
  }
  if (t.vocab_symbols > 26) {
    throw ConfigError("key 'vocab_symbols': at most 26 symbols");
  }
  if (t.t_min > t.t_max) {
    throw ConfigError("key 't_min': exceeds t_max");
  }

  TrainConfig& tr = e.train;
  tr.k_train = r.size("k_train");
  tr.train_size = r.size("train_size");
  tr.valid_size = r.size("valid_size");
  tr.learning_rate = r.real("learning_rate", 0.0, 10.0);
  tr.warmup_steps = r.size("warmup_steps");
  tr.batch_size = r.size("batch_size");
  tr.max_epochs = r.size("max_epochs");
  tr.max_steps = r.size("max_steps", true);
  tr.max_minutes = r.real("max_minutes", 0.0, 1e9);
  tr.patience = r.size("patience");
  tr.label_smoothing = r.real("label_smoothing", 0.0, 0.999);
  tr.weight_decay = r.real("weight_decay", 0.0, 1.0);
  tr.adam_beta1 = r.real("adam_beta1", 0.0, 0.999999);
  tr.adam_beta2 = r.real("adam_beta2", 0.0, 0.999999);
  tr.adam_eps = r.real("adam_eps", 1e-30, 1.0);
  tr.keep_best = r.size("keep_best");

  e.k_prime = r.size("k_prime", true);
  e.beam = r.size("beam");
  e.seed = r.size("seed", true);
  t.seed = e.seed;
  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (model.family == flops::Family::kPerceiver) {
    if (train.k_train > model.n_latents) {
      throw ConfigError("key 'k_train': k = " + std::to_string(train.k_train) +
                        " exceeds n_latents = " +
                        std::to_string(model.n_latents));
    }
    if (k_prime > model.n_latents) {
      throw KPrimeError("key 'k_prime': k' = " + std::to_string(k_prime) +
                        " exceeds n_latents = " +
                        std::to_string(model.n_latents));
    }
  }
  if (model.use_input_processor &&
      task.t_min * task.frames_per_token < model.conv_kernel) {
    throw ConfigError("key 't_min': shortest source (" +
                      std::to_string(task.t_min * task.frames_per_token) +
                      " frames) is shorter than conv_kernel");
  }
}

Config Config::from_experiment(const ExperimentConfig& e) {
  Config c;
  for (const auto& [k, v] : defaults()) c.values_[k] = v;
  const ModelConfig& m = e.model;
  c.values_["family"] =
      m.family == flops::Family::kPerceiver ? "perceiver" : "transformer";
  c.values_["d_model"] = std::to_string(m.d);
  c.values_["heads"] = std::to_string(m.heads);
  c.values_["ffn_hidden"] = std::to_string(m.ffn_hidden);
  c.values_["self_layers"] = std::to_string(m.self_layers);
  c.values_["encoder_layers"] = std::to_string(m.encoder_layers);
  c.values_["decoder_layers"] = std::to_string(m.decoder_layers);
  c.values_["n_latents"] = std::to_string(m.n_latents);
  c.values_["feature_dim"] = std::to_string(m.feature_dim);
  c.values_["use_input_processor"] = m.use_input_processor ? "true" : "false";
  c.values_["conv_kernel"] = std::to_string(m.conv_kernel);
  c.values_["conv_channels"] = std::to_string(m.conv_channels);
  c.values_["conv_stride"] = std::to_string(m.conv_stride);
  c.values_["dropout"] = format_double(m.dropout);
  c.values_["vocab_symbols"] = std::to_string(m.vocab_symbols);
  c.values_["t_min"] = std::to_string(e.task.t_min);
  c.values_["t_max"] = std::to_string(e.task.t_max);
  c.values_["frames_per_token"] = std::to_string(e.task.frames_per_token);
  c.values_["noise_std"] = format_double(e.task.noise_std);
  c.values_["task"] = e.task.mode == TaskMode::kCopy ? "copy" : "reverse";
  const TrainConfig& t = e.train;
  c.values_["k_train"] = std::to_string(t.k_train);
  c.values_["train_size"] = std::to_string(t.train_size);
  c.values_["valid_size"] = std::to_string(t.valid_size);
  c.values_["learning_rate"] = format_double(t.learning_rate);
  c.values_["warmup_steps"] = std::to_string(t.warmup_steps);
  c.values_["batch_size"] = std::to_string(t.batch_size);
  c.values_["max_epochs"] = std::to_string(t.max_epochs);
  c.values_["max_steps"] = std::to_string(t.max_steps);
  c.values_["max_minutes"] = format_double(t.max_minutes);
  c.values_["patience"] = std::to_string(t.patience);
  c.values_["label_smoothing"] = format_double(t.label_smoothing);
  c.values_["weight_decay"] = format_double(t.weight_decay);
  c.values_["adam_beta1"] = format_double(t.adam_beta1);
  c.values_["adam_beta2"] = format_double(t.adam_beta2);
  c.values_["adam_eps"] = format_double(t.adam_eps);
  c.values_["keep_best"] = std::to_string(t.keep_best);
  c.values_["k_prime"] = std::to_string(e.k_prime);
  c.values_["beam"] = std::to_string(e.beam);
  c.values_["seed"] = std::to_string(e.seed);
  return c;
}

std::string Config::to_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : defaults()) {
    out << key << " = " << get(key) << '\n';
  }
  return out.str();
}

}  // namespace s2tp
