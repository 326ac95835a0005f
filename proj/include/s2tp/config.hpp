// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Flat `key = value` experiment configuration.
//
//   # comment
//   d_model = 64
//   n_latents = 64
//   k_train = 16
//
// Unknown keys, malformed values and inconsistent latent counts are rejected
// with a diagnostic that names the offending key.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "s2tp/dataset.hpp"
#include "s2tp/model.hpp"

namespace s2tp {

struct TrainConfig {
  double learning_rate = 0.002;
  std::size_t warmup_steps = 500;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t max_steps = 0;   ///< 0 = unlimited
  double max_minutes = 0.0;    ///< wall-clock budget, 0 = unlimited
  std::size_t patience = 15;
  double label_smoothing = 0.1;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  std::size_t k_train = 16;  ///< latents sampled per example (k)
  std::size_t train_size = 5000;
  std::size_t valid_size = 500;
  std::size_t keep_best = 10;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  ToyTask task;
  std::size_t k_prime = 0;  ///< inference latents, 0 = all n
  std::size_t beam = 5;
  std::uint64_t seed = 1;

  /// Cross-field checks (k <= n, k' <= n, task/model agreement).
  void validate() const;
};

class Config {
 public:
  /// Every recognized key with its default value, in canonical order.
  static const std::vector<std::pair<std::string, std::string>>& defaults();

  static Config parse(std::istream& in, const std::string& source = "config");
  static Config load(const std::string& path);
  static Config from_experiment(const ExperimentConfig& experiment);

  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Typed view; throws ConfigError (or KPrimeError for k' > n) naming the
  /// offending key.
  ExperimentConfig experiment() const;

  /// Canonical text: every key in defaults() order.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace s2tp
