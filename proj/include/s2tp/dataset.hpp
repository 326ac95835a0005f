// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic speech-like sequence task. Each target symbol owns a fixed random
// feature pattern; a source "spectrogram" repeats each symbol's pattern for
// `frames_per_token` frames and adds Gaussian noise.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "s2tp/tensor.hpp"

namespace s2tp {

enum class TaskMode { kCopy, kReverse };

struct ToyTask {
  std::size_t vocab_symbols = 16;
  std::size_t t_min = 5;
  std::size_t t_max = 20;
  std::size_t frames_per_token = 8;
  std::size_t feature_dim = 16;
  double noise_std = 0.1;
  TaskMode mode = TaskMode::kCopy;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Example {
  Tensor<float> features;   ///< (frames_per_token * t) x feature_dim
  std::vector<int> target;  ///< BOS, t symbols, EOS
};

/// vocab_symbols x feature_dim standard-normal patterns, fixed by task.seed.
Tensor<float> token_patterns(const ToyTask& task);

/// Deterministic in (task, count, split); different splits are independent
/// draws over the same token patterns.
std::vector<Example> generate_dataset(const ToyTask& task, std::size_t count,
                                      std::uint64_t split = 0);

}  // namespace s2tp
