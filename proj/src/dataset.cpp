// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/dataset.hpp"

#include <algorithm>
#include <random>

#include "s2tp/decoder.hpp"
#include "s2tp/errors.hpp"

namespace s2tp {

void ToyTask::validate() const {
  if (vocab_symbols == 0 || vocab_symbols > 26) {
    throw ContractError("vocab_symbols must lie in [1, 26]");
  }
  if (t_min == 0 || t_min > t_max) {
    throw ContractError("need 1 <= t_min <= t_max");
  }
  if (frames_per_token == 0 || feature_dim == 0) {
    throw ContractError("frames_per_token and feature_dim must be positive");
  }
  if (noise_std < 0.0) throw ContractError("noise_std must be nonnegative");
}

Tensor<float> token_patterns(const ToyTask& task) {
  std::mt19937_64 rng(task.seed * 0x9E3779B97F4A7C15ULL + 0x5EED);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<float> patterns({task.vocab_symbols, task.feature_dim});
  for (float& x : patterns.storage()) x = static_cast<float>(dist(rng));
  return patterns;
}

std::vector<Example> generate_dataset(const ToyTask& task, std::size_t count,
                                      std::uint64_t split) {
  task.validate();
  const Tensor<float> patterns = token_patterns(task);
  std::mt19937_64 rng(task.seed * 1000003ULL + split * 7919ULL + 17ULL);
  std::uniform_int_distribution<std::size_t> length(task.t_min, task.t_max);
  std::uniform_int_distribution<int> symbol(
      0, static_cast<int>(task.vocab_symbols) - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t r = task.frames_per_token;
  const std::size_t c = task.feature_dim;

  std::vector<Example> out(count);
  for (Example& ex : out) {
    const std::size_t t = length(rng);
    std::vector<int> symbols(t);
    for (int& s : symbols) s = symbol(rng);
    ex.features = Tensor<float>({t * r, c});
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t f = 0; f < r; ++f) {
        float* row = ex.features.data() + (i * r + f) * c;
        for (std::size_t j = 0; j < c; ++j) {
          const double eps = task.noise_std > 0.0 ? noise(rng) * task.noise_std
                                                  : 0.0;
          row[j] = static_cast<float>(patterns(symbols[i], j) + eps);
        }
      }
    }
    if (task.mode == TaskMode::kReverse) {
      std::reverse(symbols.begin(), symbols.end());
    }
    ex.target.reserve(t + 2);
    ex.target.push_back(vocab::kBos);
    for (int s : symbols) ex.target.push_back(s + vocab::kFirstSymbol);
    ex.target.push_back(vocab::kEos);
  }
  return out;
}

}  // namespace s2tp
