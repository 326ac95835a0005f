// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference gradient checks of every layer type and of the complete
// encoder-decoder loss, run in double precision on small shapes.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2tp/model.hpp"
#include "s2tp/tensor.hpp"

namespace s2tp {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

struct GradCheckOptions {
  std::size_t d = 16;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 32;
  std::size_t frames = 12;
  std::size_t feature_dim = 6;
  std::size_t latents = 8;
  std::size_t k = 5;  ///< latent subset used by the full-model case
  std::size_t vocab_symbols = 5;
  std::size_t target_tokens = 4;
  double step = 1e-5;
};

/// Runs one case per layer (linear, layer norm, GLU, feed-forward, masked and
/// causal attention, convolutional input processor, self-attention block,
/// perceiver cross-attention, decoder layer, label-smoothed loss) and the full
/// model loss for both encoder families. Inputs are checked as parameters.
std::vector<GradCheckCase> run_gradchecks(const GradCheckOptions& options,
                                          std::uint64_t seed);

}  // namespace s2tp
