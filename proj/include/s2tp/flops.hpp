// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Analytic inference cost model. Every matrix product and convolution counts
// two FLOPs per multiply-add; softmax, normalization, activations, residual
// additions, biases and latent selection are free. Decoding is costed as one
// teacher-forced pass over t positions (no beam, no batching).

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "s2tp/instrument.hpp"
#include "s2tp/nn.hpp"

namespace s2tp::flops {

enum class Family { kTransformer, kPerceiver };

struct ModelSpec {
  Family family = Family::kPerceiver;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t encoder_layers = 6;  ///< transformer family
  std::size_t self_layers = 4;     ///< perceiver family (mu)
  std::size_t decoder_layers = 2;
  std::size_t feature_dim = 16;
  bool use_input_processor = true;
  std::size_t conv_kernel = 5;
  std::size_t conv_channels = 64;
  std::size_t conv_stride = 1;
  std::size_t n_latents = 64;
  std::size_t k_prime = 64;
  std::size_t vocab_size = 19;

  /// Throws ContractError on nonpositive sizes or k' > n.
  void validate() const;
  /// Frames reaching the encoder for `frames` input frames.
  std::size_t encoder_length(std::size_t frames) const;
};

/// Large-scale S2T-Perceiver (d=256, mu=12, n=2048) and its S2T-Transformer
/// baseline (13 encoder layers, stride-2 convolutions).
ModelSpec large_perceiver(std::size_t k_prime = 2048);
ModelSpec large_transformer();

struct CostReport {
  std::array<std::uint64_t, kComponentCount> flops{};

  std::uint64_t operator[](Component c) const {
    return flops[static_cast<std::size_t>(c)];
  }
  std::uint64_t total() const;
  CostReport& operator+=(const CostReport& other);
};

// Building blocks, in FLOPs.
std::uint64_t linear_flops(std::uint64_t rows, std::uint64_t in,
                           std::uint64_t out);
/// q queries over v keys/values of width d: projections 4qd^2 + 4vd^2,
/// scores 2qvd, weighted sum 2qvd.
std::uint64_t attention_flops(std::uint64_t q, std::uint64_t v,
                              std::uint64_t d);
std::uint64_t ffn_flops(std::uint64_t rows, std::uint64_t d,
                        std::uint64_t hidden);
std::uint64_t input_processor_flops(const ModelSpec& spec, std::uint64_t frames);
/// Perceiver encoder with `cross_latents` queries in the cross-attention
/// block and `self_latents` rows through the mu self-attention layers.
CostReport perceiver_encoder_flops(const ModelSpec& spec,
                                   std::uint64_t cross_latents,
                                   std::uint64_t self_latents,
                                   std::uint64_t encoder_frames);

/// Inference cost of one example with m source frames and t decoder
/// positions. The perceiver cross-attention always runs over all n latents;
/// the self-attention layers and the decoder see k'.
CostReport cost(const ModelSpec& spec, std::uint64_t m, std::uint64_t t);

struct LengthPair {
  std::uint64_t frames = 0;
  std::uint64_t tokens = 0;
};

CostReport corpus_cost(const ModelSpec& spec, std::span<const LengthPair> corpus);

/// sum of totals for `spec` over sum for `baseline`. Throws ContractError on
/// an empty corpus.
double corpus_ratio(const ModelSpec& spec, const ModelSpec& baseline,
                    std::span<const LengthPair> corpus);

/// `m t` per line; `#` starts a comment; blank lines are skipped.
std::vector<LengthPair> parse_lengths(std::istream& in);
std::vector<LengthPair> read_lengths(const std::string& path);

/// m uniform in [200, 3000], t = round(m / 30).
std::vector<LengthPair> default_lengths(std::size_t count, std::uint64_t seed);

/// Tab-separated component table with spec/baseline totals and the ratio.
void write_report(std::ostream& out, const CostReport& spec_cost,
                  const CostReport& baseline_cost);

}  // namespace s2tp::flops
