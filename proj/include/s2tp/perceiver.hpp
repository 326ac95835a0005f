// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Perceiver encoder: a learned latent array attends once to the processed
// input through a single-head cross-attention block, then mu pre-LN
// self-attention layers refine the latents.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "s2tp/nn.hpp"
#include "s2tp/tensor.hpp"

namespace s2tp {

struct PerceiverConfig {
  std::size_t d = 64;
  std::size_t n_latents = 64;
  std::size_t self_layers = 4;
  std::size_t heads = 4;  // self-attention heads; cross-attention uses one
  std::size_t ffn_hidden = 256;
  double dropout = 0.15;  // self-attention layers only
};

template <typename T>
struct CrossAttentionOutput {
  Var z;                ///< k x d
  Tensor<T> attention;  ///< k x m cross-attention weights
};

template <typename T>
struct EncoderOutput {
  Var z;                ///< k x d latent representation
  Tensor<T> attention;  ///< k x m cross-attention weights of the used latents
  std::vector<std::uint8_t> frame_mask;
  std::vector<std::size_t> latent_ids;
};

template <typename T>
class PerceiverEncoder {
 public:
  PerceiverEncoder() = default;
  PerceiverEncoder(const PerceiverConfig& config, Rng& rng);

  /// Gathers L[latent_ids] and runs the cross-attention block:
  ///   z = l + attn(LN(l), LN(x));  z = z + ffn(LN(z)).
  /// Throws IndexError on duplicate or out-of-range ids.
  CrossAttentionOutput<T> cross_attend(
      Graph<T>& g, Var x, std::span<const std::uint8_t> frame_mask,
      std::span<const std::size_t> latent_ids) const;

  /// The mu self-attention layers followed by the final norm.
  Var self_attend(Graph<T>& g, Var z, const RunContext& ctx) const;

  EncoderOutput<T> encode(Graph<T>& g, Var x,
                          std::span<const std::uint8_t> frame_mask,
                          std::span<const std::size_t> latent_ids,
                          const RunContext& ctx) const;

  void collect(ParameterList<T>& out);

  const PerceiverConfig& config() const { return config_; }
  const Parameter<T>& latents() const { return latents_; }
  Parameter<T>& latents() { return latents_; }

 private:
  PerceiverConfig config_;
  Parameter<T> latents_;  // n x d
  LayerNorm<T> latent_norm_;
  LayerNorm<T> input_norm_;
  MultiHeadAttention<T> cross_;
  LayerNorm<T> cross_ffn_norm_;
  FeedForward<T> cross_ffn_;
  std::vector<SelfAttentionLayer<T>> layers_;
  LayerNorm<T> final_norm_;
};

/// Baseline encoder: a stack of pre-LN self-attention layers over the
/// (down-sampled) input frames.
template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(std::size_t d, std::size_t heads, std::size_t ffn_hidden,
                     std::size_t layers, double dropout, Rng& rng);

  Var encode(Graph<T>& g, Var x, std::span<const std::uint8_t> frame_mask,
             const RunContext& ctx) const;
  void collect(ParameterList<T>& out);

 private:
  std::vector<SelfAttentionLayer<T>> layers_;
  LayerNorm<T> final_norm_;
};

/// Dominant encoder cost terms: cross = n*m, self = mu*n^2.
struct ComplexityTerms {
  std::uint64_t cross = 0;
  std::uint64_t self = 0;
};

ComplexityTerms complexity(std::uint64_t latents, std::uint64_t frames,
                           std::uint64_t self_layers);

/// Throws IndexError unless ids are distinct and below `n`.
void validate_latent_ids(std::span<const std::size_t> ids, std::size_t n);

}  // namespace s2tp
