// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// The full encoder-decoder: input processor, Perceiver (or Transformer
// baseline) encoder, and decoder, with training-time latent subsets and
// inference-time latent selection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "s2tp/decoder.hpp"
#include "s2tp/flops.hpp"
#include "s2tp/nn.hpp"
#include "s2tp/perceiver.hpp"

namespace s2tp {

struct ModelConfig {
  flops::Family family = flops::Family::kPerceiver;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t self_layers = 4;
  std::size_t encoder_layers = 6;
  std::size_t decoder_layers = 2;
  std::size_t n_latents = 64;
  std::size_t feature_dim = 16;
  bool use_input_processor = true;
  std::size_t conv_kernel = 5;
  std::size_t conv_channels = 64;
  std::size_t conv_stride = 1;
  std::size_t vocab_symbols = 16;
  double dropout = 0.15;

  std::size_t vocab_size() const { return vocab::size(vocab_symbols); }
  /// Cost-model view of this architecture evaluated with k' latents
  /// (0 = all n).
  flops::ModelSpec spec(std::size_t k_prime = 0) const;
};

enum class DlaMode { kFull, kDiverse, kRandom };

/// Encoder output prepared for decoding.
template <typename T>
struct InferenceMemory {
  Tensor<T> memory;  ///< rows the decoder attends to
  std::vector<std::uint8_t> memory_mask;
  /// Perceiver only: selected latent ids, and the cross-attention output Z
  /// (n x d) and weights A (n x m') the selection was computed from.
  std::vector<std::size_t> latent_ids;
  Tensor<T> cross_z;
  Tensor<T> attention;
  std::vector<std::uint8_t> frame_mask;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Training-path memory: the perceiver encodes with exactly `latent_ids`
  /// (cross-attention included), the baseline ignores them.
  Var encode(Graph<T>& g, Var features, std::span<const std::uint8_t> frame_mask,
             std::span<const std::size_t> latent_ids, const RunContext& ctx,
             std::vector<std::uint8_t>* memory_mask = nullptr) const;

  Var loss(Graph<T>& g, const Tensor<T>& features,
           std::span<const int> targets, std::span<const std::size_t> latent_ids,
           double smoothing, const RunContext& ctx) const;

  /// Inference encoding. kFull uses all latents; kDiverse / kRandom run the
  /// cross-attention with all n latents and keep k' rows of Z before the
  /// self-attention layers. `rng` is only read by kRandom.
  InferenceMemory<T> encode_inference(const Tensor<T>& features,
                                      std::span<const std::uint8_t> frame_mask,
                                      DlaMode mode, std::size_t k_prime,
                                      Rng* rng) const;

  /// Teacher-forced next-token logits over a prepared memory.
  Tensor<T> logits(const InferenceMemory<T>& memory,
                   std::span<const int> decoder_input) const;

  Hypothesis generate(const InferenceMemory<T>& memory,
                      const GenerationConfig& config) const;

  ParameterList<T> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  const InputProcessor<T>& input() const { return input_; }
  const PerceiverEncoder<T>& perceiver() const { return *perceiver_; }
  const Decoder<T>& decoder() const { return decoder_; }

 private:
  ModelConfig config_;
  InputProcessor<T> input_;
  std::optional<PerceiverEncoder<T>> perceiver_;
  std::optional<TransformerEncoder<T>> transformer_;
  Decoder<T> decoder_;
};

/// Copies parameter values between models of identical architecture,
/// possibly of different precision.
template <typename From, typename To>
void copy_parameters(const Model<From>& from, Model<To>& to);

}  // namespace s2tp
