// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Neural layers: linear, layer norm, multi-head attention, feed-forward,
// the GLU convolutional input processor, sinusoidal positions and dropout.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2tp/tensor.hpp"

namespace s2tp {

using Rng = std::mt19937_64;

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

/// Training flag plus the random stream consumed by dropout. In inference
/// mode `rng` may be null.
struct RunContext {
  bool training = false;
  Rng* rng = nullptr;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T bound, Rng& rng);

/// Normal(0, std) resampled until it falls within +-limit*std.
template <typename T>
Tensor<T> truncated_normal(Shape shape, T std, T limit, Rng& rng);

/// Interleaved sin/cos table: PE(p, 2i) = sin(p / 10000^(2i/d)),
/// PE(p, 2i+1) = cos(p / 10000^(2i/d)).
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t d);

/// Inverted dropout; identity when not training or rate == 0.
template <typename T>
Var dropout(Graph<T>& g, Var x, double rate, const RunContext& ctx);

/// a * sigmoid(b) over the two column halves of x.
template <typename T>
Var glu(Graph<T>& g, Var x);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true);

  Var forward(Graph<T>& g, Var x) const;
  void collect(ParameterList<T>& out);

  std::size_t in_features() const { return weight_.value.rows(); }
  std::size_t out_features() const { return weight_.value.cols(); }
  const Parameter<T>& weight() const { return weight_; }
  Parameter<T>& weight() { return weight_; }
  const std::optional<Parameter<T>>& bias() const { return bias_; }
  std::optional<Parameter<T>>& bias() { return bias_; }

 private:
  Parameter<T> weight_;  // in x out
  std::optional<Parameter<T>> bias_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t d);

  Var forward(Graph<T>& g, Var x) const;
  void collect(ParameterList<T>& out);

  Parameter<T>& gain() { return gain_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Parameter<T> gain_;
  Parameter<T> bias_;
};

template <typename T>
struct AttentionResult {
  Var output;
  /// heads x queries x keys, filled only when requested.
  Tensor<T> weights;
};

/// Scaled dot-product attention with `heads` heads of width d / heads. The
/// key projection carries no bias: a key bias shifts every score in a row by
/// the same amount and cancels in the softmax.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d, std::size_t heads,
                     Rng& rng);

  /// `key_mask` (empty = all valid) marks valid keys with nonzero entries.
  AttentionResult<T> forward(Graph<T>& g, Var queries, Var keys_values,
                             std::span<const std::uint8_t> key_mask = {},
                             bool causal = false,
                             bool keep_weights = false) const;
  void collect(ParameterList<T>& out);

  std::size_t heads() const { return heads_; }
  std::size_t dim() const { return d_; }

 private:
  std::size_t d_ = 0;
  std::size_t heads_ = 1;
  Linear<T> q_;
  Linear<T> k_;
  Linear<T> v_;
  Linear<T> o_;
};

/// linear(d -> hidden), GELU, linear(hidden -> d).
template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t d, std::size_t hidden,
              Rng& rng);

  Var forward(Graph<T>& g, Var x) const;
  void collect(ParameterList<T>& out);

  Linear<T>& inner() { return in_; }
  Linear<T>& outer() { return out_; }

 private:
  Linear<T> in_;
  Linear<T> out_;
};

struct ConvSpec {
  std::size_t in_channels = 16;
  std::size_t inner_channels = 64;  // post-GLU width of the first layer
  std::size_t out_channels = 64;    // post-GLU width of the second layer
  std::size_t kernel = 5;
  std::size_t stride = 1;  // applied by both layers

  /// Zero padding per side, (kernel - 1) / 2.
  std::size_t padding() const { return (kernel - 1) / 2; }
  /// Output length of one layer for `frames` input rows.
  std::size_t layer_length(std::size_t frames) const;
  /// Output length of the two-layer stack.
  std::size_t output_length(std::size_t frames) const;
};

/// Two 1-D convolutions over time, each emitting twice its channel count and
/// halved by a GLU.
template <typename T>
class ConvInputProcessor {
 public:
  ConvInputProcessor() = default;
  ConvInputProcessor(const std::string& name, const ConvSpec& spec, Rng& rng);

  Var forward(Graph<T>& g, Var features) const;
  void collect(ParameterList<T>& out);
  const ConvSpec& spec() const { return spec_; }

 private:
  ConvSpec spec_;
  Linear<T> conv1_;  // (kernel*in) -> 2*inner
  Linear<T> conv2_;  // (kernel*inner) -> 2*out
};

struct InputProcessorConfig {
  std::size_t feature_dim = 16;
  std::size_t d = 64;
  bool use_processor = true;
  ConvSpec conv;
};

/// Maps a spectrogram (frames x feature_dim) to the model width and adds
/// sinusoidal positions. The processed input is deliberately not scaled by
/// sqrt(d). Without the processor a single linear projection is used.
template <typename T>
class InputProcessor {
 public:
  InputProcessor() = default;
  InputProcessor(const InputProcessorConfig& config, Rng& rng);

  Var forward(Graph<T>& g, Var features) const;
  /// Valid-frame mask of the output given the input mask.
  std::vector<std::uint8_t> output_mask(
      std::span<const std::uint8_t> frame_mask) const;
  std::size_t output_length(std::size_t frames) const;
  void collect(ParameterList<T>& out);
  const InputProcessorConfig& config() const { return config_; }

 private:
  InputProcessorConfig config_;
  std::optional<ConvInputProcessor<T>> conv_;
  std::optional<Linear<T>> projection_;
};

/// Pre-LN transformer block: x + drop(attn(LN(x))), then + drop(ffn(LN(.))).
template <typename T>
class SelfAttentionLayer {
 public:
  SelfAttentionLayer() = default;
  SelfAttentionLayer(const std::string& name, std::size_t d, std::size_t heads,
                     std::size_t hidden, double dropout, Rng& rng);

  Var forward(Graph<T>& g, Var x, std::span<const std::uint8_t> key_mask,
              const RunContext& ctx) const;
  void collect(ParameterList<T>& out);

 private:
  double dropout_ = 0.0;
  LayerNorm<T> attn_norm_;
  MultiHeadAttention<T> attn_;
  LayerNorm<T> ffn_norm_;
  FeedForward<T> ffn_;
};

}  // namespace s2tp
