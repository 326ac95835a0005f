// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Transformer decoder over a latent (or frame) memory, with teacher-forced
// label-smoothed loss and greedy / beam generation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "s2tp/nn.hpp"
#include "s2tp/tensor.hpp"

namespace s2tp {

namespace vocab {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstSymbol = 3;

/// Total vocabulary size for `symbols` character tokens plus PAD/BOS/EOS.
inline constexpr std::size_t size(std::size_t symbols) {
  return symbols + kFirstSymbol;
}

/// Symbols render as 'a', 'b', ...; specials as <pad>, <s>, </s>.
std::string render(std::span<const int> tokens);

}  // namespace vocab

struct DecoderConfig {
  std::size_t vocab_size = vocab::size(16);
  std::size_t d = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 256;
  double dropout = 0.15;
};

template <typename T>
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(const std::string& name, const DecoderConfig& config, Rng& rng);

  Var forward(Graph<T>& g, Var x, Var memory,
              std::span<const std::uint8_t> memory_mask,
              const RunContext& ctx) const;
  void collect(ParameterList<T>& out);

 private:
  double dropout_ = 0.0;
  LayerNorm<T> self_norm_;
  MultiHeadAttention<T> self_attn_;
  LayerNorm<T> cross_norm_;
  MultiHeadAttention<T> cross_attn_;
  LayerNorm<T> ffn_norm_;
  FeedForward<T> ffn_;
};

template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& config, Rng& rng);

  /// Next-token logits (t x vocab) for decoder inputs `tokens` (t tokens,
  /// starting with BOS). Position i sees only tokens[0..i].
  Var logits(Graph<T>& g, Var memory, std::span<const std::uint8_t> memory_mask,
             std::span<const int> tokens, const RunContext& ctx) const;

  /// Label-smoothed cross-entropy, averaged over the predicted positions of
  /// `targets` (BOS ... EOS). Throws ContractError on malformed targets.
  Var loss(Graph<T>& g, Var memory, std::span<const std::uint8_t> memory_mask,
           std::span<const int> targets, double smoothing,
           const RunContext& ctx) const;

  void collect(ParameterList<T>& out);
  const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  Parameter<T> embedding_;  // vocab x d, scaled by sqrt(d) on lookup
  std::vector<DecoderLayer<T>> layers_;
  LayerNorm<T> final_norm_;
  Linear<T> output_;
};

struct GenerationConfig {
  std::size_t beam = 1;
  std::size_t max_len = 22;  ///< cap on generated tokens after BOS
};

struct Hypothesis {
  std::vector<int> tokens;  ///< generated tokens, without BOS, EOS included
  double score = 0.0;       ///< cumulative log-probability
  bool truncated = false;   ///< max_len reached before EOS
};

/// beam == 1 is exact greedy argmax decoding. Otherwise the top `beam`
/// hypotheses by cumulative log-probability are kept each step (no length
/// penalty) and the best finished hypothesis is returned.
template <typename T>
Hypothesis generate(const Decoder<T>& decoder, const Tensor<T>& memory,
                    std::span<const std::uint8_t> memory_mask,
                    const GenerationConfig& config);

/// Plain argmax loop, kept separate from the beam machinery.
template <typename T>
Hypothesis greedy_decode(const Decoder<T>& decoder, const Tensor<T>& memory,
                         std::span<const std::uint8_t> memory_mask,
                         std::size_t max_len);

void validate_targets(std::span<const int> targets, std::size_t vocab_size);

}  // namespace s2tp
