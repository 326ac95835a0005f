// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/perceiver.hpp"

#include <string>

#include "s2tp/errors.hpp"
#include "s2tp/instrument.hpp"

namespace s2tp {

void validate_latent_ids(std::span<const std::size_t> ids, std::size_t n) {
  std::vector<bool> seen(n, false);
  for (std::size_t id : ids) {
    if (id >= n) {
      throw IndexError("latent id " + std::to_string(id) +
                       " out of range [0, " + std::to_string(n) + ")");
    }
    if (seen[id]) throw IndexError("duplicate latent id " + std::to_string(id));
    seen[id] = true;
  }
}

ComplexityTerms complexity(std::uint64_t latents, std::uint64_t frames,
                           std::uint64_t self_layers) {
  return {latents * frames, self_layers * latents * latents};
}

template <typename T>
PerceiverEncoder<T>::PerceiverEncoder(const PerceiverConfig& config, Rng& rng)
    : config_(config),
      latents_("encoder.latents",
               truncated_normal<T>({config.n_latents, config.d}, T(0.05), T(2),
                                   rng)),
      latent_norm_("encoder.cross.latent_norm", config.d),
      input_norm_("encoder.cross.input_norm", config.d),
      cross_("encoder.cross.attn", config.d, 1, rng),
      cross_ffn_norm_("encoder.cross.ffn_norm", config.d),
      cross_ffn_("encoder.cross.ffn", config.d, config.ffn_hidden, rng),
      final_norm_("encoder.final_norm", config.d) {
  layers_.reserve(config.self_layers);
  for (std::size_t i = 0; i < config.self_layers; ++i) {
    layers_.emplace_back("encoder.self" + std::to_string(i), config.d,
                         config.heads, config.ffn_hidden, config.dropout, rng);
  }
}

template <typename T>
CrossAttentionOutput<T> PerceiverEncoder<T>::cross_attend(
    Graph<T>& g, Var x, std::span<const std::uint8_t> frame_mask,
    std::span<const std::size_t> latent_ids) const {
  validate_latent_ids(latent_ids, config_.n_latents);
  ComponentScope scope(Component::kEncoderCross);
  Var l = g.gather_rows(g.param(latents_), latent_ids);
  Var q = latent_norm_.forward(g, l);
  Var kv = input_norm_.forward(g, x);
  AttentionResult<T> attn =
      cross_.forward(g, q, kv, frame_mask, /*causal=*/false,
                     /*keep_weights=*/true);
  Var z = g.add(l, attn.output);
  z = g.add(z, cross_ffn_.forward(g, cross_ffn_norm_.forward(g, z)));
  // Single head: weights are 1 x k x m, stored contiguously as k x m.
  const std::size_t k = latent_ids.size();
  const std::size_t m = g.value(x).rows();
  return {z, Tensor<T>({k, m}, std::move(attn.weights.storage()))};
}

template <typename T>
Var PerceiverEncoder<T>::self_attend(Graph<T>& g, Var z,
                                     const RunContext& ctx) const {
  ComponentScope scope(Component::kEncoderSelf);
  for (const auto& layer : layers_) z = layer.forward(g, z, {}, ctx);
  return final_norm_.forward(g, z);
}

template <typename T>
EncoderOutput<T> PerceiverEncoder<T>::encode(
    Graph<T>& g, Var x, std::span<const std::uint8_t> frame_mask,
    std::span<const std::size_t> latent_ids, const RunContext& ctx) const {
  CrossAttentionOutput<T> cross = cross_attend(g, x, frame_mask, latent_ids);
  EncoderOutput<T> out;
  out.z = self_attend(g, cross.z, ctx);
  out.attention = std::move(cross.attention);
  out.frame_mask.assign(frame_mask.begin(), frame_mask.end());
  out.latent_ids.assign(latent_ids.begin(), latent_ids.end());
  return out;
}

template <typename T>
void PerceiverEncoder<T>::collect(ParameterList<T>& out) {
  out.push_back(&latents_);
  latent_norm_.collect(out);
  input_norm_.collect(out);
  cross_.collect(out);
  cross_ffn_norm_.collect(out);
  cross_ffn_.collect(out);
  for (auto& layer : layers_) layer.collect(out);
  final_norm_.collect(out);
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(std::size_t d, std::size_t heads,
                                          std::size_t ffn_hidden,
                                          std::size_t layers, double dropout,
                                          Rng& rng)
    : final_norm_("encoder.final_norm", d) {
  layers_.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    layers_.emplace_back("encoder.layer" + std::to_string(i), d, heads,
                         ffn_hidden, dropout, rng);
  }
}

template <typename T>
Var TransformerEncoder<T>::encode(Graph<T>& g, Var x,
                                  std::span<const std::uint8_t> frame_mask,
                                  const RunContext& ctx) const {
  ComponentScope scope(Component::kEncoderSelf);
  for (const auto& layer : layers_) x = layer.forward(g, x, frame_mask, ctx);
  return final_norm_.forward(g, x);
}

template <typename T>
void TransformerEncoder<T>::collect(ParameterList<T>& out) {
  for (auto& layer : layers_) layer.collect(out);
  final_norm_.collect(out);
}

template class PerceiverEncoder<float>;
template class PerceiverEncoder<double>;
template class TransformerEncoder<float>;
template class TransformerEncoder<double>;

}  // namespace s2tp
