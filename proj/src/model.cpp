// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/model.hpp"

#include <numeric>

#include "s2tp/dla.hpp"
#include "s2tp/errors.hpp"
#include "s2tp/instrument.hpp"

namespace s2tp {

flops::ModelSpec ModelConfig::spec(std::size_t k_prime) const {
  flops::ModelSpec s;
  s.family = family;
  s.d = d;
  s.heads = heads;
  s.ffn_hidden = ffn_hidden;
  s.encoder_layers = encoder_layers;
  s.self_layers = self_layers;
  s.decoder_layers = decoder_layers;
  s.feature_dim = feature_dim;
  s.use_input_processor = use_input_processor;
  s.conv_kernel = conv_kernel;
  s.conv_channels = conv_channels;
  s.conv_stride = conv_stride;
  s.n_latents = n_latents;
  s.k_prime = k_prime == 0 ? n_latents : k_prime;
  s.vocab_size = vocab_size();
  return s;
}

namespace {

InputProcessorConfig input_config(const ModelConfig& c) {
  InputProcessorConfig ic;
  ic.feature_dim = c.feature_dim;
  ic.d = c.d;
  ic.use_processor = c.use_input_processor;
  ic.conv.kernel = c.conv_kernel;
  ic.conv.inner_channels = c.conv_channels;
  ic.conv.stride = c.conv_stride;
  return ic;
}

std::vector<std::uint8_t> full_mask(std::size_t frames) {
  return std::vector<std::uint8_t>(frames, 1);
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  Rng rng(seed);
  input_ = InputProcessor<T>(input_config(config), rng);
  if (config.family == flops::Family::kPerceiver) {
    PerceiverConfig pc;
    pc.d = config.d;
    pc.n_latents = config.n_latents;
    pc.self_layers = config.self_layers;
    pc.heads = config.heads;
    pc.ffn_hidden = config.ffn_hidden;
    pc.dropout = config.dropout;
    perceiver_.emplace(pc, rng);
  } else {
    transformer_.emplace(config.d, config.heads, config.ffn_hidden,
                         config.encoder_layers, config.dropout, rng);
  }
  DecoderConfig dc;
  dc.vocab_size = config.vocab_size();
  dc.d = config.d;
  dc.layers = config.decoder_layers;
  dc.heads = config.heads;
  dc.ffn_hidden = config.ffn_hidden;
  dc.dropout = config.dropout;
  decoder_ = Decoder<T>(dc, rng);
}

template <typename T>
Var Model<T>::encode(Graph<T>& g, Var features,
                     std::span<const std::uint8_t> frame_mask,
                     std::span<const std::size_t> latent_ids,
                     const RunContext& ctx,
                     std::vector<std::uint8_t>* memory_mask) const {
  Var x;
  {
    ComponentScope scope(Component::kInputProcessor);
    x = input_.forward(g, features);
  }
  std::vector<std::uint8_t> mask =
      frame_mask.empty() ? full_mask(g.value(x).rows())
                         : input_.output_mask(frame_mask);
  if (perceiver_) {
    Var z = perceiver_->encode(g, x, mask, latent_ids, ctx).z;
    if (memory_mask) memory_mask->clear();
    return z;
  }
  Var z = transformer_->encode(g, x, mask, ctx);
  if (memory_mask) *memory_mask = std::move(mask);
  return z;
}

template <typename T>
Var Model<T>::loss(Graph<T>& g, const Tensor<T>& features,
                   std::span<const int> targets,
                   std::span<const std::size_t> latent_ids, double smoothing,
                   const RunContext& ctx) const {
  std::vector<std::uint8_t> memory_mask;
  Var memory = encode(g, g.constant(features), {}, latent_ids, ctx, &memory_mask);
  return decoder_.loss(g, memory, memory_mask, targets, smoothing, ctx);
}

template <typename T>
InferenceMemory<T> Model<T>::encode_inference(
    const Tensor<T>& features, std::span<const std::uint8_t> frame_mask,
    DlaMode mode, std::size_t k_prime, Rng* rng) const {
  const RunContext ctx{};
  Graph<T> g(false);
  Var x;
  {
    ComponentScope scope(Component::kInputProcessor);
    x = input_.forward(g, g.constant(features));
  }
  InferenceMemory<T> out;
  out.frame_mask = frame_mask.empty() ? full_mask(g.value(x).rows())
                                      : input_.output_mask(frame_mask);
  if (!perceiver_) {
    out.memory = g.value(transformer_->encode(g, x, out.frame_mask, ctx));
    out.memory_mask = out.frame_mask;
    return out;
  }
  const std::size_t n = config_.n_latents;
  if (mode != DlaMode::kFull && (k_prime == 0 || k_prime > n)) {
    throw KPrimeError("k' = " + std::to_string(k_prime) +
                      " must lie in [1, n = " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  CrossAttentionOutput<T> cross =
      perceiver_->cross_attend(g, x, out.frame_mask, all);
  out.cross_z = g.value(cross.z);
  out.attention = std::move(cross.attention);
  switch (mode) {
    case DlaMode::kFull:
      out.latent_ids = all;
      break;
    case DlaMode::kDiverse:
      out.latent_ids = dla::select_diverse_ids(
          dla::similarity(out.attention, out.frame_mask), k_prime);
      break;
    case DlaMode::kRandom:
      if (rng == nullptr) throw ContractError("random selection needs an rng");
      out.latent_ids = dla::sample_train_latents(n, k_prime, *rng);
      break;
  }
  Var z = mode == DlaMode::kFull ? cross.z
                                 : g.gather_rows(cross.z, out.latent_ids);
  out.memory = g.value(perceiver_->self_attend(g, z, ctx));
  return out;
}

template <typename T>
Tensor<T> Model<T>::logits(const InferenceMemory<T>& memory,
                           std::span<const int> decoder_input) const {
  Graph<T> g(false);
  Var mem = g.constant(memory.memory);
  return g.value(decoder_.logits(g, mem, memory.memory_mask, decoder_input,
                                 RunContext{}));
}

template <typename T>
Hypothesis Model<T>::generate(const InferenceMemory<T>& memory,
                              const GenerationConfig& config) const {
  return s2tp::generate(decoder_, memory.memory, memory.memory_mask, config);
}

template <typename T>
ParameterList<T> Model<T>::parameters() {
  ParameterList<T> out;
  input_.collect(out);
  if (perceiver_) perceiver_->collect(out);
  if (transformer_) transformer_->collect(out);
  decoder_.collect(out);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
  ParameterList<T> mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename From, typename To>
void copy_parameters(const Model<From>& from, Model<To>& to) {
  std::vector<const Parameter<From>*> src = from.parameters();
  ParameterList<To> dst = to.parameters();
  if (src.size() != dst.size()) {
    throw IncompatibleCheckpointError("parameter count mismatch");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->name != dst[i]->name ||
        src[i]->value.shape() != dst[i]->value.shape()) {
      throw IncompatibleCheckpointError("parameter mismatch at " +
                                        src[i]->name);
    }
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

template class Model<float>;
template class Model<double>;
template void copy_parameters(const Model<float>&, Model<double>&);
template void copy_parameters(const Model<double>&, Model<float>&);
template void copy_parameters(const Model<float>&, Model<float>&);

}  // namespace s2tp
