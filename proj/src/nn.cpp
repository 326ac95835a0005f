// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/nn.hpp"

#include <algorithm>
#include <cmath>

#include "s2tp/errors.hpp"

namespace s2tp {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  for (T& x : t.storage()) x = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> truncated_normal(Shape shape, T std, T limit, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (T& x : t.storage()) {
    double z = dist(rng);
    while (std::abs(z) > static_cast<double>(limit)) z = dist(rng);
    x = static_cast<T>(z * static_cast<double>(std));
  }
  return t;
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t d) {
  Tensor<T> pe({length, d});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Var dropout(Graph<T>& g, Var x, double rate, const RunContext& ctx) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout rate must lie in [0, 1)");
  }
  if (!ctx.training || rate == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("training dropout needs an rng");
  Tensor<T> keep(g.value(x).shape());
  std::bernoulli_distribution survive(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (T& k : keep.storage()) k = survive(*ctx.rng) ? scale : T{0};
  return g.mul(x, g.constant(std::move(keep)));
}

template <typename T>
Var glu(Graph<T>& g, Var x) {
  const std::size_t c = g.value(x).cols();
  if (c % 2 != 0) throw DimensionError("glu: odd channel count");
  Var a = g.slice_cols(x, 0, c / 2);
  Var b = g.slice_cols(x, c / 2, c / 2);
  return g.mul(a, g.sigmoid(b));
}

// ---------------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out,
                  Rng& rng, bool with_bias) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
  weight_ = Parameter<T>(name + ".weight", uniform_tensor<T>({in, out}, bound, rng));
  if (with_bias) {
    bias_ = Parameter<T>(name + ".bias", uniform_tensor<T>({out}, bound, rng));
  }
}

template <typename T>
Var Linear<T>::forward(Graph<T>& g, Var x) const {
  Var y = g.matmul(x, g.param(weight_));
  if (bias_) y = g.add_row(y, g.param(*bias_));
  return y;
}

template <typename T>
void Linear<T>::collect(ParameterList<T>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(&*bias_);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t d)
    : gain_(name + ".gain", Tensor<T>::full({d}, T{1})),
      bias_(name + ".bias", Tensor<T>({d})) {}

template <typename T>
Var LayerNorm<T>::forward(Graph<T>& g, Var x) const {
  return g.layer_norm(x, g.param(gain_), g.param(bias_),
                      static_cast<T>(kLayerNormEps));
}

template <typename T>
void LayerNorm<T>::collect(ParameterList<T>& out) {
  out.push_back(&gain_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(const std::string& name,
                                          std::size_t d, std::size_t heads,
                                          Rng& rng)
    : d_(d), heads_(heads) {
  if (heads == 0 || d % heads != 0) {
    throw ContractError("attention: width " + std::to_string(d) +
                        " is not divisible by " + std::to_string(heads) +
                        " heads");
  }
  q_ = Linear<T>(name + ".q", d, d, rng);
  k_ = Linear<T>(name + ".k", d, d, rng, /*with_bias=*/false);
  v_ = Linear<T>(name + ".v", d, d, rng);
  o_ = Linear<T>(name + ".o", d, d, rng);
}

template <typename T>
AttentionResult<T> MultiHeadAttention<T>::forward(
    Graph<T>& g, Var queries, Var keys_values,
    std::span<const std::uint8_t> key_mask, bool causal,
    bool keep_weights) const {
  const std::size_t a = g.value(queries).rows();
  const std::size_t b = g.value(keys_values).rows();
  if (!key_mask.empty() && key_mask.size() != b) {
    throw DimensionError("attention: key mask covers " +
                         std::to_string(key_mask.size()) + " of " +
                         std::to_string(b) + " keys");
  }
  std::optional<Mask> mask;
  if (!key_mask.empty() || causal) {
    mask = key_mask.empty() ? Mask::all(a, b) : Mask::from_columns(a, key_mask);
    if (causal) {
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) mask->keep[i * b + j] = 0;
      }
    }
  }
  const Mask* mp = mask ? &*mask : nullptr;

  Var q = q_.forward(g, queries);
  Var k = k_.forward(g, keys_values);
  Var v = v_.forward(g, keys_values);
  const std::size_t dh = d_ / heads_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  AttentionResult<T> result;
  if (keep_weights) result.weights = Tensor<T>({heads_, a, b});
  std::vector<Var> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Var qh = heads_ == 1 ? q : g.slice_cols(q, h * dh, dh);
    Var kh = heads_ == 1 ? k : g.slice_cols(k, h * dh, dh);
    Var vh = heads_ == 1 ? v : g.slice_cols(v, h * dh, dh);
    Var scores = g.scale(g.matmul(qh, kh, Transpose::kYes), scale);
    Var probs = g.softmax_rows(scores, mp);
    if (keep_weights) {
      const Tensor<T>& pv = g.value(probs);
      std::copy(pv.values().begin(), pv.values().end(),
                result.weights.data() + h * a * b);
    }
    outputs.push_back(g.matmul(probs, vh));
  }
  Var merged = heads_ == 1 ? outputs[0] : g.concat_cols(outputs);
  result.output = o_.forward(g, merged);
  return result;
}

template <typename T>
void MultiHeadAttention<T>::collect(ParameterList<T>& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  o_.collect(out);
}

// ---------------------------------------------------------------------------

template <typename T>
FeedForward<T>::FeedForward(const std::string& name, std::size_t d,
                            std::size_t hidden, Rng& rng)
    : in_(name + ".fc1", d, hidden, rng), out_(name + ".fc2", hidden, d, rng) {}

template <typename T>
Var FeedForward<T>::forward(Graph<T>& g, Var x) const {
  return out_.forward(g, g.gelu(in_.forward(g, x)));
}

template <typename T>
void FeedForward<T>::collect(ParameterList<T>& out) {
  in_.collect(out);
  out_.collect(out);
}

// ---------------------------------------------------------------------------

std::size_t ConvSpec::layer_length(std::size_t frames) const {
  const std::size_t pad = padding();
  if (frames + 2 * pad < kernel) return 0;
  return (frames + 2 * pad - kernel) / stride + 1;
}

std::size_t ConvSpec::output_length(std::size_t frames) const {
  return layer_length(layer_length(frames));
}

template <typename T>
ConvInputProcessor<T>::ConvInputProcessor(const std::string& name,
                                          const ConvSpec& spec, Rng& rng)
    : spec_(spec),
      conv1_(name + ".conv1", spec.kernel * spec.in_channels,
             2 * spec.inner_channels, rng),
      conv2_(name + ".conv2", spec.kernel * spec.inner_channels,
             2 * spec.out_channels, rng) {
  if (spec.kernel == 0 || spec.kernel % 2 == 0) {
    throw ContractError("conv kernel width must be odd");
  }
  if (spec.stride == 0) throw ContractError("conv stride must be positive");
}

template <typename T>
Var ConvInputProcessor<T>::forward(Graph<T>& g, Var features) const {
  const std::size_t m = g.value(features).rows();
  if (m < spec_.kernel) {
    throw SequenceTooShortError("input of " + std::to_string(m) +
                                " frames is shorter than the kernel width " +
                                std::to_string(spec_.kernel));
  }
  Var x = g.unfold(features, spec_.kernel, spec_.stride, spec_.padding());
  x = glu(g, conv1_.forward(g, x));
  x = g.unfold(x, spec_.kernel, spec_.stride, spec_.padding());
  return glu(g, conv2_.forward(g, x));
}

template <typename T>
void ConvInputProcessor<T>::collect(ParameterList<T>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
}

// ---------------------------------------------------------------------------

template <typename T>
InputProcessor<T>::InputProcessor(const InputProcessorConfig& config, Rng& rng)
    : config_(config) {
  config_.conv.in_channels = config.feature_dim;
  config_.conv.out_channels = config.d;
  if (config.use_processor) {
    conv_.emplace("input.conv", config_.conv, rng);
  } else {
    projection_.emplace("input.proj", config.feature_dim, config.d, rng);
  }
}

template <typename T>
Var InputProcessor<T>::forward(Graph<T>& g, Var features) const {
  const std::size_t c = g.value(features).cols();
  if (c != config_.feature_dim) {
    throw DimensionError("input has " + std::to_string(c) +
                         " feature bins, expected " +
                         std::to_string(config_.feature_dim));
  }
  Var x = conv_ ? conv_->forward(g, features)
                : projection_->forward(g, features);
  const std::size_t len = g.value(x).rows();
  return g.add(x, g.constant(sinusoidal_positions<T>(len, config_.d)));
}

template <typename T>
std::size_t InputProcessor<T>::output_length(std::size_t frames) const {
  return conv_ ? config_.conv.output_length(frames) : frames;
}

template <typename T>
std::vector<std::uint8_t> InputProcessor<T>::output_mask(
    std::span<const std::uint8_t> frame_mask) const {
  std::vector<std::uint8_t> mask(frame_mask.begin(), frame_mask.end());
  if (!conv_ || config_.conv.stride == 1 || mask.empty()) return mask;
  for (int layer = 0; layer < 2; ++layer) {
    const std::size_t len = config_.conv.layer_length(mask.size());
    std::vector<std::uint8_t> next(len);
    for (std::size_t o = 0; o < len; ++o) {
      next[o] = mask[std::min(o * config_.conv.stride, mask.size() - 1)];
    }
    mask = std::move(next);
  }
  return mask;
}

template <typename T>
void InputProcessor<T>::collect(ParameterList<T>& out) {
  if (conv_) conv_->collect(out);
  if (projection_) projection_->collect(out);
}

// ---------------------------------------------------------------------------

template <typename T>
SelfAttentionLayer<T>::SelfAttentionLayer(const std::string& name,
                                          std::size_t d, std::size_t heads,
                                          std::size_t hidden, double dropout,
                                          Rng& rng)
    : dropout_(dropout),
      attn_norm_(name + ".attn_norm", d),
      attn_(name + ".attn", d, heads, rng),
      ffn_norm_(name + ".ffn_norm", d),
      ffn_(name + ".ffn", d, hidden, rng) {}

template <typename T>
Var SelfAttentionLayer<T>::forward(Graph<T>& g, Var x,
                                   std::span<const std::uint8_t> key_mask,
                                   const RunContext& ctx) const {
  Var h = attn_norm_.forward(g, x);
  h = attn_.forward(g, h, h, key_mask).output;
  x = g.add(x, dropout(g, h, dropout_, ctx));
  h = ffn_.forward(g, ffn_norm_.forward(g, x));
  return g.add(x, dropout(g, h, dropout_, ctx));
}

template <typename T>
void SelfAttentionLayer<T>::collect(ParameterList<T>& out) {
  attn_norm_.collect(out);
  attn_.collect(out);
  ffn_norm_.collect(out);
  ffn_.collect(out);
}

#define S2TP_INSTANTIATE(T)                                                  \
  template Tensor<T> uniform_tensor<T>(Shape, T, Rng&);                      \
  template Tensor<T> truncated_normal<T>(Shape, T, T, Rng&);                 \
  template Tensor<T> sinusoidal_positions<T>(std::size_t, std::size_t);      \
  template Var dropout<T>(Graph<T>&, Var, double, const RunContext&);        \
  template Var glu<T>(Graph<T>&, Var);                                       \
  template class Linear<T>;                                                  \
  template class LayerNorm<T>;                                               \
  template class MultiHeadAttention<T>;                                      \
  template class FeedForward<T>;                                             \
  template class ConvInputProcessor<T>;                                      \
  template class InputProcessor<T>;                                          \
  template class SelfAttentionLayer<T>;

S2TP_INSTANTIATE(float)
S2TP_INSTANTIATE(double)

#undef S2TP_INSTANTIATE

}  // namespace s2tp
