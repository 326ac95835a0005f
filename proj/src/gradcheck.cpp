// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/gradcheck.hpp"

#include <chrono>
#include <functional>
#include <numeric>

#include "s2tp/decoder.hpp"
#include "s2tp/dla.hpp"
#include "s2tp/nn.hpp"
#include "s2tp/perceiver.hpp"

namespace s2tp {
namespace {

using Clock = std::chrono::steady_clock;

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (double& x : t.storage()) x = dist(rng);
  return t;
}

// Scalar readout sum(y * R) with a fixed random R, so every output coordinate
// contributes a distinct weight to the gradient.
Var readout(Graph<double>& g, Var y, const Tensor<double>& r) {
  return g.sum(g.mul(y, g.constant(r)));
}

class Suite {
 public:
  Suite(double step, Rng& rng) : step_(step), rng_(rng) {}

  // `build` maps the graph to the layer output; a readout tensor matching
  // that output is drawn on first use.
  void add(const std::string& name, ParameterList<double> params,
           const std::function<Var(Graph<double>&)>& build) {
    Tensor<double> r;
    {
      Graph<double> g(false);
      r = random_tensor(g.value(build(g)).shape(), rng_);
    }
    add_scalar(name, std::move(params),
               [&build, r](Graph<double>& g) { return readout(g, build(g), r); });
  }

  void add_scalar(const std::string& name, ParameterList<double> params,
                  const ScalarFunction& loss) {
    const auto start = Clock::now();
    GradCheckCase c;
    c.name = name;
    c.report = finite_diff_check(loss, params, step_);
    c.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    cases_.push_back(std::move(c));
  }

  std::vector<GradCheckCase> take() { return std::move(cases_); }

 private:
  double step_;
  Rng& rng_;
  std::vector<GradCheckCase> cases_;
};

std::vector<std::uint8_t> partial_mask(std::size_t n) {
  std::vector<std::uint8_t> mask(n, 1);
  for (std::size_t i = n - n / 4; i < n; ++i) mask[i] = 0;
  return mask;
}

std::vector<int> random_targets(std::size_t tokens, std::size_t symbols,
                                Rng& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(symbols) - 1);
  std::vector<int> t{vocab::kBos};
  for (std::size_t i = 0; i < tokens; ++i) t.push_back(vocab::kFirstSymbol + pick(rng));
  t.push_back(vocab::kEos);
  return t;
}

}  // namespace

std::vector<GradCheckCase> run_gradchecks(const GradCheckOptions& o,
                                          std::uint64_t seed) {
  Rng rng(seed);
  Suite suite(o.step, rng);
  const RunContext eval{};
  const std::size_t d = o.d;
  const std::size_t m = o.frames;

  Parameter<double> x("input", random_tensor({m, d}, rng));
  Parameter<double> mem("memory", random_tensor({o.latents, d}, rng));
  const std::vector<std::uint8_t> frame_mask = partial_mask(m);
  const std::vector<std::uint8_t> memory_mask = partial_mask(o.latents);

  {
    Linear<double> lin("linear", d, o.ffn_hidden, rng);
    ParameterList<double> ps{&x};
    lin.collect(ps);
    suite.add("linear", ps, [&](Graph<double>& g) {
      return lin.forward(g, g.param(x));
    });
  }
  {
    LayerNorm<double> ln("layer_norm", d);
    // Move gain and bias away from the identity so their gradients are generic.
    ln.gain().value = random_tensor({d}, rng);
    ln.bias().value = random_tensor({d}, rng);
    ParameterList<double> ps{&x};
    ln.collect(ps);
    suite.add("layer_norm", ps, [&](Graph<double>& g) {
      return ln.forward(g, g.param(x));
    });
  }
  suite.add("glu", {&x}, [&](Graph<double>& g) { return glu(g, g.param(x)); });
  {
    FeedForward<double> ffn("ffn", d, o.ffn_hidden, rng);
    ParameterList<double> ps{&x};
    ffn.collect(ps);
    suite.add("feed_forward", ps, [&](Graph<double>& g) {
      return ffn.forward(g, g.param(x));
    });
  }
  {
    MultiHeadAttention<double> attn("attention", d, o.heads, rng);
    ParameterList<double> ps{&x, &mem};
    attn.collect(ps);
    suite.add("attention_masked", ps, [&](Graph<double>& g) {
      return attn.forward(g, g.param(x), g.param(mem), memory_mask).output;
    });
    ParameterList<double> ps_self{&x};
    attn.collect(ps_self);
    suite.add("attention_causal", ps_self, [&](Graph<double>& g) {
      Var h = g.param(x);
      return attn.forward(g, h, h, {}, /*causal=*/true).output;
    });
  }
  for (std::size_t stride : {1, 2}) {
    InputProcessorConfig ic;
    ic.feature_dim = o.feature_dim;
    ic.d = d;
    ic.conv.in_channels = o.feature_dim;
    ic.conv.inner_channels = d;
    ic.conv.out_channels = d;
    ic.conv.kernel = 3;
    ic.conv.stride = stride;
    InputProcessor<double> proc(ic, rng);
    Parameter<double> feats("features", random_tensor({m, o.feature_dim}, rng));
    ParameterList<double> ps{&feats};
    proc.collect(ps);
    suite.add("conv_input_stride" + std::to_string(stride), ps,
              [&](Graph<double>& g) { return proc.forward(g, g.param(feats)); });
  }
  {
    SelfAttentionLayer<double> layer("block", d, o.heads, o.ffn_hidden, 0.0, rng);
    ParameterList<double> ps{&x};
    layer.collect(ps);
    suite.add("self_attention_block", ps, [&](Graph<double>& g) {
      return layer.forward(g, g.param(x), frame_mask, eval);
    });
  }
  {
    PerceiverConfig pc;
    pc.d = d;
    pc.n_latents = o.latents;
    pc.self_layers = 1;
    pc.heads = o.heads;
    pc.ffn_hidden = o.ffn_hidden;
    pc.dropout = 0.0;
    PerceiverEncoder<double> enc(pc, rng);
    std::vector<std::size_t> ids(o.latents);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    ids.erase(ids.begin() + 1);
    ids.erase(ids.begin() + 3);
    ParameterList<double> ps{&x};
    enc.collect(ps);
    suite.add("perceiver_encoder", ps, [&, ids](Graph<double>& g) {
      return enc.encode(g, g.param(x), frame_mask, ids, eval).z;
    });
  }
  {
    DecoderConfig dc;
    dc.vocab_size = vocab::size(o.vocab_symbols);
    dc.d = d;
    dc.layers = 1;
    dc.heads = o.heads;
    dc.ffn_hidden = o.ffn_hidden;
    dc.dropout = 0.0;
    DecoderLayer<double> layer("decoder_layer", dc, rng);
    Parameter<double> y("tokens", random_tensor({o.target_tokens + 1, d}, rng));
    ParameterList<double> ps{&y, &mem};
    layer.collect(ps);
    suite.add("decoder_layer", ps, [&](Graph<double>& g) {
      return layer.forward(g, g.param(y), g.param(mem), memory_mask, eval);
    });
  }
  {
    const std::size_t vocab = vocab::size(o.vocab_symbols);
    Parameter<double> logits("logits", random_tensor({o.target_tokens + 1, vocab}, rng));
    std::vector<int> targets = random_targets(o.target_tokens, o.vocab_symbols, rng);
    targets.erase(targets.begin());
    suite.add_scalar("label_smoothed_loss", {&logits}, [&](Graph<double>& g) {
      return g.cross_entropy(g.param(logits), targets, 0.1);
    });
  }
  for (flops::Family family : {flops::Family::kPerceiver, flops::Family::kTransformer}) {
    ModelConfig mc;
    mc.family = family;
    mc.d = d;
    mc.heads = o.heads;
    mc.ffn_hidden = o.ffn_hidden;
    mc.self_layers = 1;
    mc.encoder_layers = 1;
    mc.decoder_layers = 1;
    mc.n_latents = o.latents;
    mc.feature_dim = o.feature_dim;
    mc.conv_kernel = 3;
    mc.conv_channels = d;
    mc.vocab_symbols = o.vocab_symbols;
    mc.dropout = 0.0;
    Model<double> model(mc, seed + 1);
    const Tensor<double> feats = random_tensor({m, o.feature_dim}, rng);
    const std::vector<int> targets =
        random_targets(o.target_tokens, o.vocab_symbols, rng);
    Rng pick(seed + 2);
    const std::vector<std::size_t> ids =
        family == flops::Family::kPerceiver
            ? dla::sample_train_latents(o.latents, o.k, pick)
            : std::vector<std::size_t>{};
    suite.add_scalar(family == flops::Family::kPerceiver ? "model_perceiver"
                                                         : "model_transformer",
                     model.parameters(), [&, feats, targets, ids](Graph<double>& g) {
                       return model.loss(g, feats, targets, ids, 0.1, eval);
                     });
  }
  return suite.take();
}

}  // namespace s2tp
