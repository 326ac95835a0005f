// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/flops.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "s2tp/errors.hpp"

namespace s2tp::flops {

namespace {

std::uint64_t& slot(CostReport& r, Component c) {
  return r.flops[static_cast<std::size_t>(c)];
}

ConvSpec conv_spec(const ModelSpec& spec) {
  ConvSpec conv;
  conv.in_channels = spec.feature_dim;
  conv.inner_channels = spec.conv_channels;
  conv.out_channels = spec.d;
  conv.kernel = spec.conv_kernel;
  conv.stride = spec.conv_stride;
  return conv;
}

}  // namespace

void ModelSpec::validate() const {
  if (d == 0 || heads == 0 || ffn_hidden == 0 || decoder_layers == 0 ||
      feature_dim == 0 || vocab_size == 0) {
    throw ContractError("model spec sizes must be positive");
  }
  if (d % heads != 0) throw ContractError("d must be divisible by heads");
  if (use_input_processor &&
      (conv_kernel == 0 || conv_channels == 0 || conv_stride == 0)) {
    throw ContractError("conv spec sizes must be positive");
  }
  if (family == Family::kPerceiver) {
    if (n_latents == 0 || k_prime == 0) {
      throw ContractError("latent counts must be positive");
    }
    if (k_prime > n_latents) {
      throw KPrimeError("k' = " + std::to_string(k_prime) + " exceeds n = " +
                        std::to_string(n_latents));
    }
  } else if (encoder_layers == 0) {
    throw ContractError("transformer needs at least one encoder layer");
  }
}

std::size_t ModelSpec::encoder_length(std::size_t frames) const {
  return use_input_processor ? conv_spec(*this).output_length(frames) : frames;
}

ModelSpec large_perceiver(std::size_t k_prime) {
  ModelSpec s;
  s.family = Family::kPerceiver;
  s.d = 256;
  s.heads = 4;
  s.ffn_hidden = 2048;
  s.self_layers = 12;
  s.decoder_layers = 6;
  s.feature_dim = 80;
  s.conv_kernel = 5;
  s.conv_channels = 1024;
  s.conv_stride = 1;
  s.n_latents = 2048;
  s.k_prime = k_prime;
  s.vocab_size = 8000;
  return s;
}

ModelSpec large_transformer() {
  ModelSpec s = large_perceiver();
  s.family = Family::kTransformer;
  s.encoder_layers = 13;
  s.conv_stride = 2;
  return s;
}

std::uint64_t CostReport::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t f : flops) t += f;
  return t;
}

CostReport& CostReport::operator+=(const CostReport& other) {
  for (std::size_t i = 0; i < flops.size(); ++i) flops[i] += other.flops[i];
  return *this;
}

std::uint64_t linear_flops(std::uint64_t rows, std::uint64_t in,
                           std::uint64_t out) {
  return 2 * rows * in * out;
}

std::uint64_t attention_flops(std::uint64_t q, std::uint64_t v,
                              std::uint64_t d) {
  return 4 * q * d * d + 4 * v * d * d + 2 * q * v * d + 2 * q * v * d;
}

std::uint64_t ffn_flops(std::uint64_t rows, std::uint64_t d,
                        std::uint64_t hidden) {
  return 4 * rows * d * hidden;
}

std::uint64_t input_processor_flops(const ModelSpec& spec,
                                    std::uint64_t frames) {
  if (!spec.use_input_processor) {
    return linear_flops(frames, spec.feature_dim, spec.d);
  }
  const ConvSpec conv = conv_spec(spec);
  const std::uint64_t m1 = conv.layer_length(frames);
  const std::uint64_t m2 = conv.layer_length(m1);
  return 2 * m1 * conv.kernel * conv.in_channels * (2 * conv.inner_channels) +
         2 * m2 * conv.kernel * conv.inner_channels * (2 * conv.out_channels);
}

CostReport perceiver_encoder_flops(const ModelSpec& spec,
                                   std::uint64_t cross_latents,
                                   std::uint64_t self_latents,
                                   std::uint64_t encoder_frames) {
  CostReport r;
  slot(r, Component::kEncoderCross) =
      attention_flops(cross_latents, encoder_frames, spec.d) +
      ffn_flops(cross_latents, spec.d, spec.ffn_hidden);
  slot(r, Component::kEncoderSelf) =
      spec.self_layers * (attention_flops(self_latents, self_latents, spec.d) +
                          ffn_flops(self_latents, spec.d, spec.ffn_hidden));
  return r;
}

CostReport cost(const ModelSpec& spec, std::uint64_t m, std::uint64_t t) {
  spec.validate();
  if (m == 0 || t == 0) throw ContractError("cost: m and t must be positive");
  CostReport r;
  slot(r, Component::kInputProcessor) = input_processor_flops(spec, m);
  const std::uint64_t frames = spec.encoder_length(m);
  std::uint64_t memory = 0;
  if (spec.family == Family::kPerceiver) {
    r += perceiver_encoder_flops(spec, spec.n_latents, spec.k_prime, frames);
    memory = spec.k_prime;
  } else {
    slot(r, Component::kEncoderSelf) =
        spec.encoder_layers * (attention_flops(frames, frames, spec.d) +
                               ffn_flops(frames, spec.d, spec.ffn_hidden));
    memory = frames;
  }
  slot(r, Component::kDecoder) =
      spec.decoder_layers * (attention_flops(t, t, spec.d) +
                             attention_flops(t, memory, spec.d) +
                             ffn_flops(t, spec.d, spec.ffn_hidden));
  slot(r, Component::kOutputProjection) = linear_flops(t, spec.d, spec.vocab_size);
  return r;
}

CostReport corpus_cost(const ModelSpec& spec,
                       std::span<const LengthPair> corpus) {
  CostReport total;
  for (const LengthPair& p : corpus) total += cost(spec, p.frames, p.tokens);
  return total;
}

double corpus_ratio(const ModelSpec& spec, const ModelSpec& baseline,
                    std::span<const LengthPair> corpus) {
  if (corpus.empty()) throw ContractError("corpus_ratio: empty corpus");
  const long double num = corpus_cost(spec, corpus).total();
  const long double den = corpus_cost(baseline, corpus).total();
  return static_cast<double>(num / den);
}

std::vector<LengthPair> parse_lengths(std::istream& in) {
  std::vector<LengthPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    long long m = 0;
    long long t = 0;
    if (!(fields >> m)) continue;
    std::string rest;
    if (!(fields >> t) || (fields >> rest) || m <= 0 || t <= 0) {
      throw ContractError("lengths line " + std::to_string(lineno) +
                          ": expected two positive integers `m t`");
    }
    out.push_back({static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(t)});
  }
  return out;
}

std::vector<LengthPair> read_lengths(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lengths file " + path);
  return parse_lengths(in);
}

std::vector<LengthPair> default_lengths(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::uint64_t> frames(200, 3000);
  std::vector<LengthPair> out(count);
  for (LengthPair& p : out) {
    p.frames = frames(rng);
    p.tokens = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(p.frames) / 30.0));
  }
  return out;
}

void write_report(std::ostream& out, const CostReport& spec_cost,
                  const CostReport& baseline_cost) {
  out << "component\tspec_flops\tbaseline_flops\n";
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    const auto c = static_cast<Component>(i);
    if (c == Component::kUnattributed) continue;
    out << component_name(c) << '\t' << spec_cost[c] << '\t'
        << baseline_cost[c] << '\n';
  }
  out << "total\t" << spec_cost.total() << '\t' << baseline_cost.total()
      << '\n';
  const long double ratio = static_cast<long double>(spec_cost.total()) /
                            static_cast<long double>(baseline_cost.total());
  out << "ratio\t" << std::setprecision(6) << static_cast<double>(ratio)
      << '\n';
}

}  // namespace s2tp::flops
