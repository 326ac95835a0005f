// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "s2tp/errors.hpp"
#include "s2tp/instrument.hpp"

namespace s2tp {

namespace vocab {

std::string render(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) {
    if (t == kPad) {
      out += "<pad>";
    } else if (t == kBos) {
      out += "<s>";
    } else if (t == kEos) {
      out += "</s>";
    } else {
      out += static_cast<char>('a' + (t - kFirstSymbol));
    }
  }
  return out;
}

}  // namespace vocab

void validate_targets(std::span<const int> targets, std::size_t vocab_size) {
  if (targets.size() < 2 || targets.front() != vocab::kBos ||
      targets.back() != vocab::kEos) {
    throw ContractError("targets must start with BOS and end with EOS");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw IndexError("target token " + std::to_string(t) +
                       " outside vocabulary of " + std::to_string(vocab_size));
    }
  }
}

template <typename T>
DecoderLayer<T>::DecoderLayer(const std::string& name,
                              const DecoderConfig& config, Rng& rng)
    : dropout_(config.dropout),
      self_norm_(name + ".self_norm", config.d),
      self_attn_(name + ".self_attn", config.d, config.heads, rng),
      cross_norm_(name + ".cross_norm", config.d),
      cross_attn_(name + ".cross_attn", config.d, config.heads, rng),
      ffn_norm_(name + ".ffn_norm", config.d),
      ffn_(name + ".ffn", config.d, config.ffn_hidden, rng) {}

template <typename T>
Var DecoderLayer<T>::forward(Graph<T>& g, Var x, Var memory,
                             std::span<const std::uint8_t> memory_mask,
                             const RunContext& ctx) const {
  Var h = self_norm_.forward(g, x);
  h = self_attn_.forward(g, h, h, {}, /*causal=*/true).output;
  x = g.add(x, dropout(g, h, dropout_, ctx));
  h = cross_norm_.forward(g, x);
  h = cross_attn_.forward(g, h, memory, memory_mask).output;
  x = g.add(x, dropout(g, h, dropout_, ctx));
  h = ffn_.forward(g, ffn_norm_.forward(g, x));
  return g.add(x, dropout(g, h, dropout_, ctx));
}

template <typename T>
void DecoderLayer<T>::collect(ParameterList<T>& out) {
  self_norm_.collect(out);
  self_attn_.collect(out);
  cross_norm_.collect(out);
  cross_attn_.collect(out);
  ffn_norm_.collect(out);
  ffn_.collect(out);
}

template <typename T>
Decoder<T>::Decoder(const DecoderConfig& config, Rng& rng)
    : config_(config),
      final_norm_("decoder.final_norm", config.d) {
  std::normal_distribution<double> dist(
      0.0, 1.0 / std::sqrt(static_cast<double>(config.d)));
  Tensor<T> emb({config.vocab_size, config.d});
  for (T& x : emb.storage()) x = static_cast<T>(dist(rng));
  // PAD never contributes.
  std::fill_n(emb.data() + vocab::kPad * config.d, config.d, T{0});
  embedding_ = Parameter<T>("decoder.embedding", std::move(emb));
  layers_.reserve(config.layers);
  for (std::size_t i = 0; i < config.layers; ++i) {
    layers_.emplace_back("decoder.layer" + std::to_string(i), config, rng);
  }
  output_ = Linear<T>("decoder.output", config.d, config.vocab_size, rng);
}

template <typename T>
Var Decoder<T>::logits(Graph<T>& g, Var memory,
                       std::span<const std::uint8_t> memory_mask,
                       std::span<const int> tokens,
                       const RunContext& ctx) const {
  if (tokens.empty()) throw ContractError("decoder input is empty");
  Var x;
  {
    ComponentScope scope(Component::kDecoder);
    std::vector<std::size_t> ids(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] < 0 ||
          static_cast<std::size_t>(tokens[i]) >= config_.vocab_size) {
        throw IndexError("decoder token " + std::to_string(tokens[i]) +
                         " outside vocabulary");
      }
      ids[i] = static_cast<std::size_t>(tokens[i]);
    }
    x = g.gather_rows(g.param(embedding_), ids);
    x = g.scale(x, static_cast<T>(std::sqrt(static_cast<double>(config_.d))));
    x = g.add(x, g.constant(sinusoidal_positions<T>(tokens.size(), config_.d)));
    x = dropout(g, x, config_.dropout, ctx);
    for (const auto& layer : layers_) {
      x = layer.forward(g, x, memory, memory_mask, ctx);
    }
    x = final_norm_.forward(g, x);
  }
  ComponentScope scope(Component::kOutputProjection);
  return output_.forward(g, x);
}

template <typename T>
Var Decoder<T>::loss(Graph<T>& g, Var memory,
                     std::span<const std::uint8_t> memory_mask,
                     std::span<const int> targets, double smoothing,
                     const RunContext& ctx) const {
  validate_targets(targets, config_.vocab_size);
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw ContractError("label smoothing must lie in [0, 1)");
  }
  Var z = logits(g, memory, memory_mask, targets.first(targets.size() - 1), ctx);
  return g.cross_entropy(z, targets.subspan(1), static_cast<T>(smoothing));
}

template <typename T>
void Decoder<T>::collect(ParameterList<T>& out) {
  out.push_back(&embedding_);
  for (auto& layer : layers_) layer.collect(out);
  final_norm_.collect(out);
  output_.collect(out);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::vector<double> next_log_probs(const Decoder<T>& decoder,
                                   const Tensor<T>& memory,
                                   std::span<const std::uint8_t> memory_mask,
                                   std::span<const int> prefix) {
  Graph<T> g(false);
  Var mem = g.constant(memory);
  Var z = decoder.logits(g, mem, memory_mask, prefix, RunContext{});
  std::span<const T> last = g.value(z).row(prefix.size() - 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : last) mx = std::max(mx, static_cast<double>(v));
  double total = 0.0;
  for (T v : last) total += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(last.size());
  for (std::size_t i = 0; i < last.size(); ++i) {
    out[i] = static_cast<double>(last[i]) - lse;
  }
  return out;
}

bool generatable(int token) {
  return token != vocab::kPad && token != vocab::kBos;
}

}  // namespace

template <typename T>
Hypothesis greedy_decode(const Decoder<T>& decoder, const Tensor<T>& memory,
                         std::span<const std::uint8_t> memory_mask,
                         std::size_t max_len) {
  std::vector<int> prefix{vocab::kBos};
  Hypothesis hyp;
  hyp.truncated = true;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<double> lp = next_log_probs(decoder, memory, memory_mask, prefix);
    int best = -1;
    for (int v = 0; v < static_cast<int>(lp.size()); ++v) {
      if (generatable(v) && (best < 0 || lp[v] > lp[best])) best = v;
    }
    hyp.score += lp[best];
    hyp.tokens.push_back(best);
    prefix.push_back(best);
    if (best == vocab::kEos) {
      hyp.truncated = false;
      break;
    }
  }
  return hyp;
}

template <typename T>
Hypothesis generate(const Decoder<T>& decoder, const Tensor<T>& memory,
                    std::span<const std::uint8_t> memory_mask,
                    const GenerationConfig& config) {
  if (config.beam == 0) throw ContractError("beam width must be at least 1");
  struct Candidate {
    double score;
    std::size_t parent;
    int token;
  };
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < config.max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < live.size(); ++h) {
      std::vector<int> prefix{vocab::kBos};
      prefix.insert(prefix.end(), live[h].tokens.begin(), live[h].tokens.end());
      std::vector<double> lp =
          next_log_probs(decoder, memory, memory_mask, prefix);
      for (int v = 0; v < static_cast<int>(lp.size()); ++v) {
        if (generatable(v)) candidates.push_back({live[h].score + lp[v], h, v});
      }
    }
    const std::size_t keep = std::min(config.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep,
                      candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis hyp = live[candidates[c].parent];
      hyp.tokens.push_back(candidates[c].token);
      hyp.score = candidates[c].score;
      if (candidates[c].token == vocab::kEos) {
        finished.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
    if (!finished.empty()) {
      const double best_done =
          std::max_element(finished.begin(), finished.end(),
                           [](const Hypothesis& a, const Hypothesis& b) {
                             return a.score < b.score;
                           })->score;
      // Log-probabilities are nonpositive, so no live hypothesis can improve.
      const bool settled = std::all_of(
          live.begin(), live.end(),
          [best_done](const Hypothesis& h) { return h.score <= best_done; });
      if (settled) break;
    }
  }
  if (!finished.empty()) {
    // First maximum wins, i.e. the earliest finished among equal scores.
    auto best = finished.begin();
    for (auto it = finished.begin(); it != finished.end(); ++it) {
      if (it->score > best->score) best = it;
    }
    return *best;
  }
  Hypothesis best = live.front();
  best.truncated = true;
  return best;
}

template class DecoderLayer<float>;
template class DecoderLayer<double>;
template class Decoder<float>;
template class Decoder<double>;
template Hypothesis generate<float>(const Decoder<float>&, const Tensor<float>&,
                                    std::span<const std::uint8_t>,
                                    const GenerationConfig&);
template Hypothesis generate<double>(const Decoder<double>&,
                                     const Tensor<double>&,
                                     std::span<const std::uint8_t>,
                                     const GenerationConfig&);
template Hypothesis greedy_decode<float>(const Decoder<float>&,
                                         const Tensor<float>&,
                                         std::span<const std::uint8_t>,
                                         std::size_t);
template Hypothesis greedy_decode<double>(const Decoder<double>&,
                                          const Tensor<double>&,
                                          std::span<const std::uint8_t>,
                                          std::size_t);

}  // namespace s2tp
