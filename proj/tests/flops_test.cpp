// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include <gtest/gtest.h>

#include "s2tp/flops.hpp"
#include "s2tp/instrument.hpp"
#include "s2tp/model.hpp"
#include "test_util.hpp"

namespace s2tp::flops {
namespace {

using s2tp::testing::random_matrix;

ModelSpec toy_perceiver(std::size_t k_prime = 16) {
  ModelSpec s;
  s.n_latents = 64;
  s.k_prime = k_prime;
  return s;
}

TEST(Flops, LinearHandCount) {
  EXPECT_EQ(linear_flops(2, 3, 4), 48u);
}

TEST(Flops, AttentionAndFfnBlocks) {
  // 4qd^2 (Q, O) + 4vd^2 (K, V) + 2qvd (scores) + 2qvd (weighted sum)
  EXPECT_EQ(attention_flops(3, 5, 2), 4u * 3 * 4 + 4u * 5 * 4 + 4u * 3 * 5 * 2);
  EXPECT_EQ(ffn_flops(3, 4, 10), 4u * 3 * 4 * 10);
}

TEST(Flops, ComponentsSumToTotal) {
  for (const ModelSpec& s : {toy_perceiver(), large_perceiver(256), large_transformer()}) {
    const CostReport r = cost(s, 1234, 41);
    std::uint64_t sum = 0;
    for (std::uint64_t f : r.flops) sum += f;
    EXPECT_EQ(sum, r.total());
    EXPECT_EQ(r[Component::kUnattributed], 0u);
    for (std::size_t i = 0; i + 1 < kComponentCount; ++i) {
      // the transformer baseline has no cross-attention block
      if (s.family == Family::kTransformer && i == static_cast<std::size_t>(Component::kEncoderCross)) {
        EXPECT_EQ(r.flops[i], 0u);
      } else {
        EXPECT_GT(r.flops[i], 0u);
      }
    }
  }
}

TEST(Flops, DoublingKPrimeQuadruplesSelfAttentionScores) {
  const ModelSpec s = toy_perceiver();
  auto scores = [&](std::uint64_t k) {
    // score + weighted-sum part of one self-attention layer, times mu
    return s.self_layers * 4 * k * k * s.d;
  };
  auto self = [&](std::uint64_t k) {
    return perceiver_encoder_flops(s, s.n_latents, k, 100)[Component::kEncoderSelf];
  };
  for (std::uint64_t k : {1u, 4u, 16u}) {
    const std::uint64_t linear_part = self(k) - scores(k);
    EXPECT_EQ(self(2 * k) - 2 * linear_part, scores(2 * k));
    EXPECT_EQ(scores(2 * k), 4 * scores(k));
  }
}

TEST(Flops, EncoderCostIsExactQuadraticInKPrime) {
  const ModelSpec base = toy_perceiver();
  auto encoder = [&](std::uint64_t k) {
    ModelSpec s = base;
    s.k_prime = k;
    const CostReport r = cost(s, 640, 20);
    return static_cast<long long>(r[Component::kEncoderCross] + r[Component::kEncoderSelf]);
  };
  for (std::uint64_t k = 1; k + 3 <= 64; ++k) {
    const long long d2 = encoder(k + 2) - 2 * encoder(k + 1) + encoder(k);
    const long long d3 = encoder(k + 3) - 3 * encoder(k + 2) + 3 * encoder(k + 1) - encoder(k);
    EXPECT_EQ(d2, static_cast<long long>(2 * base.self_layers * 4 * base.d));
    EXPECT_EQ(d3, 0);
  }
}

TEST(Flops, FullKPrimeIsNoSelection) {
  ModelConfig mc;
  const CostReport all = cost(mc.spec(0), 800, 30);
  const CostReport n = cost(mc.spec(mc.n_latents), 800, 30);
  EXPECT_EQ(all.flops, n.flops);
}

TEST(Flops, MonotoneInEveryArgument) {
  const ModelSpec s = toy_perceiver();
  const std::uint64_t base = cost(s, 500, 20).total();
  EXPECT_LT(base, cost(s, 501, 20).total());
  EXPECT_LT(base, cost(s, 500, 21).total());
  ModelSpec t = s;
  t.k_prime += 1;
  EXPECT_LT(base, cost(t, 500, 20).total());
  t = s;
  t.d = 128;
  EXPECT_LT(base, cost(t, 500, 20).total());
  t = s;
  t.self_layers += 1;
  EXPECT_LT(base, cost(t, 500, 20).total());
  t = s;
  t.decoder_layers += 1;
  EXPECT_LT(base, cost(t, 500, 20).total());
  const ModelSpec tr = large_transformer();
  ModelSpec tr2 = tr;
  tr2.encoder_layers += 1;
  EXPECT_LT(cost(tr, 900, 30).total(), cost(tr2, 900, 30).total());
  for (std::uint64_t m = 200; m < 260; ++m) {
    EXPECT_LE(cost(tr, m, 10).total(), cost(tr, m + 1, 10).total());
  }
}

TEST(Flops, RatioIdentities) {
  const auto corpus = default_lengths(50, 3);
  for (const ModelSpec& s : {toy_perceiver(), large_perceiver(64), large_transformer()}) {
    EXPECT_EQ(corpus_ratio(s, s, corpus), 1.0);
  }
  std::vector<LengthPair> doubled = corpus;
  doubled.insert(doubled.end(), corpus.begin(), corpus.end());
  EXPECT_EQ(corpus_ratio(large_perceiver(128), large_transformer(), corpus),
            corpus_ratio(large_perceiver(128), large_transformer(), doubled));
  EXPECT_THROW(corpus_ratio(toy_perceiver(), toy_perceiver(), {}), ContractError);
}

TEST(Flops, LargeScaleRatioDecreasesWithKPrime) {
  const auto corpus = default_lengths(1000, 1);
  double previous = 1e300;
  double smallest = 0.0;
  for (std::size_t k : {2048u, 1024u, 512u, 256u, 128u, 64u, 32u, 16u, 8u, 4u, 2u, 1u}) {
    const double r = corpus_ratio(large_perceiver(k), large_transformer(), corpus);
    EXPECT_LT(r, previous) << k;
    previous = r;
    smallest = r;
  }
  EXPECT_GT(corpus_ratio(large_perceiver(2048), large_transformer(), corpus), 1.0);
  EXPECT_LT(smallest, 1.0);
}

TEST(Flops, KPrimeAboveNRejected) {
  ModelSpec s = toy_perceiver();
  s.k_prime = 65;
  EXPECT_THROW(cost(s, 100, 10), KPrimeError);
}

TEST(Lengths, ParseWithComments) {
  std::istringstream in("# header\n300 10\n\n  450\t15  # trailing\n#600 20\n");
  const auto pairs = parse_lengths(in);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].frames, 300u);
  EXPECT_EQ(pairs[1].tokens, 15u);
}

TEST(Lengths, MalformedLinesRejected) {
  for (const char* bad : {"300\n", "300 10 5\n", "300 x\n", "-3 4\n", "300 0\n"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_lengths(in), ContractError) << bad;
  }
  EXPECT_THROW(read_lengths("/nonexistent/lengths.txt"), IoError);
}

TEST(Lengths, DefaultDistribution) {
  const auto a = default_lengths(500, 7);
  const auto b = default_lengths(500, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frames, b[i].frames);
    EXPECT_GE(a[i].frames, 200u);
    EXPECT_LE(a[i].frames, 3000u);
    EXPECT_EQ(a[i].tokens, static_cast<std::uint64_t>(std::llround(a[i].frames / 30.0)));
  }
}

TEST(Report, TabSeparatedTable) {
  std::ostringstream out;
  write_report(out, cost(toy_perceiver(), 400, 12), cost(toy_perceiver(), 400, 12));
  const std::string text = out.str();
  EXPECT_EQ(text.rfind("component\tspec_flops\tbaseline_flops\n", 0), 0u);
  EXPECT_NE(text.find("\nratio\t1\n"), std::string::npos);
  EXPECT_EQ(text.find("unattributed"), std::string::npos);
}

// Runs one inference pass under the multiply-add counter: encoder with k'
// selected latents, then a teacher-forced decoder pass over t positions.
MacCounts instrumented(const Model<float>& model, std::size_t m, std::size_t t,
                       DlaMode mode, std::size_t k_prime) {
  std::mt19937_64 data(5);
  const Tensor<float> features = random_matrix<float>(m, model.config().feature_dim, data);
  std::vector<int> input(t, vocab::kFirstSymbol);
  input[0] = vocab::kBos;
  Rng rng(1);
  MacCountingScope counting;
  const InferenceMemory<float> memory = model.encode_inference(features, {}, mode, k_prime, &rng);
  model.logits(memory, input);
  return counting.counts();
}

ModelConfig tiny_model(Family family, std::size_t stride) {
  ModelConfig c;
  c.family = family;
  c.d = 8;
  c.heads = 2;
  c.ffn_hidden = 12;
  c.self_layers = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.n_latents = 10;
  c.feature_dim = 3;
  c.conv_kernel = 3;
  c.conv_channels = 5;
  c.conv_stride = stride;
  c.vocab_symbols = 4;
  c.dropout = 0.0;
  return c;
}

void expect_counts_match(const MacCounts& counts, const CostReport& analytic) {
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    const auto c = static_cast<Component>(i);
    EXPECT_EQ(2 * counts[c], analytic[c]) << component_name(c);
  }
}

TEST(Instrumented, PerceiverMatchesAnalyticPerComponent) {
  const ModelConfig c = tiny_model(Family::kPerceiver, 1);
  const Model<float> model(c, 3);
  for (std::size_t k : {1u, 4u, 10u}) {
    for (DlaMode mode : {DlaMode::kDiverse, DlaMode::kRandom}) {
      expect_counts_match(instrumented(model, 13, 6, mode, k), cost(c.spec(k), 13, 6));
    }
  }
  expect_counts_match(instrumented(model, 9, 4, DlaMode::kFull, 0), cost(c.spec(0), 9, 4));
}

TEST(Instrumented, TransformerMatchesAnalyticPerComponent) {
  for (std::size_t stride : {1u, 2u}) {
    const ModelConfig c = tiny_model(Family::kTransformer, stride);
    const Model<float> model(c, 3);
    for (std::size_t m : {11u, 16u}) {
      expect_counts_match(instrumented(model, m, 5, DlaMode::kFull, 0), cost(c.spec(0), m, 5));
    }
  }
}

TEST(Instrumented, WithoutInputProcessor) {
  ModelConfig c = tiny_model(Family::kPerceiver, 1);
  c.use_input_processor = false;
  const Model<float> model(c, 3);
  expect_counts_match(instrumented(model, 7, 3, DlaMode::kDiverse, 5), cost(c.spec(5), 7, 3));
}

}  // namespace
}  // namespace s2tp::flops
