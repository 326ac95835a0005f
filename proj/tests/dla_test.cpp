// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "dla_oracle.hpp"
#include "s2tp/dla.hpp"
#include "test_util.hpp"

namespace s2tp {
namespace {

using testing::DlaInstance;
using testing::oracle_select;
using testing::random_instance;

Tensor<double> attention_of(const DlaInstance& x) {
  return Tensor<double>({x.n, x.m}, x.a);
}

Tensor<double> index_rows(std::size_t n, std::size_t d) {
  Tensor<double> z({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z(i, j) = 100.0 * i + j;
  }
  return z;
}

const auto kHandA = Tensor<double>::from_rows({{1, 0}, {0.6, 0.8}, {0, 1}});

TEST(TrainLatents, FullSetIsIdentity) {
  Rng rng(1);
  const auto ids = dla::sample_train_latents(7, 7, rng);
  EXPECT_EQ(ids, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(TrainLatents, KAboveNThrows) {
  Rng rng(1);
  EXPECT_THROW(dla::sample_train_latents(4, 5, rng), ContractError);
  EXPECT_THROW(dla::sample_train_latents(4, 0, rng), ContractError);
}

TEST(TrainLatents, SingleOfTwoIsFair) {
  Rng rng(2);
  const int draws = 10000;
  int zeros = 0;
  for (int i = 0; i < draws; ++i) zeros += dla::sample_train_latents(2, 1, rng)[0] == 0;
  // 3 sigma of Binomial(1e4, 0.5) is 150
  EXPECT_NEAR(zeros, draws / 2, 150);
}

TEST(TrainLatents, ThreeOfFourSubsetsUniform) {
  Rng rng(3);
  const int draws = 10000;
  std::map<std::vector<std::size_t>, int> counts;
  for (int i = 0; i < draws; ++i) {
    const auto ids = dla::sample_train_latents(4, 3, rng);
    ASSERT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    ASSERT_EQ(std::set<std::size_t>(ids.begin(), ids.end()).size(), 3u);
    ++counts[ids];
  }
  ASSERT_EQ(counts.size(), 4u);
  const double sigma = std::sqrt(0.25 * 0.75 / draws);
  for (const auto& [ids, c] : counts) EXPECT_NEAR(c / double(draws), 0.25, 3 * sigma);
}

TEST(Similarity, OrthogonalRowsAreZero) {
  const dla::SimilarityMatrix s =
      dla::similarity(Tensor<double>::from_rows({{2, 0, 0}, {0, 0.5, 0}, {0, 0, 1}}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s(i, j), 0.0);
  }
}

TEST(Similarity, DuplicatedRowIsOne) {
  const dla::SimilarityMatrix s =
      dla::similarity(Tensor<double>::from_rows({{0.2, 0.3, 0.5}, {0.7, 0.2, 0.1}, {0.2, 0.3, 0.5}}));
  EXPECT_NEAR(s(0, 2), 1.0, 1e-15);
}

TEST(Similarity, HandRows) {
  const dla::SimilarityMatrix s = dla::similarity(kHandA);
  EXPECT_NEAR(s(0, 1), 0.6, 1e-15);
  EXPECT_NEAR(s(0, 2), 0.0, 1e-15);
  EXPECT_NEAR(s(1, 2), 0.8, 1e-15);
}

TEST(Similarity, SymmetricAndBounded) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const DlaInstance x = random_instance(rng);
    const dla::SimilarityMatrix s = dla::similarity(attention_of(x), x.mask);
    for (std::size_t i = 0; i < x.n; ++i) {
      for (std::size_t j = 0; j < x.n; ++j) {
        EXPECT_NEAR(s(i, j), s(j, i), 1e-6);
        EXPECT_GE(s(i, j), 0.0);
        EXPECT_LE(s(i, j), 1.0 + 1e-12);
      }
    }
  }
}

TEST(Similarity, ZeroRowThrows) {
  EXPECT_THROW(dla::similarity(Tensor<double>::from_rows({{1, 0}, {0, 0}})),
               DegenerateAttentionError);
  // a row that is nonzero only on padding is also degenerate
  const std::vector<std::uint8_t> mask{1, 0};
  EXPECT_THROW(dla::similarity(Tensor<double>::from_rows({{1, 0}, {0, 3}}), mask),
               DegenerateAttentionError);
}

TEST(Similarity, MaskedColumnsAreNeverRead) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    DlaInstance x = random_instance(rng);
    const dla::SimilarityMatrix before = dla::similarity(attention_of(x), x.mask);
    std::uniform_real_distribution<double> junk(-1e3, 1e3);
    for (std::size_t i = 0; i < x.n; ++i) {
      for (std::size_t c = 0; c < x.m; ++c) {
        if (!x.mask[c]) x.a[i * x.m + c] = junk(rng);
      }
    }
    const dla::SimilarityMatrix after = dla::similarity(attention_of(x), x.mask);
    EXPECT_EQ(before.values, after.values);
  }
}

TEST(SelectDiverse, HandTrace) {
  const auto r = dla::select_diverse(index_rows(3, 2), kHandA, 2);
  EXPECT_EQ(r.ids, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(r.latents, Tensor<double>::from_rows({{0, 1}, {200, 201}}));
}

TEST(SelectDiverse, TotalTieTakesLowestIndices) {
  const auto a = Tensor<double>::from_rows({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
  EXPECT_EQ(dla::select_diverse(index_rows(4, 3), a, 2).ids,
            (std::vector<std::size_t>{0, 1}));
}

TEST(SelectDiverse, FullSelectionIsPermutation) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 30; ++t) {
    const DlaInstance x = random_instance(rng);
    const Tensor<double> z = index_rows(x.n, 4);
    const auto r = dla::select_diverse(z, attention_of(x), x.n, x.mask);
    std::vector<std::size_t> sorted = r.ids;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected(x.n);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(sorted, expected);
    for (std::size_t j = 0; j < x.n; ++j) {
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(r.latents(j, c), z(r.ids[j], c));
    }
  }
}

TEST(SelectDiverse, KPrimeOutOfRangeThrows) {
  EXPECT_THROW(dla::select_diverse(index_rows(3, 2), kHandA, 4), KPrimeError);
  EXPECT_THROW(dla::select_diverse(index_rows(3, 2), kHandA, 0), KPrimeError);
  Rng rng(1);
  EXPECT_THROW(dla::select_random(index_rows(3, 2), 4, rng), KPrimeError);
}

TEST(SelectDiverse, MatchesBruteForceOracle) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 1000; ++t) {
    const DlaInstance x = random_instance(rng);
    const dla::SimilarityMatrix s = dla::similarity(attention_of(x), x.mask);
    for (std::size_t k = 1; k <= x.n; ++k) {
      ASSERT_EQ(dla::select_diverse_ids(s, k), oracle_select(x, k))
          << "instance " << t << " n=" << x.n << " m=" << x.m << " k'=" << k;
    }
  }
}

TEST(SelectDiverse, PrefixStable) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const DlaInstance x = random_instance(rng);
    const dla::SimilarityMatrix s = dla::similarity(attention_of(x), x.mask);
    const auto full = dla::select_diverse_ids(s, x.n);
    for (std::size_t k = 1; k <= x.n; ++k) {
      const auto part = dla::select_diverse_ids(s, k);
      EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin()));
    }
  }
}

TEST(SelectDiverse, RowScalingChangesNothing) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> mag(0.01, 100.0);
  for (int t = 0; t < 100; ++t) {
    const DlaInstance x = random_instance(rng);
    const Tensor<double> a = attention_of(x);
    Tensor<double> scaled = a;
    for (std::size_t i = 0; i < x.n; ++i) {
      const double f = (rng() % 2 ? 1.0 : -1.0) * mag(rng);
      for (std::size_t c = 0; c < x.m; ++c) scaled(i, c) *= f;
    }
    const dla::SimilarityMatrix s0 = dla::similarity(a, x.mask);
    const dla::SimilarityMatrix s1 = dla::similarity(scaled, x.mask);
    for (std::size_t i = 0; i < s0.values.size(); ++i) {
      EXPECT_NEAR(s0.values[i], s1.values[i], 1e-12);
    }
    const Tensor<double> z = index_rows(x.n, 2);
    EXPECT_EQ(dla::select_diverse(z, a, x.n, x.mask).ids,
              dla::select_diverse(z, scaled, x.n, x.mask).ids);
  }
}

// True when some step of the greedy rule has two candidates within the tie
// tolerance of the minimum. The initial pick ties whenever the most diverse
// latent and its closest neighbour are mutual nearest neighbours.
bool selection_has_tie(const dla::SimilarityMatrix& s) {
  const auto order = dla::select_diverse_ids(s, s.n);
  std::vector<bool> taken(s.n, false);
  for (std::size_t step = 0; step < s.n; ++step) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < s.n; ++i) {
      if (taken[i]) continue;
      double v = -1.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const bool counts = step == 0 ? j != i : taken[j];
        if (counts) v = std::max(v, s(i, j));
      }
      scores.push_back(v);
    }
    std::sort(scores.begin(), scores.end());
    if (scores.size() > 1 && scores[1] - scores[0] <= 1e-9) return true;
    taken[order[step]] = true;
  }
  return false;
}

TEST(SelectDiverse, PermutationEquivariantWithoutTies) {
  std::mt19937_64 rng(10);
  int checked = 0, skipped = 0;
  while (checked < 100) {
    DlaInstance x = random_instance(rng);
    const dla::SimilarityMatrix s = dla::similarity(attention_of(x), x.mask);
    if (x.n < 2 || selection_has_tie(s)) {
      ++skipped;
      continue;
    }
    std::vector<std::size_t> perm(x.n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<double> pa({x.n, x.m});
    for (std::size_t r = 0; r < x.n; ++r) {
      for (std::size_t c = 0; c < x.m; ++c) pa(r, c) = x.a[perm[r] * x.m + c];
    }
    const auto base = dla::select_diverse_ids(s, x.n);
    const auto moved = dla::select_diverse_ids(dla::similarity(pa, x.mask), x.n);
    for (std::size_t j = 0; j < x.n; ++j) EXPECT_EQ(perm[moved[j]], base[j]);
    ++checked;
  }
  EXPECT_LT(skipped, 20 * checked);
}

TEST(SelectDiverse, BatchEqualsSequential) {
  std::mt19937_64 rng(11);
  std::vector<dla::AttentionRecord<float>> batch;
  for (int t = 0; t < 20; ++t) {
    DlaInstance x = random_instance(rng, 32, 16);
    while (x.n < 5) x = random_instance(rng, 32, 16);
    batch.push_back({testing::random_matrix<float>(x.n, 8, rng),
                     attention_of(x).cast<float>(), x.mask});
  }
  const auto together = dla::select_diverse_batch<float>(batch, 5);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto alone =
        dla::select_diverse(batch[i].z, batch[i].attention, 5, batch[i].frame_mask);
    EXPECT_EQ(together[i].ids, alone.ids);
    EXPECT_EQ(together[i].latents, alone.latents);
  }
}

TEST(SelectRandom, ReproducibleAndComplete) {
  const Tensor<double> z = index_rows(10, 3);
  Rng a(42), b(42);
  EXPECT_EQ(dla::select_random(z, 4, a).ids, dla::select_random(z, 4, b).ids);
  Rng c(1);
  const auto all = dla::select_random(z, 10, c);
  EXPECT_EQ(all.latents, z);
}

TEST(SelectRandom, FrequenciesUniform) {
  const Tensor<double> z = index_rows(4, 1);
  Rng rng(12);
  const int draws = 10000;
  std::vector<int> hits(4, 0);
  for (int i = 0; i < draws; ++i) {
    for (std::size_t id : dla::select_random(z, 2, rng).ids) ++hits[id];
  }
  // each id is included with probability 1/2
  for (int h : hits) EXPECT_NEAR(h, draws / 2, 150);
}

}  // namespace
}  // namespace s2tp
