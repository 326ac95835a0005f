// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/dla.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "s2tp/errors.hpp"

namespace s2tp::dla {
namespace {

void check_k(std::size_t k, std::size_t n, const char* what) {
  if (k == 0 || k > n) {
    throw KPrimeError(std::string(what) + ": requested " + std::to_string(k) +
                      " of " + std::to_string(n) + " latents");
  }
}

}  // namespace

std::vector<std::size_t> sample_train_latents(std::size_t n, std::size_t k,
                                              Rng& rng) {
  if (k == 0 || k > n) {
    throw ContractError("sample_train_latents: need 1 <= k <= n, got k=" +
                        std::to_string(k) + " n=" + std::to_string(n));
  }
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (k == n) return ids;
  // Partial Fisher-Yates: the first k slots form a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

template <typename T>
SimilarityMatrix similarity(const Tensor<T>& attention,
                            std::span<const std::uint8_t> frame_mask) {
  const std::size_t n = attention.rows();
  const std::size_t m = attention.cols();
  if (!frame_mask.empty() && frame_mask.size() != m) {
    throw DimensionError("similarity: frame mask covers " +
                         std::to_string(frame_mask.size()) + " of " +
                         std::to_string(m) + " frames");
  }
  std::vector<std::size_t> valid;
  for (std::size_t j = 0; j < m; ++j) {
    if (frame_mask.empty() || frame_mask[j]) valid.push_back(j);
  }
  std::vector<double> normed(n * valid.size());
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j : valid) {
      const double a = attention(i, j);
      sq += a * a;
    }
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      throw DegenerateAttentionError("similarity: attention row " +
                                     std::to_string(i) +
                                     " has zero norm over valid frames");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t c = 0; c < valid.size(); ++c) {
      normed[i * valid.size() + c] = attention(i, valid[c]) * inv;
    }
  }
  SimilarityMatrix s{n, std::vector<double>(n * n, 0.0)};
  const std::size_t w = valid.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < w; ++c) {
        dot += normed[i * w + c] * normed[j * w + c];
      }
      const double v = std::min(std::abs(dot), 1.0);
      s.values[i * n + j] = v;
      s.values[j * n + i] = v;
    }
  }
  return s;
}

std::vector<std::size_t> select_diverse_ids(const SimilarityMatrix& s,
                                            std::size_t k_prime) {
  const std::size_t n = s.n;
  check_k(k_prime, n, "select_diverse");
  constexpr double kNone = -std::numeric_limits<double>::infinity();

  // Most diverse latent: smallest maximum similarity to any other latent.
  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = kNone;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row_max = std::max(row_max, s(i, j));
    }
    if (row_max < best - kTieTolerance) {
      best = row_max;
      first = i;
    }
  }

  std::vector<std::size_t> ids{first};
  ids.reserve(k_prime);
  std::vector<bool> taken(n, false);
  taken[first] = true;
  // scores[i] = max over selected j of S[i][j], updated incrementally.
  std::vector<double> scores(n, kNone);
  std::size_t last = first;
  while (ids.size() < k_prime) {
    std::size_t next = n;
    double next_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      scores[i] = std::max(scores[i], s(i, last));
      if (scores[i] < next_score - kTieTolerance) {
        next_score = scores[i];
        next = i;
      }
    }
    taken[next] = true;
    ids.push_back(next);
    last = next;
  }
  return ids;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& z, std::span<const std::size_t> ids) {
  const std::size_t d = z.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= z.rows()) {
      throw IndexError("gather_rows: id " + std::to_string(ids[r]) +
                       " out of range");
    }
    std::copy_n(z.data() + ids[r] * d, d, out.data() + r * d);
  }
  return out;
}

template <typename T>
SelectionResult<T> select_diverse(const Tensor<T>& z,
                                  const Tensor<T>& attention,
                                  std::size_t k_prime,
                                  std::span<const std::uint8_t> frame_mask) {
  if (z.rows() != attention.rows()) {
    throw DimensionError("select_diverse: Z has " + std::to_string(z.rows()) +
                         " rows, attention has " +
                         std::to_string(attention.rows()));
  }
  check_k(k_prime, z.rows(), "select_diverse");
  SelectionResult<T> out;
  out.ids = select_diverse_ids(similarity(attention, frame_mask), k_prime);
  out.latents = gather_rows(z, out.ids);
  return out;
}

template <typename T>
SelectionResult<T> select_random(const Tensor<T>& z, std::size_t k_prime,
                                 Rng& rng) {
  check_k(k_prime, z.rows(), "select_random");
  SelectionResult<T> out;
  out.ids = sample_train_latents(z.rows(), k_prime, rng);
  out.latents = gather_rows(z, out.ids);
  return out;
}

template <typename T>
std::vector<SelectionResult<T>> select_diverse_batch(
    std::span<const AttentionRecord<T>> batch, std::size_t k_prime) {
  std::vector<SelectionResult<T>> out;
  out.reserve(batch.size());
  for (const auto& rec : batch) {
    out.push_back(select_diverse(rec.z, rec.attention, k_prime, rec.frame_mask));
  }
  return out;
}

#define S2TP_INSTANTIATE(T)                                                   \
  template SimilarityMatrix similarity<T>(const Tensor<T>&,                   \
                                          std::span<const std::uint8_t>);     \
  template Tensor<T> gather_rows<T>(const Tensor<T>&,                         \
                                    std::span<const std::size_t>);            \
  template SelectionResult<T> select_diverse<T>(                              \
      const Tensor<T>&, const Tensor<T>&, std::size_t,                        \
      std::span<const std::uint8_t>);                                         \
  template SelectionResult<T> select_random<T>(const Tensor<T>&, std::size_t, \
                                               Rng&);                         \
  template std::vector<SelectionResult<T>> select_diverse_batch<T>(           \
      std::span<const AttentionRecord<T>>, std::size_t);

S2TP_INSTANTIATE(float)
S2TP_INSTANTIATE(double)

#undef S2TP_INSTANTIATE

}  // namespace s2tp::dla
