// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Dynamic latent access: per-example random latent subsets for training, and
// inference-time selection of a diverse subset of latent representations
// driven by their cross-attention weights.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "s2tp/nn.hpp"
#include "s2tp/tensor.hpp"

namespace s2tp::dla {

/// k distinct ids drawn uniformly among the k-subsets of [0, n), in ascending
/// order. k == n returns [0, n) without consuming the stream.
std::vector<std::size_t> sample_train_latents(std::size_t n, std::size_t k,
                                              Rng& rng);

/// |cos| between l2-normalized attention rows. The diagonal is masked: it is
/// stored as 0 and never read by the selection.
struct SimilarityMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // n x n, row-major

  double operator()(std::size_t i, std::size_t j) const {
    return values[i * n + j];
  }
};

/// Rows are normalized over valid frames only (frame_mask nonzero; empty mask
/// means every frame is valid). Throws DegenerateAttentionError when a row
/// has zero norm over the valid frames.
template <typename T>
SimilarityMatrix similarity(const Tensor<T>& attention,
                            std::span<const std::uint8_t> frame_mask = {});

template <typename T>
struct SelectionResult {
  std::vector<std::size_t> ids;  ///< selection order
  Tensor<T> latents;             ///< k' x d, row j = Z[ids[j]]
};

/// Similarities closer than this are ties. Rescaling an attention row moves
/// S by a few ulp, which must not reorder mathematically equal scores.
inline constexpr double kTieTolerance = 1e-12;

/// Greedy max-min diversity: start from argmin_i max_{j != i} S[i][j], then
/// repeatedly add argmin over unselected i of max_{j selected} S[i][j].
/// Ties (within kTieTolerance) go to the lowest index. Throws KPrimeError when k' is 0 or above n.
std::vector<std::size_t> select_diverse_ids(const SimilarityMatrix& s,
                                            std::size_t k_prime);

template <typename T>
SelectionResult<T> select_diverse(const Tensor<T>& z,
                                  const Tensor<T>& attention,
                                  std::size_t k_prime,
                                  std::span<const std::uint8_t> frame_mask = {});

/// Uniformly random k'-subset (ascending ids).
template <typename T>
SelectionResult<T> select_random(const Tensor<T>& z, std::size_t k_prime,
                                 Rng& rng);

template <typename T>
struct AttentionRecord {
  Tensor<T> z;          ///< n x d
  Tensor<T> attention;  ///< n x m
  std::vector<std::uint8_t> frame_mask;
};

/// Per-example diverse selection over a batch of records.
template <typename T>
std::vector<SelectionResult<T>> select_diverse_batch(
    std::span<const AttentionRecord<T>> batch, std::size_t k_prime);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& z, std::span<const std::size_t> ids);

}  // namespace s2tp::dla
