// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0
// Brute-force reference for diversity-based latent selection: direct nested
// loops over the raw attention rows, no normalized copies, no matrix helpers.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace s2tp::testing {

struct DlaInstance {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> a;  // n x m
  std::vector<std::uint8_t> mask;
};

inline double oracle_abs_cos(const DlaInstance& x, std::size_t i, std::size_t j) {
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t c = 0; c < x.m; ++c) {
    if (!x.mask.empty() && !x.mask[c]) continue;
    const double u = x.a[i * x.m + c];
    const double v = x.a[j * x.m + c];
    dot += u * v;
    ni += u * u;
    nj += v * v;
  }
  return std::abs(dot) / (std::sqrt(ni) * std::sqrt(nj));
}

/// Greedy max-min selection exactly as stated: start with the latent whose
/// largest similarity to any other latent is smallest, then repeatedly add
/// the unselected latent whose largest similarity to the selected set is
/// smallest. A candidate wins only when smaller by more than `tie`, which
/// keeps the lowest index on ties.
inline std::vector<std::size_t> oracle_select(const DlaInstance& x, std::size_t k_prime,
                                              double tie = 1e-12) {
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(x.n, false);
  double best = std::numeric_limits<double>::infinity();
  std::size_t first = 0;
  for (std::size_t i = 0; i < x.n; ++i) {
    double worst = -1.0;
    for (std::size_t j = 0; j < x.n; ++j) {
      if (j != i) worst = std::max(worst, oracle_abs_cos(x, i, j));
    }
    if (worst < best - tie) {
      best = worst;
      first = i;
    }
  }
  chosen.push_back(first);
  taken[first] = true;
  while (chosen.size() < k_prime) {
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t next = x.n;
    for (std::size_t i = 0; i < x.n; ++i) {
      if (taken[i]) continue;
      double score = -1.0;
      for (std::size_t j : chosen) score = std::max(score, oracle_abs_cos(x, i, j));
      if (score < best_score - tie) {
        best_score = score;
        next = i;
      }
    }
    chosen.push_back(next);
    taken[next] = true;
  }
  return chosen;
}

/// Random attention-like instance: rows are softmax-normalized Gaussians over
/// the valid frames and zero on padding. Every fourth instance duplicates
/// rows to exercise tie-breaking.
inline DlaInstance random_instance(std::mt19937_64& rng, std::size_t max_n = 32,
                                   std::size_t max_m = 16) {
  std::uniform_int_distribution<std::size_t> pick_n(1, max_n);
  std::uniform_int_distribution<std::size_t> pick_m(1, max_m);
  std::normal_distribution<double> normal(0.0, 2.0);
  DlaInstance x;
  x.n = pick_n(rng);
  x.m = pick_m(rng);
  x.mask.assign(x.m, 1);
  std::bernoulli_distribution pad(0.2);
  for (std::size_t c = 1; c < x.m; ++c) x.mask[c] = pad(rng) ? 0 : 1;
  x.a.assign(x.n * x.m, 0.0);
  for (std::size_t i = 0; i < x.n; ++i) {
    double total = 0.0;
    for (std::size_t c = 0; c < x.m; ++c) {
      if (!x.mask[c]) continue;
      x.a[i * x.m + c] = std::exp(normal(rng));
      total += x.a[i * x.m + c];
    }
    for (std::size_t c = 0; c < x.m; ++c) x.a[i * x.m + c] /= total;
  }
  if (rng() % 4 == 0 && x.n > 2) {
    std::uniform_int_distribution<std::size_t> row(0, x.n - 1);
    const std::size_t src = row(rng), dst = row(rng);
    for (std::size_t c = 0; c < x.m; ++c) x.a[dst * x.m + c] = x.a[src * x.m + c];
  }
  return x;
}

}  // namespace s2tp::testing
