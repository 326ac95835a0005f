// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests.
#pragma once

#include <random>
#include <string>

#include "s2tp/errors.hpp"
#include "s2tp/nn.hpp"
#include "s2tp/tensor.hpp"

namespace s2tp::testing {

template <typename T = double>
Tensor<T> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng,
                        double std = 1.0) {
  std::normal_distribution<double> d(0.0, std);
  Tensor<T> t({r, c});
  for (T& x : t.storage()) x = static_cast<T>(d(rng));
  return t;
}

/// Looks a parameter up by its full name; throws when absent.
template <typename T>
Parameter<T>& find_parameter(const ParameterList<T>& params,
                             const std::string& name) {
  for (Parameter<T>* p : params) {
    if (p->name == name) return *p;
  }
  throw IndexError("no parameter named " + name);
}

template <typename T>
Tensor<T> identity(std::size_t d) {
  Tensor<T> t({d, d});
  for (std::size_t i = 0; i < d; ++i) t(i, i) = T{1};
  return t;
}

}  // namespace s2tp::testing
