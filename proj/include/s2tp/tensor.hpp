// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major tensors and a tape-based reverse-mode autodiff engine.
//
// Everything is templated on the scalar type and explicitly instantiated for
// float (training and inference) and double (gradient checks).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace s2tp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, {value}); }
  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view: rank-2 tensors are rows x cols, rank-1 tensors are a single
  // row, scalars are 1 x 1.
  std::size_t rows() const noexcept {
    return shape_.size() == 2 ? shape_[0] : 1;
  }
  std::size_t cols() const noexcept {
    return shape_.empty() ? 1 : shape_.back();
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }

  std::span<T> row(std::size_t i) noexcept {
    return {data_.data() + i * cols(), cols()};
  }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols(), cols()};
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols() + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols() + j];
  }

  T item() const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Rows x cols keep-mask; nonzero entries participate in a softmax row.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;

  static Mask all(std::size_t rows, std::size_t cols);
  /// Broadcasts a per-column mask (e.g. valid key frames) over `rows`.
  static Mask from_columns(std::size_t rows, std::span<const std::uint8_t> cols);
  /// Lower triangle including the diagonal.
  static Mask causal(std::size_t size);

  bool operator()(std::size_t i, std::size_t j) const noexcept {
    return keep[i * cols + j] != 0;
  }
};

/// A named, trainable tensor. `grad` is the accumulation target of
/// Graph::backward and has the same shape as `value`.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  mutable Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() const;
};

struct Var {
  std::uint32_t id = 0;
};

enum class Transpose : bool { kNo = false, kYes = true };

/// Records primitive operations in creation order (a topological order) and
/// replays them backwards. A Graph is bound to one execution context; it is
/// neither copyable nor movable because recorded closures refer to it.
template <typename T>
class Graph {
 public:
  /// With `record_gradients` false no backward rules are stored (inference).
  explicit Graph(bool record_gradients = true);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var constant(Tensor<T> value);
  Var param(const Parameter<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target with respect to `v`; empty when
  /// `v` did not influence it.
  const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }

  /// Accumulates d(loss)/d(param) into every Parameter::grad reached from
  /// `loss`. Throws ContractError when `loss` is not a single value.
  void backward(Var loss);

  // Linear algebra.
  Var matmul(Var a, Var b, Transpose transpose_b = Transpose::kNo);
  Var add(Var a, Var b);
  /// Adds a length-cols vector to every row.
  Var add_row(Var a, Var row);
  Var scale(Var a, T factor);
  Var mul(Var a, Var b);

  // Elementwise nonlinearities.
  Var sigmoid(Var a);
  /// Tanh approximation of GELU.
  Var gelu(Var a);

  // Row-wise normalizations.
  Var softmax_rows(Var a, const Mask* mask = nullptr);
  Var layer_norm(Var a, Var gain, Var bias, T eps);

  // Structural.
  Var gather_rows(Var a, std::span<const std::size_t> ids);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  /// im2col for a 1-D convolution over rows: output row o holds input rows
  /// o*stride - pad + [0, kernel) concatenated, zero outside the input.
  Var unfold(Var a, std::size_t kernel, std::size_t stride, std::size_t pad);

  // Reductions and losses.
  Var sum(Var a);
  Var mean(Var a);
  /// Mean over rows of label-smoothed cross-entropy:
  /// (1-eps) * nll(target) + eps * mean_v(-log p_v).
  Var cross_entropy(Var logits, std::span<const int> targets, T smoothing);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor<T> value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Tensor<T>& grad_slot(Var v);
  void set_backward(Var out, std::function<void()> fn);

  bool record_;
  std::vector<Node> nodes_;
};

/// Dense matrix product C = A * op(B) without recording, counted by the
/// multiply-add instrumentation.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b,
                 Transpose transpose_b = Transpose::kNo);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  double max_absolute_error = 0.0;  ///< max |analytic - numeric|
  std::size_t above_1e5 = 0;        ///< coordinates with relative error > 1e-5
};

using ScalarFunction = std::function<Var(Graph<double>&)>;

/// Compares Graph::backward against central differences
///   (f(p + h e_i) - f(p - h e_i)) / 2h
/// for every coordinate of every parameter. Per-coordinate error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckReport finite_diff_check(const ScalarFunction& f,
                                  std::span<Parameter<double>* const> params,
                                  double step = 1e-5);

}  // namespace s2tp
