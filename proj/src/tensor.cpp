// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "s2tp/errors.hpp"
#include "s2tp/instrument.hpp"

namespace s2tp {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out << (i ? "x" : "") << shape[i];
  }
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), T{0}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor of shape " + shape_string(shape_) +
                         " cannot hold " + std::to_string(data_.size()) +
                         " values");
  }
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_rows(
    std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<T> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

template <typename T>
void Parameter<T>::zero_grad() const {
  if (grad.size() != value.size() || grad.shape() != value.shape()) {
    grad = Tensor<T>(value.shape());
  } else {
    std::fill(grad.storage().begin(), grad.storage().end(), T{0});
  }
}

// ---------------------------------------------------------------------------
// Mask

Mask Mask::all(std::size_t rows, std::size_t cols) {
  return Mask{rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
}

Mask Mask::from_columns(std::size_t rows, std::span<const std::uint8_t> cols) {
  Mask m{rows, cols.size(), {}};
  m.keep.reserve(rows * cols.size());
  for (std::size_t i = 0; i < rows; ++i) {
    m.keep.insert(m.keep.end(), cols.begin(), cols.end());
  }
  return m;
}

Mask Mask::causal(std::size_t size) {
  Mask m{size, size, std::vector<std::uint8_t>(size * size, 0)};
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.keep[i * size + j] = 1;
  }
  return m;
}

// ---------------------------------------------------------------------------
// BLAS glue

namespace {

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          float alpha, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float beta, float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

// C (m x n) = beta*C + op(A) * op(B), with op(A) m x k and op(B) k x n.
template <typename T>
void gemm_acc(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
              const T* a, const T* b, T beta, T* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
    return;
  }
  const std::size_t lda = ta ? m : k;
  const std::size_t ldb = tb ? k : n;
  gemm(ta, tb, m, n, k, T{1}, a, lda, b, ldb, beta, c, n);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Transpose tb) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const bool trans = tb == Transpose::kYes;
  const std::size_t p = a.rows();
  const std::size_t q = a.cols();
  const std::size_t bq = trans ? b.cols() : b.rows();
  const std::size_t r = trans ? b.rows() : b.cols();
  if (q != bq) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + (trans ? "^T" : ""));
  }
  Tensor<T> out({p, r});
  gemm_acc(false, trans, p, r, q, a.data(), b.data(), T{0}, out.data());
  record_macs(static_cast<std::uint64_t>(p) * q * r);
  return out;
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
Graph<T>::Graph(bool record_gradients) : record_(record_gradients) {
  nodes_.reserve(256);
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Graph<T>::grad_slot(Var v) {
  Node& node = nodes_[v.id];
  if (node.grad.size() != node.value.size() ||
      node.grad.shape() != node.value.shape()) {
    node.grad = Tensor<T>(node.value.shape());
  }
  return node.grad;
}

template <typename T>
void Graph<T>::set_backward(Var out, std::function<void()> fn) {
  if (nodes_[out.id].needs_grad) nodes_[out.id].backward = std::move(fn);
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Graph<T>::param(const Parameter<T>& p) {
  Var out = push(p.value, true);
  set_backward(out, [this, out, pp = &p] {
    if (pp->grad.size() != pp->value.size()) pp->zero_grad();
    add_into(pp->grad, nodes_[out.id].grad);
  });
  return out;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(nodes_[loss.id].value.shape()));
  }
  if (!record_) throw ContractError("backward: graph did not record gradients");
  for (Node& node : nodes_) node.grad = Tensor<T>();
  grad_slot(loss)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward();
  }
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b, Transpose tb) {
  Tensor<T> out = s2tp::matmul(value(a), value(b), tb);
  Var o = push(std::move(out), needs(a) || needs(b));
  set_backward(o, [this, a, b, o, tb] {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    const Tensor<T>& g = nodes_[o.id].grad;
    const std::size_t p = av.rows();
    const std::size_t q = av.cols();
    const std::size_t r = g.cols();
    const bool trans = tb == Transpose::kYes;
    if (needs(a)) {
      // dA (p x q) += G (p x r) * op(B)^T
      gemm_acc(false, !trans, p, q, r, g.data(), bv.data(), T{1},
               grad_slot(a).data());
    }
    if (needs(b)) {
      if (!trans) {
        // dB (q x r) += A^T G
        gemm_acc(true, false, q, r, p, av.data(), g.data(), T{1},
                 grad_slot(b).data());
      } else {
        // dB (r x q) += G^T A
        gemm_acc(true, false, r, q, p, g.data(), av.data(), T{1},
                 grad_slot(b).data());
      }
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor<T> out = value(a);
  add_into(out, value(b));
  Var o = push(std::move(out), needs(a) || needs(b));
  set_backward(o, [this, a, b, o] {
    if (needs(a)) add_into(grad_slot(a), nodes_[o.id].grad);
    if (needs(b)) add_into(grad_slot(b), nodes_[o.id].grad);
  });
  return o;
}

template <typename T>
Var Graph<T>::add_row(Var a, Var row) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& rv = value(row);
  if (rv.size() != av.cols() || rv.rows() != 1) {
    throw DimensionError("add_row: row " + shape_string(rv.shape()) +
                         " does not broadcast over " +
                         shape_string(av.shape()));
  }
  Tensor<T> out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    T* dst = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) dst[j] += rv[j];
  }
  Var o = push(std::move(out), needs(a) || needs(row));
  set_backward(o, [this, a, row, o] {
    const Tensor<T>& g = nodes_[o.id].grad;
    if (needs(a)) add_into(grad_slot(a), g);
    if (needs(row)) {
      Tensor<T>& gr = grad_slot(row);
      const std::size_t c = g.cols();
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < c; ++j) gr[j] += g(i, j);
      }
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  Tensor<T> out = value(a);
  for (T& x : out.storage()) x *= factor;
  Var o = push(std::move(out), needs(a));
  set_backward(o, [this, a, o, factor] {
    Tensor<T>& ga = grad_slot(a);
    const Tensor<T>& g = nodes_[o.id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
  return o;
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor<T> out = value(a);
  const Tensor<T>& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var o = push(std::move(out), needs(a) || needs(b));
  set_backward(o, [this, a, b, o] {
    const Tensor<T>& g = nodes_[o.id].grad;
    if (needs(a)) {
      Tensor<T>& ga = grad_slot(a);
      const Tensor<T>& bv = value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (needs(b)) {
      Tensor<T>& gb = grad_slot(b);
      const Tensor<T>& av = value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::sigmoid(Var a) {
  Tensor<T> out = value(a);
  for (T& x : out.storage()) x = T{1} / (T{1} + std::exp(-x));
  Var o = push(std::move(out), needs(a));
  set_backward(o, [this, a, o] {
    const Tensor<T>& y = value(o);
    const Tensor<T>& g = nodes_[o.id].grad;
    Tensor<T>& ga = grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * y[i] * (T{1} - y[i]);
    }
  });
  return o;
}

namespace {

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);

}  // namespace

template <typename T>
Var Graph<T>::gelu(Var a) {
  Tensor<T> out = value(a);
  const bool keep = record_ && needs(a);
  // tanh of the inner term, reused by the backward pass
  std::vector<T> th(keep ? out.size() : 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    T& x = out[i];
    const T t = std::tanh(kGeluC<T> * (x + kGeluA<T> * x * x * x));
    if (keep) th[i] = t;
    x = T{0.5} * x * (T{1} + t);
  }
  Var o = push(std::move(out), needs(a));
  set_backward(o, [this, a, o, th = std::move(th)] {
    const Tensor<T>& x = value(a);
    const Tensor<T>& g = nodes_[o.id].grad;
    Tensor<T>& ga = grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T xi = x[i];
      const T dinner = kGeluC<T> * (T{1} + T{3} * kGeluA<T> * xi * xi);
      const T d = T{0.5} * (T{1} + th[i]) + T{0.5} * xi * (T{1} - th[i] * th[i]) * dinner;
      ga[i] += g[i] * d;
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::softmax_rows(Var a, const Mask* mask) {
  const Tensor<T>& av = value(a);
  require_matrix(av, "softmax_rows");
  const std::size_t p = av.rows();
  const std::size_t q = av.cols();
  if (mask != nullptr && (mask->rows != p || mask->cols != q)) {
    throw DimensionError("softmax_rows: mask is " + std::to_string(mask->rows) +
                         "x" + std::to_string(mask->cols) + ", input is " +
                         shape_string(av.shape()));
  }
  Tensor<T> out({p, q});
  for (std::size_t i = 0; i < p; ++i) {
    const T* x = av.data() + i * q;
    T* y = out.data() + i * q;
    T mx = -std::numeric_limits<T>::infinity();
    bool valid = false;
    for (std::size_t j = 0; j < q; ++j) {
      if (mask == nullptr || (*mask)(i, j)) {
        // NaN scores propagate to the output instead of reading as masked
        mx = std::isnan(x[j]) ? x[j] : std::max(mx, x[j]);
        valid = true;
        if (std::isnan(mx)) break;
      }
    }
    if (!valid) {
      throw DegenerateMaskError("softmax_rows: row " + std::to_string(i) +
                                " is fully masked");
    }
    T total = 0;
    for (std::size_t j = 0; j < q; ++j) {
      // Masked entries carry an additive -inf, i.e. exp(-inf) = 0.
      y[j] = (mask == nullptr || (*mask)(i, j)) ? std::exp(x[j] - mx) : T{0};
      total += y[j];
    }
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < q; ++j) y[j] *= inv;
  }
  Var o = push(std::move(out), needs(a));
  set_backward(o, [this, a, o] {
    const Tensor<T>& y = value(o);
    const Tensor<T>& g = nodes_[o.id].grad;
    Tensor<T>& ga = grad_slot(a);
    const std::size_t q = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const T* yi = y.data() + i * q;
      const T* gi = g.data() + i * q;
      T dot = 0;
      for (std::size_t j = 0; j < q; ++j) dot += yi[j] * gi[j];
      T* dst = ga.data() + i * q;
      for (std::size_t j = 0; j < q; ++j) dst[j] += yi[j] * (gi[j] - dot);
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::layer_norm(Var a, Var gain, Var bias, T eps) {
  const Tensor<T>& av = value(a);
  const std::size_t p = av.rows();
  const std::size_t d = av.cols();
  if (value(gain).size() != d || value(bias).size() != d) {
    throw DimensionError("layer_norm: gain/bias length must equal " +
                         std::to_string(d));
  }
  if (!(eps > T{0})) throw ContractError("layer_norm: eps must be positive");
  Tensor<T> normed(av.shape());
  std::vector<T> inv_std(p);
  Tensor<T> out(av.shape());
  const Tensor<T>& gv = value(gain);
  const Tensor<T>& bv = value(bias);
  for (std::size_t i = 0; i < p; ++i) {
    const T* x = av.data() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<T>(d);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    T* xh = normed.data() + i * d;
    T* y = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (x[j] - mean) * inv_std[i];
      y[j] = xh[j] * gv[j] + bv[j];
    }
  }
  Var o = push(std::move(out), needs(a) || needs(gain) || needs(bias));
  set_backward(o, [this, a, gain, bias, o, normed = std::move(normed),
                   inv_std = std::move(inv_std)] {
    const Tensor<T>& g = nodes_[o.id].grad;
    const Tensor<T>& gv = value(gain);
    const std::size_t d = g.cols();
    const std::size_t p = g.rows();
    if (needs(gain)) {
      Tensor<T>& gg = grad_slot(gain);
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < d; ++j) gg[j] += g(i, j) * normed(i, j);
      }
    }
    if (needs(bias)) {
      Tensor<T>& gb = grad_slot(bias);
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
      }
    }
    if (needs(a)) {
      Tensor<T>& ga = grad_slot(a);
      std::vector<T> dxh(d);
      for (std::size_t i = 0; i < p; ++i) {
        T mean_dxh = 0;
        T mean_dxh_xh = 0;
        for (std::size_t j = 0; j < d; ++j) {
          dxh[j] = g(i, j) * gv[j];
          mean_dxh += dxh[j];
          mean_dxh_xh += dxh[j] * normed(i, j);
        }
        mean_dxh /= static_cast<T>(d);
        mean_dxh_xh /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          ga(i, j) += inv_std[i] *
                      (dxh[j] - mean_dxh - normed(i, j) * mean_dxh_xh);
        }
      }
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::gather_rows(Var a, std::span<const std::size_t> ids) {
  const Tensor<T>& av = value(a);
  const std::size_t c = av.cols();
  Tensor<T> out({ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= av.rows()) {
      throw IndexError("gather_rows: index " + std::to_string(ids[i]) +
                       " out of range [0, " + std::to_string(av.rows()) + ")");
    }
    std::copy_n(av.data() + ids[i] * c, c, out.data() + i * c);
  }
  Var o = push(std::move(out), needs(a));
  set_backward(o, [this, a, o, idv = std::vector<std::size_t>(ids.begin(), ids.end())] {
    const Tensor<T>& g = nodes_[o.id].grad;
    Tensor<T>& ga = grad_slot(a);
    const std::size_t c = g.cols();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      T* dst = ga.data() + idv[i] * c;
      const T* src = g.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor<T>& av = value(a);
  require_matrix(av, "slice_cols");
  if (begin + count > av.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) +
                         ", " + std::to_string(begin + count) +
                         ") exceed " + shape_string(av.shape()));
  }
  Tensor<T> out({av.rows(), count});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::copy_n(av.data() + i * av.cols() + begin, count,
                out.data() + i * count);
  }
  Var o = push(std::move(out), needs(a));
  set_backward(o, [this, a, o, begin] {
    const Tensor<T>& g = nodes_[o.id].grad;
    Tensor<T>& ga = grad_slot(a);
    const std::size_t count = g.cols();
    const std::size_t c = ga.cols();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < count; ++j) ga[i * c + begin + j] += g(i, j);
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = value(parts[0]).rows();
  std::size_t total = 0;
  bool any = false;
  for (Var v : parts) {
    if (value(v).rows() != r) {
      throw DimensionError("concat_cols: row counts differ");
    }
    total += value(v).cols();
    any = any || needs(v);
  }
  Tensor<T> out({r, total});
  std::size_t offset = 0;
  for (Var v : parts) {
    const Tensor<T>& pv = value(v);
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(pv.data() + i * pv.cols(), pv.cols(),
                  out.data() + i * total + offset);
    }
    offset += pv.cols();
  }
  Var o = push(std::move(out), any);
  set_backward(o, [this, o, pv = std::vector<Var>(parts.begin(), parts.end())] {
    const Tensor<T>& g = nodes_[o.id].grad;
    std::size_t offset = 0;
    for (Var v : pv) {
      const std::size_t c = value(v).cols();
      if (needs(v)) {
        Tensor<T>& gv = grad_slot(v);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) gv(i, j) += g(i, offset + j);
        }
      }
      offset += c;
    }
  });
  return o;
}

template <typename T>
Var Graph<T>::unfold(Var a, std::size_t kernel, std::size_t stride,
                     std::size_t pad) {
  const Tensor<T>& av = value(a);
  require_matrix(av, "unfold");
  const std::size_t m = av.rows();
  const std::size_t c = av.cols();
  if (kernel == 0 || stride == 0 || m + 2 * pad < kernel) {
    throw DimensionError("unfold: sequence of " + std::to_string(m) +
                         " rows too short for kernel " + std::to_string(kernel));
  }
  const std::size_t out_rows = (m + 2 * pad - kernel) / stride + 1;
  Tensor<T> out({out_rows, kernel * c});
  for (std::size_t o = 0; o < out_rows; ++o) {
    for (std::size_t tap = 0; tap < kernel; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + tap) -
                                 static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(m)) continue;
      std::copy_n(av.data() + static_cast<std::size_t>(src) * c, c,
                  out.data() + o * kernel * c + tap * c);
    }
  }
  Var ov = push(std::move(out), needs(a));
  set_backward(ov, [this, a, ov, kernel, stride, pad] {
    const Tensor<T>& g = nodes_[ov.id].grad;
    Tensor<T>& ga = grad_slot(a);
    const std::size_t m = ga.rows();
    const std::size_t c = ga.cols();
    for (std::size_t o = 0; o < g.rows(); ++o) {
      for (std::size_t tap = 0; tap < kernel; ++tap) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(o * stride + tap) -
            static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(m)) continue;
        T* dst = ga.data() + static_cast<std::size_t>(src) * c;
        const T* s = g.data() + o * kernel * c + tap * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += s[j];
      }
    }
  });
  return ov;
}

template <typename T>
Var Graph<T>::sum(Var a) {
  const Tensor<T>& av = value(a);
  T total = 0;
  for (T x : av.values()) total += x;
  Var o = push(Tensor<T>::scalar(total), needs(a));
  set_backward(o, [this, a, o] {
    const T g = nodes_[o.id].grad[0];
    for (T& x : grad_slot(a).storage()) x += g;
  });
  return o;
}

template <typename T>
Var Graph<T>::mean(Var a) {
  const std::size_t n = value(a).size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::span<const int> targets,
                            T smoothing) {
  const Tensor<T>& z = value(logits);
  require_matrix(z, "cross_entropy");
  const std::size_t p = z.rows();
  const std::size_t v = z.cols();
  if (targets.size() != p || p == 0) {
    throw ContractError("cross_entropy: need one target per row (" +
                        std::to_string(p) + " rows, " +
                        std::to_string(targets.size()) + " targets)");
  }
  if (smoothing < T{0} || smoothing >= T{1}) {
    throw ContractError("cross_entropy: smoothing must lie in [0, 1)");
  }
  Tensor<T> probs({p, v});
  T loss = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(y) +
                       " outside vocabulary of " + std::to_string(v));
    }
    const T* zi = z.data() + i * v;
    T mx = *std::max_element(zi, zi + v);
    T total = 0;
    T zsum = 0;
    for (std::size_t j = 0; j < v; ++j) {
      probs(i, j) = std::exp(zi[j] - mx);
      total += probs(i, j);
      zsum += zi[j];
    }
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < v; ++j) probs(i, j) /= total;
    const T nll = lse - zi[y];
    const T uniform = lse - zsum / static_cast<T>(v);
    loss += (T{1} - smoothing) * nll + smoothing * uniform;
  }
  loss /= static_cast<T>(p);
  Var o = push(Tensor<T>::scalar(loss), needs(logits));
  set_backward(o, [this, logits, o, probs = std::move(probs),
                   tv = std::vector<int>(targets.begin(), targets.end()),
                   smoothing] {
    const T g = nodes_[o.id].grad[0];
    Tensor<T>& gz = grad_slot(logits);
    const std::size_t p = probs.rows();
    const std::size_t v = probs.cols();
    const T scale = g / static_cast<T>(p);
    const T off = smoothing / static_cast<T>(v);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < v; ++j) {
        T target = off;
        if (static_cast<int>(j) == tv[i]) target += T{1} - smoothing;
        gz(i, j) += scale * (probs(i, j) - target);
      }
    }
  });
  return o;
}

// ---------------------------------------------------------------------------
// Finite differences

GradCheckReport finite_diff_check(const ScalarFunction& f,
                                  std::span<Parameter<double>* const> params,
                                  double step) {
  GradCheckReport report;
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Graph<double> g(true);
    Var loss = f(g);
    g.backward(loss);
  }
  auto evaluate = [&f] {
    Graph<double> g(false);
    return g.value(f(g)).item();
  };
  for (Parameter<double>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double plus = evaluate();
      p->value[i] = saved - step;
      const double minus = evaluate();
      p->value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      const double err = std::abs(analytic - numeric) / denom;
      ++report.coordinates;
      report.max_absolute_error =
          std::max(report.max_absolute_error, std::abs(analytic - numeric));
      if (err > 1e-5) ++report.above_1e5;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        if (err >= report.max_relative_error) {
          report.max_relative_error = err;
          report.worst_parameter = p->name;
          report.worst_index = i;
          report.analytic = analytic;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

template class Tensor<float>;
template class Tensor<double>;
template struct Parameter<float>;
template struct Parameter<double>;
template class Graph<float>;
template class Graph<double>;
template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&,
                              Transpose);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&,
                               Transpose);

}  // namespace s2tp
