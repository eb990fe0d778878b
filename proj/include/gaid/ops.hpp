#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gaid/tensor.hpp"

// Numeric kernels shared by every module. All loops use a fixed left-to-right
// summation order so results are bit-reproducible across runs.

namespace gaid {

template <typename T>
inline void check_matmul_shapes(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
}

// C[m,n] = A[m,k] * B[k,n]. Each output element accumulates in ascending k.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_matmul_shapes(a, b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    T* crow = c.data() + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C[k,n] = A^T[k,m] * B[m,n] without materializing the transpose.
template <typename T>
Tensor<T> matmul_at_b(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("matmul_at_b: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({k, n});
  for (std::int64_t p = 0; p < m; ++p) {
    const T* arow = a.data() + p * k;
    const T* brow = b.data() + p * n;
    for (std::int64_t i = 0; i < k; ++i) {
      const T av = arow[i];
      T* crow = c.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C[m,k] = A[m,n] * B^T[n,k] where B is stored [k,n].
template <typename T>
Tensor<T> matmul_a_bt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("matmul_a_bt: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::int64_t m = a.dim(0), n = a.dim(1), k = b.dim(0);
  Tensor<T> c({m, k});
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * n;
    T* crow = c.data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) {
      const T* brow = b.data() + j * n;
      T acc{};
      for (std::int64_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
  return c;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// softplus(x) = ln(1+e^x), evaluated as max(x,0) + log1p(e^{-|x|}).
template <typename T>
T stable_softplus(T x) {
  const T m = x > T(0) ? x : T(0);
  return m + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = stable_sigmoid(x[i]);
  return y;
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = stable_softplus(x[i]);
  return y;
}

// Max-subtracted softmax along `axis`, any rank.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
  const Shape& s = x.shape();
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  const std::int64_t len = s[static_cast<std::size_t>(axis)];
  Tensor<T> y(x.shape());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      T mx = x[base];
      for (std::int64_t a = 1; a < len; ++a) mx = std::max(mx, x[base + a * inner]);
      T sum{};
      for (std::int64_t a = 0; a < len; ++a) {
        const T e = std::exp(x[base + a * inner] - mx);
        y[base + a * inner] = e;
        sum += e;
      }
      for (std::int64_t a = 0; a < len; ++a) y[base + a * inner] /= sum;
    }
  }
  return y;
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> c(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] + b[i];
  return c;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> c(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] - b[i];
  return c;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> c(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * b[i];
  return c;
}

// Scalar broadcast: one of the two enumerated broadcast forms.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> c(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * s;
  return c;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add_inplace");
  for (std::int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

template <typename T>
void axpy_inplace(Tensor<T>& a, T s, const Tensor<T>& b) {
  check_same_shape(a, b, "axpy_inplace");
  for (std::int64_t i = 0; i < a.numel(); ++i) a[i] += s * b[i];
}

// Per-row vector addition: the other enumerated broadcast form.
template <typename T>
Tensor<T> add_row_vector(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() != 2 || v.rank() != 1 || x.dim(1) != v.dim(0))
    throw ShapeError("add_row_vector: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(v.shape()));
  Tensor<T> y(x.shape());
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) y.at2(i, j) = x.at2(i, j) + v[j];
  return y;
}

// Column sums of a [rows, cols] matrix; gradient of add_row_vector's bias.
template <typename T>
Tensor<T> sum_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("sum_rows: expected rank 2, got " + shape_str(x.shape()));
  Tensor<T> s({x.dim(1)});
  for (std::int64_t i = 0; i < x.dim(0); ++i)
    for (std::int64_t j = 0; j < x.dim(1); ++j) s[j] += x.at2(i, j);
  return s;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
  Tensor<T> y({x.dim(1), x.dim(0)});
  for (std::int64_t i = 0; i < x.dim(0); ++i)
    for (std::int64_t j = 0; j < x.dim(1); ++j) y.at2(j, i) = x.at2(i, j);
  return y;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::int64_t rows = parts[0]->dim(0);
  std::int64_t cols = 0;
  for (const auto* p : parts) {
    if (p->rank() != 2 || p->dim(0) != rows)
      throw ShapeError("concat_cols: row mismatch at " + shape_str(p->shape()));
    cols += p->dim(1);
  }
  Tensor<T> y({rows, cols});
  for (std::int64_t i = 0; i < rows; ++i) {
    std::int64_t off = 0;
    for (const auto* p : parts) {
      for (std::int64_t j = 0; j < p->dim(1); ++j) y.at2(i, off + j) = p->at2(i, j);
      off += p->dim(1);
    }
  }
  return y;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::int64_t start, std::int64_t len) {
  if (x.rank() != 2 || start < 0 || len <= 0 || start + len > x.dim(1))
    throw ShapeError("slice_cols: bad slice [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") of " + shape_str(x.shape()));
  Tensor<T> y({x.dim(0), len});
  for (std::int64_t i = 0; i < x.dim(0); ++i)
    for (std::int64_t j = 0; j < len; ++j) y.at2(i, j) = x.at2(i, start + j);
  return y;
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
std::span<const T> row(const Tensor<T>& x, std::int64_t i) {
  return {x.data() + i * x.dim(1), static_cast<std::size_t>(x.dim(1))};
}

template <typename T>
std::span<T> row(Tensor<T>& x, std::int64_t i) {
  return {x.data() + i * x.dim(1), static_cast<std::size_t>(x.dim(1))};
}

struct NormalizeResult;  // fwd-declared name used by fusion docs

// Row-wise L2 normalization; returns norms for the backward pass.
template <typename T>
struct RowNormalized {
  Tensor<T> values;
  Tensor<T> norms;  // [rows]
};

template <typename T>
RowNormalized<T> l2_normalize_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("l2_normalize_rows: expected rank 2, got " + shape_str(x.shape()));
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  RowNormalized<T> out{Tensor<T>(x.shape()), Tensor<T>({rows})};
  for (std::int64_t i = 0; i < rows; ++i) {
    T sq{};
    for (std::int64_t j = 0; j < cols; ++j) sq += x.at2(i, j) * x.at2(i, j);
    const T n = std::max(std::sqrt(sq), T(1e-12));
    out.norms[i] = n;
    for (std::int64_t j = 0; j < cols; ++j) out.values.at2(i, j) = x.at2(i, j) / n;
  }
  return out;
}

// dL/dx for y = x / ||x||:  (dy - y (y . dy)) / ||x||, per row.
template <typename T>
Tensor<T> l2_normalize_rows_backward(const RowNormalized<T>& fwd, const Tensor<T>& dy) {
  check_same_shape(fwd.values, dy, "l2_normalize_rows_backward");
  const std::int64_t rows = dy.dim(0), cols = dy.dim(1);
  Tensor<T> dx(dy.shape());
  for (std::int64_t i = 0; i < rows; ++i) {
    T yd{};
    for (std::int64_t j = 0; j < cols; ++j) yd += fwd.values.at2(i, j) * dy.at2(i, j);
    for (std::int64_t j = 0; j < cols; ++j)
      dx.at2(i, j) = (dy.at2(i, j) - fwd.values.at2(i, j) * yd) / fwd.norms[i];
  }
  return dx;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (std::int64_t i = 0; i < x.numel(); ++i)
    if (!std::isfinite(static_cast<double>(x[i]))) return false;
  return true;
}

template <typename T>
void assert_finite(const Tensor<T>& x, const std::string& name) {
  if (!all_finite(x)) throw NumericError("non-finite values in " + name);
}

}  // namespace gaid
