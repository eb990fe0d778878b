#pragma once

#include <cstdint>
#include <vector>

#include "gaid/rng.hpp"
#include "gaid/tensor.hpp"

namespace testutil {

template <typename T = double>
gaid::Tensor<T> random_tensor(gaid::Shape shape, gaid::Rng& rng, double scale = 1.0) {
  gaid::Tensor<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(scale * rng.normal());
  return t;
}

// Random dyadic entries k/256 with |k| <= 512; sums and means over such
// values stay exact in double.
inline gaid::TensorD random_dyadic(gaid::Shape shape, gaid::Rng& rng) {
  gaid::TensorD t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<double>(rng.below(1025) - 512) / 256.0;
  return t;
}

inline double max_abs_diff(const gaid::TensorD& a, const gaid::TensorD& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
