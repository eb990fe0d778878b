#pragma once

#include <cstdint>
#include <string>

#include "gaid/ops.hpp"
#include "gaid/rng.hpp"
#include "gaid/tensor.hpp"

// Directional text perturbation: a nonnegative per-channel direction (std) is
// estimated from the text and the fused video embedding, then added to the
// text embedding under three laws:
//   stochastic baseline   t + sigma * std,            sigma ~ N(0,1) per row
//   scaled training form  t + (alpha*sigma + 1 - alpha) * std
//   deterministic form    t + alpha * std
// plus the boundary point t + std used by the support loss branch.

namespace gaid {

enum class PerturbMode { None, Stp, Dasp };

inline const char* perturb_mode_name(PerturbMode m) {
  switch (m) {
    case PerturbMode::None: return "none";
    case PerturbMode::Stp: return "stp";
    case PerturbMode::Dasp: return "dasp";
  }
  return "?";
}

template <typename T>
struct PerturbParams {
  Tensor<T> std_weight;  // [2d, d]
  Tensor<T> std_bias;    // [d]
  Tensor<T> alpha_raw;   // [1]; alpha = sigmoid(alpha_raw) stays in (0,1)

  T alpha() const { return stable_sigmoid(alpha_raw[0]); }
};

template <typename T>
struct StdEstimate {
  Tensor<T> std;     // [B,d], nonnegative
  Tensor<T> inputs;  // concat(t, v), [B,2d]
  Tensor<T> pre;     // affine output before softplus
};

template <typename T>
StdEstimate<T> estimate_std_forward(const Tensor<T>& t, const Tensor<T>& v,
                                    const PerturbParams<T>& params) {
  if (t.rank() != 2 || !t.same_shape(v))
    throw ShapeError("estimate_std: t " + shape_str(t.shape()) + " vs v " + shape_str(v.shape()));
  const std::int64_t d = t.dim(1);
  if (params.std_weight.rank() != 2 || params.std_weight.dim(0) != 2 * d ||
      params.std_weight.dim(1) != d || params.std_bias.dim(0) != d)
    throw ShapeError("estimate_std: weight " + shape_str(params.std_weight.shape()) +
                     " incompatible with dim " + std::to_string(d));
  StdEstimate<T> out;
  const std::vector<const Tensor<T>*> parts{&t, &v};
  out.inputs = concat_cols(parts);
  out.pre = add_row_vector(matmul(out.inputs, params.std_weight), params.std_bias);
  out.std = softplus(out.pre);
  return out;
}

template <typename T>
struct StdBackwardResult {
  Tensor<T> d_text;
  Tensor<T> d_video;
  Tensor<T> d_weight;
  Tensor<T> d_bias;
};

template <typename T>
StdBackwardResult<T> estimate_std_backward(const StdEstimate<T>& fwd, const PerturbParams<T>& params,
                                           const Tensor<T>& d_std) {
  Tensor<T> dpre(fwd.pre.shape());
  for (std::int64_t i = 0; i < dpre.numel(); ++i)
    dpre[i] = d_std[i] * stable_sigmoid(fwd.pre[i]);
  StdBackwardResult<T> out;
  out.d_weight = matmul_at_b(fwd.inputs, dpre);
  out.d_bias = sum_rows(dpre);
  const Tensor<T> dx = matmul_a_bt(dpre, params.std_weight);
  const std::int64_t d = fwd.std.dim(1);
  out.d_text = slice_cols(dx, 0, d);
  out.d_video = slice_cols(dx, d, d);
  return out;
}

template <typename T>
void check_perturb_shapes(const Tensor<T>& t, const Tensor<T>& std) {
  if (t.rank() != 2 || !t.same_shape(std))
    throw ShapeError("perturb: t " + shape_str(t.shape()) + " vs std " + shape_str(std.shape()));
}

// One sigma per batch row, so the perturbation stays collinear with std.
template <typename T>
Tensor<T> draw_sigmas(std::int64_t rows, Rng& rng) {
  Tensor<T> s({rows});
  for (std::int64_t i = 0; i < rows; ++i) s[i] = rng.template normal_as<T>();
  return s;
}

template <typename T>
Tensor<T> perturb_stp(const Tensor<T>& t, const Tensor<T>& std, const Tensor<T>& sigmas) {
  check_perturb_shapes(t, std);
  Tensor<T> out(t.shape());
  const std::int64_t b = t.dim(0), d = t.dim(1);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t c = 0; c < d; ++c) out.at2(i, c) = t.at2(i, c) + sigmas[i] * std.at2(i, c);
  return out;
}

template <typename T>
Tensor<T> perturb_stp(const Tensor<T>& t, const Tensor<T>& std, Rng& rng) {
  const Tensor<T> sigmas = draw_sigmas<T>(t.dim(0), rng);
  return perturb_stp(t, std, sigmas);
}

template <typename T>
void check_alpha(T alpha) {
  if (!(alpha >= T(0) && alpha <= T(1)))
    throw NumericError("perturb: alpha " + std::to_string(static_cast<double>(alpha)) +
                       " outside [0,1]");
}

template <typename T>
Tensor<T> perturb_train(const Tensor<T>& t, const Tensor<T>& std, T alpha, const Tensor<T>& sigmas) {
  check_perturb_shapes(t, std);
  check_alpha(alpha);
  Tensor<T> out(t.shape());
  const std::int64_t b = t.dim(0), d = t.dim(1);
  for (std::int64_t i = 0; i < b; ++i) {
    const T coef = alpha * sigmas[i] + T(1) - alpha;
    for (std::int64_t c = 0; c < d; ++c) out.at2(i, c) = t.at2(i, c) + coef * std.at2(i, c);
  }
  return out;
}

template <typename T>
Tensor<T> perturb_train(const Tensor<T>& t, const Tensor<T>& std, T alpha, Rng& rng) {
  const Tensor<T> sigmas = draw_sigmas<T>(t.dim(0), rng);
  return perturb_train(t, std, alpha, sigmas);
}

// Deterministic single-pass form; bit-identical on repeated calls.
template <typename T>
Tensor<T> perturb_infer(const Tensor<T>& t, const Tensor<T>& std, T alpha) {
  check_perturb_shapes(t, std);
  check_alpha(alpha);
  Tensor<T> out(t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) out[i] = t[i] + alpha * std[i];
  return out;
}

// Boundary point of the training distribution's one-sigma shell.
template <typename T>
Tensor<T> support_embedding(const Tensor<T>& t, const Tensor<T>& std) {
  check_perturb_shapes(t, std);
  return add(t, std);
}

// Backward helpers. d_alpha is returned as a scalar contribution; callers
// accumulate and map through the sigmoid parameterization themselves.

template <typename T>
struct PerturbBackwardResult {
  Tensor<T> d_text;
  Tensor<T> d_std;
  T d_alpha = T(0);
};

template <typename T>
PerturbBackwardResult<T> perturb_stp_backward(const Tensor<T>& std, const Tensor<T>& sigmas,
                                              const Tensor<T>& d_out) {
  PerturbBackwardResult<T> r{d_out, Tensor<T>(std.shape()), T(0)};
  const std::int64_t b = std.dim(0), d = std.dim(1);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t c = 0; c < d; ++c) r.d_std.at2(i, c) = sigmas[i] * d_out.at2(i, c);
  return r;
}

template <typename T>
PerturbBackwardResult<T> perturb_train_backward(const Tensor<T>& std, T alpha,
                                                const Tensor<T>& sigmas, const Tensor<T>& d_out) {
  PerturbBackwardResult<T> r{d_out, Tensor<T>(std.shape()), T(0)};
  const std::int64_t b = std.dim(0), d = std.dim(1);
  for (std::int64_t i = 0; i < b; ++i) {
    const T coef = alpha * sigmas[i] + T(1) - alpha;
    T dot_row{};
    for (std::int64_t c = 0; c < d; ++c) {
      r.d_std.at2(i, c) = coef * d_out.at2(i, c);
      dot_row += d_out.at2(i, c) * std.at2(i, c);
    }
    r.d_alpha += (sigmas[i] - T(1)) * dot_row;
  }
  return r;
}

template <typename T>
PerturbBackwardResult<T> perturb_infer_backward(const Tensor<T>& std, T alpha, const Tensor<T>& d_out) {
  PerturbBackwardResult<T> r{d_out, scale(d_out, alpha), T(0)};
  for (std::int64_t i = 0; i < std.numel(); ++i) r.d_alpha += d_out[i] * std[i];
  return r;
}

template <typename T>
PerturbBackwardResult<T> support_embedding_backward(const Tensor<T>& d_out) {
  return {d_out, d_out, T(0)};
}

}  // namespace gaid
