#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "gaid/ops.hpp"
#include "gaid/tensor.hpp"

// Text-conditioned gated audio-visual fusion and the cross-attention
// aggregation of fused frames into a single video embedding. Every forward
// returns the cache its backward needs; backwards are exact for the
// computed graph and are checked against finite differences in the tests.

namespace gaid {

enum class Granularity { None, Sample, Frame, Token };

inline const char* granularity_name(Granularity g) {
  switch (g) {
    case Granularity::None: return "none";
    case Granularity::Sample: return "sample";
    case Granularity::Frame: return "frame";
    case Granularity::Token: return "token";
  }
  return "?";
}

template <typename T>
struct GateParams {
  Tensor<T> weight;  // [g_out, 3d]; g_out = 1 for sample/frame, d for token
  Tensor<T> bias;    // [g_out]
  Granularity granularity = Granularity::Frame;
};

template <typename T>
struct GateGrads {
  Tensor<T> weight;
  Tensor<T> bias;
};

// Gate values: [B] for sample, [B,F] for frame, [B,F,d] for token.
template <typename T>
struct GateResult {
  Tensor<T> values;
  // cache
  Tensor<T> inputs;     // concat rows fed to the gate affine map
  Tensor<T> flat;       // sigmoid outputs, [rows, g_out]
  std::int64_t batch = 0, frames = 0, dim = 0;
};

namespace detail {

template <typename T>
Tensor<T> mean_over_frames(const Tensor<T>& x) {  // [B,F,d] -> [B,d]
  const std::int64_t b = x.dim(0), f = x.dim(1), d = x.dim(2);
  Tensor<T> out({b, d});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < f; ++j)
      for (std::int64_t c = 0; c < d; ++c) out.at2(i, c) += x.at3(i, j, c);
  for (std::int64_t i = 0; i < b * d; ++i) out[i] /= static_cast<T>(f);
  return out;
}

template <typename T>
void check_gate_shapes(const Tensor<T>& f, const Tensor<T>& a, const Tensor<T>& t) {
  if (f.rank() != 3 || a.rank() != 3 || t.rank() != 2 || !f.same_shape(a) ||
      f.dim(0) != t.dim(0) || f.dim(2) != t.dim(1))
    throw ShapeError("gate: inconsistent shapes f=" + shape_str(f.shape()) + " a=" +
                     shape_str(a.shape()) + " t=" + shape_str(t.shape()));
}

}  // namespace detail

// g = sigmoid(W [f; a; t] + b). Concatenation order is (visual, audio, text).
// Sample granularity mean-pools f and a over frames before gating; token
// granularity emits one gate per channel.
template <typename T>
GateResult<T> gate_forward(const Tensor<T>& f, const Tensor<T>& a, const Tensor<T>& t,
                           const GateParams<T>& params) {
  detail::check_gate_shapes(f, a, t);
  const std::int64_t b = f.dim(0), fr = f.dim(1), d = f.dim(2);
  const std::int64_t g_out = params.granularity == Granularity::Token ? d : 1;
  if (params.weight.rank() != 2 || params.weight.dim(0) != g_out || params.weight.dim(1) != 3 * d ||
      params.bias.rank() != 1 || params.bias.dim(0) != g_out)
    throw ShapeError("gate: weight " + shape_str(params.weight.shape()) + " / bias " +
                     shape_str(params.bias.shape()) + " do not match dim " + std::to_string(d));

  GateResult<T> out;
  out.batch = b;
  out.frames = fr;
  out.dim = d;
  if (params.granularity == Granularity::Sample) {
    const Tensor<T> fp = detail::mean_over_frames(f);
    const Tensor<T> ap = detail::mean_over_frames(a);
    const std::vector<const Tensor<T>*> parts{&fp, &ap, &t};
    out.inputs = concat_cols(parts);  // [B, 3d]
  } else {
    Tensor<T> x({b * fr, 3 * d});
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t j = 0; j < fr; ++j) {
        const std::int64_t r = i * fr + j;
        for (std::int64_t c = 0; c < d; ++c) {
          x.at2(r, c) = f.at3(i, j, c);
          x.at2(r, d + c) = a.at3(i, j, c);
          x.at2(r, 2 * d + c) = t.at2(i, c);
        }
      }
    }
    out.inputs = std::move(x);
  }
  out.flat = sigmoid(add_row_vector(matmul_a_bt(out.inputs, params.weight), params.bias));
  switch (params.granularity) {
    case Granularity::Sample: out.values = out.flat.reshaped({b}); break;
    case Granularity::Frame: out.values = out.flat.reshaped({b, fr}); break;
    case Granularity::Token: out.values = out.flat.reshaped({b, fr, d}); break;
    case Granularity::None: throw ShapeError("gate: granularity none bypasses gating");
  }
  return out;
}

template <typename T>
struct GateBackwardResult {
  Tensor<T> d_frames;  // [B,F,d]
  Tensor<T> d_audio;   // [B,F,d]
  Tensor<T> d_text;    // [B,d]
  GateGrads<T> d_params;
};

template <typename T>
GateBackwardResult<T> gate_backward(const GateResult<T>& fwd, const GateParams<T>& params,
                                    const Tensor<T>& d_values) {
  const std::int64_t b = fwd.batch, fr = fwd.frames, d = fwd.dim;
  const Tensor<T> dflat = d_values.reshaped(fwd.flat.shape());
  Tensor<T> du(fwd.flat.shape());
  for (std::int64_t i = 0; i < du.numel(); ++i)
    du[i] = dflat[i] * fwd.flat[i] * (T(1) - fwd.flat[i]);

  GateBackwardResult<T> out;
  out.d_params.weight = matmul_at_b(du, fwd.inputs);
  out.d_params.bias = sum_rows(du);
  const Tensor<T> dx = matmul(du, params.weight);  // [rows, 3d]

  out.d_frames = Tensor<T>({b, fr, d});
  out.d_audio = Tensor<T>({b, fr, d});
  out.d_text = Tensor<T>({b, d});
  if (params.granularity == Granularity::Sample) {
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t c = 0; c < d; ++c) {
        const T df = dx.at2(i, c) / static_cast<T>(fr);
        const T da = dx.at2(i, d + c) / static_cast<T>(fr);
        for (std::int64_t j = 0; j < fr; ++j) {
          out.d_frames.at3(i, j, c) = df;
          out.d_audio.at3(i, j, c) = da;
        }
        out.d_text.at2(i, c) = dx.at2(i, 2 * d + c);
      }
    }
  } else {
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t j = 0; j < fr; ++j) {
        const std::int64_t r = i * fr + j;
        for (std::int64_t c = 0; c < d; ++c) {
          out.d_frames.at3(i, j, c) = dx.at2(r, c);
          out.d_audio.at3(i, j, c) = dx.at2(r, d + c);
          out.d_text.at2(i, c) += dx.at2(r, 2 * d + c);
        }
      }
    }
  }
  return out;
}

// v = g * a + (1 - g) * f, gates broadcast per granularity.
template <typename T>
Tensor<T> fuse_forward(const Tensor<T>& f, const Tensor<T>& a, const Tensor<T>& gates,
                       Granularity granularity) {
  if (f.rank() != 3 || !f.same_shape(a))
    throw ShapeError("fuse: f " + shape_str(f.shape()) + " vs a " + shape_str(a.shape()));
  const std::int64_t b = f.dim(0), fr = f.dim(1), d = f.dim(2);
  const Shape expected = granularity == Granularity::Sample ? Shape{b}
                         : granularity == Granularity::Frame ? Shape{b, fr}
                                                             : Shape{b, fr, d};
  if (granularity == Granularity::None || gates.shape() != expected)
    throw ShapeError("fuse: gate shape " + shape_str(gates.shape()) + " does not match " +
                     granularity_name(granularity) + " granularity for " + shape_str(f.shape()));
  auto gate_at = [&](std::int64_t i, std::int64_t j, std::int64_t c) -> T {
    switch (granularity) {
      case Granularity::Sample: return gates[i];
      case Granularity::Frame: return gates.at2(i, j);
      case Granularity::Token: return gates.at3(i, j, c);
      default: return T(0);
    }
  };
  Tensor<T> v({b, fr, d});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j)
      for (std::int64_t c = 0; c < d; ++c) {
        const T g = gate_at(i, j, c);
        v.at3(i, j, c) = g * a.at3(i, j, c) + (T(1) - g) * f.at3(i, j, c);
      }
  return v;
}

template <typename T>
struct FuseBackwardResult {
  Tensor<T> d_frames;
  Tensor<T> d_audio;
  Tensor<T> d_gates;  // shape of the gate values
};

template <typename T>
FuseBackwardResult<T> fuse_backward(const Tensor<T>& f, const Tensor<T>& a, const Tensor<T>& gates,
                                    Granularity granularity, const Tensor<T>& dv) {
  const std::int64_t b = f.dim(0), fr = f.dim(1), d = f.dim(2);
  FuseBackwardResult<T> out{Tensor<T>(f.shape()), Tensor<T>(a.shape()), Tensor<T>(gates.shape())};
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j)
      for (std::int64_t c = 0; c < d; ++c) {
        T g;
        switch (granularity) {
          case Granularity::Sample: g = gates[i]; break;
          case Granularity::Frame: g = gates.at2(i, j); break;
          default: g = gates.at3(i, j, c); break;
        }
        const T grad = dv.at3(i, j, c);
        out.d_frames.at3(i, j, c) = (T(1) - g) * grad;
        out.d_audio.at3(i, j, c) = g * grad;
        const T dg = grad * (a.at3(i, j, c) - f.at3(i, j, c));
        switch (granularity) {
          case Granularity::Sample: out.d_gates[i] += dg; break;
          case Granularity::Frame: out.d_gates.at2(i, j) += dg; break;
          default: out.d_gates.at3(i, j, c) = dg; break;
        }
      }
  return out;
}

template <typename T>
struct AttnParams {
  Tensor<T> query_w;  // [d,d]
  Tensor<T> key_w;
  Tensor<T> value_w;
  Tensor<T> out_w;
};

template <typename T>
struct AttnGrads {
  Tensor<T> query_w, key_w, value_w, out_w;
};

template <typename T>
struct AggregateResult {
  Tensor<T> embedding;  // [B,d], unit rows
  // cache
  Tensor<T> queries;      // [B,d]
  Tensor<T> keys;         // [B*F,d]
  Tensor<T> values;       // [B*F,d]
  Tensor<T> attn;         // [B,F] softmax weights before dropout
  Tensor<T> attn_used;    // [B,F] weights actually applied
  Tensor<T> context;      // [B,d]
  RowNormalized<T> norm;  // pre-normalization output and row norms
};

// Single-head cross-attention with the text embedding as query over fused
// frames, a residual frame mean, then L2 normalization:
//   y_b = normalize( softmax(q_b K^T / sqrt(d)) V W_o + mean_i v_{b,i} ).
// `attn_keep` is an optional {0,1} mask applied to the attention weights
// (inverted dropout); pass an empty tensor to disable.
template <typename T>
AggregateResult<T> aggregate_forward(const Tensor<T>& v, const Tensor<T>& t,
                                     const AttnParams<T>& params, const Tensor<T>& attn_keep,
                                     T dropout_rate) {
  if (v.rank() != 3 || t.rank() != 2 || v.dim(0) != t.dim(0) || v.dim(2) != t.dim(1))
    throw ShapeError("aggregate: inconsistent shapes v=" + shape_str(v.shape()) + " t=" +
                     shape_str(t.shape()));
  const std::int64_t b = v.dim(0), fr = v.dim(1), d = v.dim(2);
  const bool use_dropout = attn_keep.numel() > 0;
  if (use_dropout && !(attn_keep.rank() == 2 && attn_keep.dim(0) == b && attn_keep.dim(1) == fr))
    throw ShapeError("aggregate: attn_keep shape " + shape_str(attn_keep.shape()));

  const Tensor<T> v_flat = v.reshaped({b * fr, d});
  AggregateResult<T> out;
  out.queries = matmul(t, params.query_w);
  out.keys = matmul(v_flat, params.key_w);
  out.values = matmul(v_flat, params.value_w);

  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  Tensor<T> scores({b, fr});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j) {
      T acc{};
      for (std::int64_t c = 0; c < d; ++c) acc += out.queries.at2(i, c) * out.keys.at2(i * fr + j, c);
      scores.at2(i, j) = acc * inv_sqrt_d;
    }
  out.attn = softmax(scores, 1);
  out.attn_used = out.attn;
  if (use_dropout) {
    const T keep_scale = T(1) / (T(1) - dropout_rate);
    for (std::int64_t i = 0; i < out.attn_used.numel(); ++i)
      out.attn_used[i] = out.attn[i] * attn_keep[i] * keep_scale;
  }

  out.context = Tensor<T>({b, d});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j) {
      const T w = out.attn_used.at2(i, j);
      for (std::int64_t c = 0; c < d; ++c) out.context.at2(i, c) += w * out.values.at2(i * fr + j, c);
    }

  Tensor<T> pre = matmul(out.context, params.out_w);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t c = 0; c < d; ++c) {
      T acc{};
      for (std::int64_t j = 0; j < fr; ++j) acc += v.at3(i, j, c);
      pre.at2(i, c) += acc / static_cast<T>(fr);
    }
  out.norm = l2_normalize_rows(pre);
  out.embedding = out.norm.values;
  return out;
}

template <typename T>
struct AggregateBackwardResult {
  Tensor<T> d_fused;  // [B,F,d]
  Tensor<T> d_text;   // [B,d]
  AttnGrads<T> d_params;
};

template <typename T>
AggregateBackwardResult<T> aggregate_backward(const Tensor<T>& v, const Tensor<T>& t,
                                              const AttnParams<T>& params,
                                              const Tensor<T>& attn_keep, T dropout_rate,
                                              const AggregateResult<T>& fwd, const Tensor<T>& dy) {
  const std::int64_t b = v.dim(0), fr = v.dim(1), d = v.dim(2);
  const bool use_dropout = attn_keep.numel() > 0;
  const Tensor<T> v_flat = v.reshaped({b * fr, d});

  const Tensor<T> dpre = l2_normalize_rows_backward(fwd.norm, dy);

  // pre = context W_o + frame mean
  AggregateBackwardResult<T> out;
  out.d_params.out_w = matmul_at_b(fwd.context, dpre);
  Tensor<T> dcontext = matmul_a_bt(dpre, params.out_w);
  out.d_fused = Tensor<T>({b, fr, d});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j)
      for (std::int64_t c = 0; c < d; ++c)
        out.d_fused.at3(i, j, c) = dpre.at2(i, c) / static_cast<T>(fr);

  // context = sum_j attn_used * values
  Tensor<T> d_attn_used({b, fr});
  Tensor<T> d_values({b * fr, d});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j) {
      T acc{};
      const T w = fwd.attn_used.at2(i, j);
      for (std::int64_t c = 0; c < d; ++c) {
        acc += dcontext.at2(i, c) * fwd.values.at2(i * fr + j, c);
        d_values.at2(i * fr + j, c) = w * dcontext.at2(i, c);
      }
      d_attn_used.at2(i, j) = acc;
    }

  Tensor<T> d_attn = d_attn_used;
  if (use_dropout) {
    const T keep_scale = T(1) / (T(1) - dropout_rate);
    for (std::int64_t i = 0; i < d_attn.numel(); ++i) d_attn[i] = d_attn_used[i] * attn_keep[i] * keep_scale;
  }

  // softmax backward per row: ds = p (dp - sum(dp * p))
  Tensor<T> d_scores({b, fr});
  for (std::int64_t i = 0; i < b; ++i) {
    T inner{};
    for (std::int64_t j = 0; j < fr; ++j) inner += d_attn.at2(i, j) * fwd.attn.at2(i, j);
    for (std::int64_t j = 0; j < fr; ++j)
      d_scores.at2(i, j) = fwd.attn.at2(i, j) * (d_attn.at2(i, j) - inner);
  }

  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  Tensor<T> d_queries({b, d});
  Tensor<T> d_keys({b * fr, d});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < fr; ++j) {
      const T s = d_scores.at2(i, j) * inv_sqrt_d;
      for (std::int64_t c = 0; c < d; ++c) {
        d_queries.at2(i, c) += s * fwd.keys.at2(i * fr + j, c);
        d_keys.at2(i * fr + j, c) = s * fwd.queries.at2(i, c);
      }
    }

  out.d_text = matmul_a_bt(d_queries, params.query_w);
  out.d_params.query_w = matmul_at_b(t, d_queries);
  out.d_params.key_w = matmul_at_b(v_flat, d_keys);
  out.d_params.value_w = matmul_at_b(v_flat, d_values);

  const Tensor<T> dv_from_k = matmul_a_bt(d_keys, params.key_w);
  const Tensor<T> dv_from_v = matmul_a_bt(d_values, params.value_w);
  for (std::int64_t r = 0; r < b * fr; ++r)
    for (std::int64_t c = 0; c < d; ++c)
      out.d_fused[r * d + c] += dv_from_k.at2(r, c) + dv_from_v.at2(r, c);
  return out;
}

}  // namespace gaid
