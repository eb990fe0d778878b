#pragma once

#include <cmath>
#include <cstdint>

#include "gaid/ops.hpp"
#include "gaid/tensor.hpp"

// Temperature-scaled similarity scoring and the dual-branch contrastive
// objective: a perturbation branch on the perturbed text embeddings and a
// support branch on the boundary embeddings, combined as
// total = l_pert + lambda * l_sup.

namespace gaid {

template <typename T>
struct SimilarityMatrix {
  Tensor<T> scores;  // [B_t, B_v]
  T temperature;     // exp(log_temperature)
};

// scores_ij = exp(log_temperature) * (T_i . V_j)
template <typename T>
SimilarityMatrix<T> similarity(const Tensor<T>& text, const Tensor<T>& video, T log_temperature) {
  if (text.rank() != 2 || video.rank() != 2 || text.dim(1) != video.dim(1))
    throw ShapeError("similarity: text " + shape_str(text.shape()) + " vs video " +
                     shape_str(video.shape()));
  const T tau = std::exp(log_temperature);
  return {scale(matmul_a_bt(text, video), tau), tau};
}

// mean_i of -log softmax_row(S)_ii, numerically via max subtraction.
template <typename T>
T infonce_t2v(const Tensor<T>& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1))
    throw ShapeError("infonce: non-square scores " + shape_str(scores.shape()));
  const std::int64_t b = scores.dim(0);
  T total{};
  for (std::int64_t i = 0; i < b; ++i) {
    T mx = scores.at2(i, 0);
    for (std::int64_t j = 1; j < b; ++j) mx = std::max(mx, scores.at2(i, j));
    T lse{};
    for (std::int64_t j = 0; j < b; ++j) lse += std::exp(scores.at2(i, j) - mx);
    total += std::log(lse) - (scores.at2(i, i) - mx);
  }
  return total / static_cast<T>(b);
}

template <typename T>
T infonce_v2t(const Tensor<T>& scores) {
  return infonce_t2v(transpose(scores));
}

// 0.5 * (L_{t->v} + L_{v->t}); diagonal holds the positive pairs.
template <typename T>
T infonce_bidirectional(const Tensor<T>& scores) {
  return (infonce_t2v(scores) + infonce_v2t(scores)) / T(2);
}

// dL/dS for L = infonce_bidirectional(S):
//   0.5/B * [(softmax_row(S) - I) + (softmax_col(S) - I)]
template <typename T>
Tensor<T> infonce_bidirectional_backward(const Tensor<T>& scores) {
  const std::int64_t b = scores.dim(0);
  const Tensor<T> p_row = softmax(scores, 1);
  const Tensor<T> p_col = softmax(scores, 0);
  Tensor<T> ds(scores.shape());
  const T inv = T(1) / (T(2) * static_cast<T>(b));
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < b; ++j) {
      const T delta = i == j ? T(1) : T(0);
      ds.at2(i, j) = inv * (p_row.at2(i, j) - delta + p_col.at2(i, j) - delta);
    }
  return ds;
}

template <typename T>
struct SimilarityBackwardResult {
  Tensor<T> d_text;
  Tensor<T> d_video;
  T d_log_temperature;
};

template <typename T>
SimilarityBackwardResult<T> similarity_backward(const Tensor<T>& text, const Tensor<T>& video,
                                                const SimilarityMatrix<T>& sim, const Tensor<T>& ds) {
  SimilarityBackwardResult<T> out;
  out.d_text = scale(matmul(ds, video), sim.temperature);
  out.d_video = scale(matmul_at_b(ds, text), sim.temperature);
  T acc{};
  for (std::int64_t i = 0; i < ds.numel(); ++i) acc += ds[i] * sim.scores[i];
  out.d_log_temperature = acc;  // dS/dlog_tau = S
  return out;
}

template <typename T>
struct LossBreakdown {
  T l_pert{};
  T l_sup{};
  T lambda{};
  T total{};
};

template <typename T>
LossBreakdown<T> total_loss(const Tensor<T>& t_pert, const Tensor<T>& t_sup, const Tensor<T>& video,
                            T lambda, T log_temperature) {
  LossBreakdown<T> out;
  out.lambda = lambda;
  out.l_pert = infonce_bidirectional(similarity(t_pert, video, log_temperature).scores);
  out.l_sup = infonce_bidirectional(similarity(t_sup, video, log_temperature).scores);
  out.total = out.l_pert + lambda * out.l_sup;
  return out;
}

}  // namespace gaid
