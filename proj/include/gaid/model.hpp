#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gaid/dataset.hpp"
#include "gaid/fusion.hpp"
#include "gaid/objective.hpp"
#include "gaid/ops.hpp"
#include "gaid/perturb.hpp"
#include "gaid/rng.hpp"
#include "gaid/tensor.hpp"

// The trainable model: optional input projections, text-conditioned gated
// fusion, cross-attention aggregation, std estimation, perturbation, and the
// dual-branch loss. forward_backward composes the per-op backward passes into
// exact analytic gradients for the sampled graph (sigma draws and dropout
// masks are recorded in a NoiseRecord and replayed bit-identically).

namespace gaid {

struct ModelDims {
  std::int64_t d_model = 512;
  std::int64_t d_visual = 512;
  std::int64_t d_audio = 512;
  std::int64_t d_text = 512;
};

struct GraphConfig {
  Granularity granularity = Granularity::Frame;
  PerturbMode perturb = PerturbMode::Dasp;
  double lambda = 0.8;
  double dropout = 0.0;  // attention-weight dropout; applied only in training
  bool training = true;
};

template <typename T>
struct Projection {
  Tensor<T> weight;  // [d_in, d_model]
  Tensor<T> bias;    // [d_model]
};

template <typename T>
struct ModelParams {
  std::optional<Projection<T>> visual_proj, audio_proj, text_proj;
  GateParams<T> gate;
  AttnParams<T> attn;
  PerturbParams<T> perturb;
  Tensor<T> log_temperature;  // [1]

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    auto cast_proj = [](const std::optional<Projection<T>>& p) -> std::optional<Projection<U>> {
      if (!p) return std::nullopt;
      return Projection<U>{p->weight.template cast<U>(), p->bias.template cast<U>()};
    };
    out.visual_proj = cast_proj(visual_proj);
    out.audio_proj = cast_proj(audio_proj);
    out.text_proj = cast_proj(text_proj);
    out.gate = {gate.weight.template cast<U>(), gate.bias.template cast<U>(), gate.granularity};
    out.attn = {attn.query_w.template cast<U>(), attn.key_w.template cast<U>(),
                attn.value_w.template cast<U>(), attn.out_w.template cast<U>()};
    out.perturb = {perturb.std_weight.template cast<U>(), perturb.std_bias.template cast<U>(),
                   perturb.alpha_raw.template cast<U>()};
    out.log_temperature = log_temperature.template cast<U>();
    return out;
  }
};

// Gradients share the parameter container layout.
template <typename T>
using GradBundle = ModelParams<T>;

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
  bool projection_group;  // separate learning rate
  bool decay;             // decoupled weight decay applies
};

// Stable traversal order; defines flattening, checkpoint and Adam state layout.
template <typename T>
std::vector<ParamRef<T>> param_refs(ModelParams<T>& p) {
  std::vector<ParamRef<T>> refs;
  auto add_proj = [&](std::optional<Projection<T>>& proj, const char* base) {
    if (!proj) return;
    refs.push_back({std::string(base) + ".weight", &proj->weight, true, true});
    refs.push_back({std::string(base) + ".bias", &proj->bias, true, false});
  };
  add_proj(p.visual_proj, "visual_proj");
  add_proj(p.audio_proj, "audio_proj");
  add_proj(p.text_proj, "text_proj");
  refs.push_back({"gate.weight", &p.gate.weight, false, false});
  refs.push_back({"gate.bias", &p.gate.bias, false, false});
  refs.push_back({"attn.query_w", &p.attn.query_w, false, true});
  refs.push_back({"attn.key_w", &p.attn.key_w, false, true});
  refs.push_back({"attn.value_w", &p.attn.value_w, false, true});
  refs.push_back({"attn.out_w", &p.attn.out_w, false, true});
  refs.push_back({"perturb.std_weight", &p.perturb.std_weight, false, false});
  refs.push_back({"perturb.std_bias", &p.perturb.std_bias, false, false});
  refs.push_back({"perturb.alpha_raw", &p.perturb.alpha_raw, false, false});
  refs.push_back({"log_temperature", &p.log_temperature, false, false});
  return refs;
}

template <typename T>
std::int64_t param_count(const ModelParams<T>& p) {
  auto refs = param_refs(const_cast<ModelParams<T>&>(p));
  std::int64_t n = 0;
  for (const auto& r : refs) n += r.tensor->numel();
  return n;
}

template <typename T>
std::vector<T> flatten_params(const ModelParams<T>& p) {
  auto refs = param_refs(const_cast<ModelParams<T>&>(p));
  std::vector<T> out;
  for (const auto& r : refs)
    for (std::int64_t i = 0; i < r.tensor->numel(); ++i) out.push_back((*r.tensor)[i]);
  return out;
}

template <typename T>
void unflatten_params(ModelParams<T>& p, const std::vector<T>& flat) {
  auto refs = param_refs(p);
  std::size_t k = 0;
  for (auto& r : refs)
    for (std::int64_t i = 0; i < r.tensor->numel(); ++i) (*r.tensor)[i] = flat[k++];
  if (k != flat.size())
    throw ShapeError("unflatten_params: vector length " + std::to_string(flat.size()) +
                     " does not match parameter count " + std::to_string(k));
}

template <typename T>
GradBundle<T> zero_grads_like(const ModelParams<T>& p) {
  GradBundle<T> g = p;
  auto refs = param_refs(g);
  for (auto& r : refs)
    for (std::int64_t i = 0; i < r.tensor->numel(); ++i) (*r.tensor)[i] = T(0);
  return g;
}

template <typename T>
ModelParams<T> init_params(const ModelDims& dims, Granularity granularity, double init_temperature,
                           std::uint64_t seed) {
  Rng rng = Rng::substream(seed, 0x9a1d);
  const std::int64_t d = dims.d_model;
  auto randn = [&](Shape shape, double stddev) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(stddev * rng.normal());
    return t;
  };

  ModelParams<T> p;
  auto maybe_proj = [&](std::int64_t d_in) -> std::optional<Projection<T>> {
    if (d_in == d) return std::nullopt;
    return Projection<T>{randn({d_in, d}, 1.0 / std::sqrt(static_cast<double>(d_in))),
                         Tensor<T>({d})};
  };
  p.visual_proj = maybe_proj(dims.d_visual);
  p.audio_proj = maybe_proj(dims.d_audio);
  p.text_proj = maybe_proj(dims.d_text);

  const std::int64_t g_out = granularity == Granularity::Token ? d : 1;
  p.gate.weight = randn({g_out, 3 * d}, 0.02);
  p.gate.bias = Tensor<T>({g_out});  // gates start at 0.5
  p.gate.granularity = granularity;

  const double attn_std = 1.0 / std::sqrt(static_cast<double>(d));
  p.attn.query_w = randn({d, d}, attn_std);
  p.attn.key_w = randn({d, d}, attn_std);
  p.attn.value_w = randn({d, d}, attn_std);
  p.attn.out_w = randn({d, d}, 0.02 * attn_std);  // near-identity start: residual mean dominates

  p.perturb.std_weight = randn({2 * d, d}, 0.02);
  p.perturb.std_bias = Tensor<T>::full({d}, T(-2));  // softplus(-2): small initial std
  p.perturb.alpha_raw = Tensor<T>::scalar(T(0));     // alpha starts at 0.5
  p.log_temperature = Tensor<T>::scalar(static_cast<T>(std::log(init_temperature)));
  return p;
}

template <typename T>
struct Batch {
  Tensor<T> frames;  // [B,F,d_v]
  Tensor<T> audio;   // [B,F,d_a]
  Tensor<T> text;    // [B,d_t]
};

template <typename T>
Batch<T> make_batch(const Dataset<T>& data, const std::vector<std::int64_t>& query_indices) {
  if (query_indices.empty()) throw DataError("make_batch: empty index list");
  const std::int64_t b = static_cast<std::int64_t>(query_indices.size());
  const std::int64_t f = data.frames(), dv = data.visual_dim(), da = data.audio_dim(),
                     dt = data.text_dim();
  Batch<T> out{Tensor<T>({b, f, dv}), Tensor<T>({b, f, da}), Tensor<T>({b, dt})};
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int64_t q = query_indices[static_cast<std::size_t>(i)];
    const auto& video = data.videos[static_cast<std::size_t>(data.query_video[static_cast<std::size_t>(q)])];
    const auto& query = data.queries[static_cast<std::size_t>(q)];
    for (std::int64_t j = 0; j < f; ++j) {
      for (std::int64_t c = 0; c < dv; ++c) out.frames.at3(i, j, c) = video.frames.at2(j, c);
      for (std::int64_t c = 0; c < da; ++c) out.audio.at3(i, j, c) = video.audio.at2(j, c);
    }
    for (std::int64_t c = 0; c < dt; ++c) out.text.at2(i, c) = query.embedding[c];
  }
  return out;
}

// Recorded randomness for one step: per-row sigma draws, then the attention
// keep mask. Replaying the record makes forward_backward a pure function.
template <typename T>
struct NoiseRecord {
  Tensor<T> sigmas;     // [B]
  Tensor<T> attn_keep;  // [B,F] of {0,1}, or empty when dropout is off
};

template <typename T>
NoiseRecord<T> sample_noise(std::int64_t batch, std::int64_t frames, const GraphConfig& cfg,
                            Rng& rng) {
  NoiseRecord<T> out;
  out.sigmas = draw_sigmas<T>(batch, rng);
  if (cfg.training && cfg.dropout > 0.0) {
    out.attn_keep = Tensor<T>({batch, frames});
    for (std::int64_t i = 0; i < out.attn_keep.numel(); ++i)
      out.attn_keep[i] = rng.uniform() >= cfg.dropout ? T(1) : T(0);
  }
  return out;
}

template <typename T>
struct ForwardBackwardResult {
  LossBreakdown<T> loss;
  GradBundle<T> grads;
  Tensor<T> video_embeddings;  // [B,d]
  Tensor<T> gates;             // gate values for this batch; empty when granularity is none
};

namespace detail {

template <typename T>
Tensor<T> apply_projection_3d(const Tensor<T>& x, const std::optional<Projection<T>>& proj) {
  if (!proj) return x;
  const std::int64_t b = x.dim(0), f = x.dim(1), din = x.dim(2);
  const Tensor<T> flat = x.reshaped({b * f, din});
  return add_row_vector(matmul(flat, proj->weight), proj->bias).reshaped({b, f, proj->weight.dim(1)});
}

template <typename T>
Tensor<T> apply_projection_2d(const Tensor<T>& x, const std::optional<Projection<T>>& proj) {
  if (!proj) return x;
  return add_row_vector(matmul(x, proj->weight), proj->bias);
}

template <typename T>
void projection_backward_3d(const Tensor<T>& x, const std::optional<Projection<T>>& proj,
                            const Tensor<T>& dy, std::optional<Projection<T>>& grad) {
  if (!proj) return;
  const std::int64_t b = x.dim(0), f = x.dim(1), din = x.dim(2);
  const Tensor<T> x_flat = x.reshaped({b * f, din});
  const Tensor<T> dy_flat = dy.reshaped({b * f, dy.dim(2)});
  add_inplace(grad->weight, matmul_at_b(x_flat, dy_flat));
  add_inplace(grad->bias, sum_rows(dy_flat));
}

template <typename T>
void projection_backward_2d(const Tensor<T>& x, const std::optional<Projection<T>>& proj,
                            const Tensor<T>& dy, std::optional<Projection<T>>& grad) {
  if (!proj) return;
  add_inplace(grad->weight, matmul_at_b(x, dy));
  add_inplace(grad->bias, sum_rows(dy));
}

}  // namespace detail

template <typename T>
ForwardBackwardResult<T> forward_backward(const Batch<T>& batch, const ModelParams<T>& params,
                                          const NoiseRecord<T>& noise, const GraphConfig& cfg) {
  const std::int64_t b = batch.frames.dim(0);
  const T lambda = cfg.perturb == PerturbMode::None ? T(0) : static_cast<T>(cfg.lambda);
  const T dropout = static_cast<T>(cfg.dropout);
  const Tensor<T> no_keep;
  const Tensor<T>& keep = (cfg.training && noise.attn_keep.numel() > 0) ? noise.attn_keep : no_keep;

  // Forward.
  const Tensor<T> f3 = detail::apply_projection_3d(batch.frames, params.visual_proj);
  const Tensor<T> a3 = detail::apply_projection_3d(batch.audio, params.audio_proj);
  const Tensor<T> t0 = detail::apply_projection_2d(batch.text, params.text_proj);
  const RowNormalized<T> tn = l2_normalize_rows(t0);
  const Tensor<T>& text = tn.values;

  const bool gated = cfg.granularity != Granularity::None;
  GateResult<T> gates;
  Tensor<T> fused;
  if (gated) {
    gates = gate_forward(f3, a3, text, params.gate);
    fused = fuse_forward(f3, a3, gates.values, cfg.granularity);
  } else {
    fused = f3;
  }

  const AggregateResult<T> agg = aggregate_forward(fused, text, params.attn, keep, dropout);
  const Tensor<T>& video = agg.embedding;

  const bool perturbed = cfg.perturb != PerturbMode::None;
  StdEstimate<T> std_est;
  Tensor<T> t_pert, t_sup;
  T alpha = T(0);
  if (perturbed) {
    std_est = estimate_std_forward(text, video, params.perturb);
    alpha = params.perturb.alpha();
    t_pert = cfg.perturb == PerturbMode::Dasp
                 ? perturb_train(text, std_est.std, alpha, noise.sigmas)
                 : perturb_stp(text, std_est.std, noise.sigmas);
    t_sup = support_embedding(text, std_est.std);
  } else {
    t_pert = text;
    t_sup = text;
  }

  const T log_tau = params.log_temperature[0];
  const SimilarityMatrix<T> sim_pert = similarity(t_pert, video, log_tau);
  const SimilarityMatrix<T> sim_sup = similarity(t_sup, video, log_tau);

  ForwardBackwardResult<T> out;
  out.loss.lambda = lambda;
  out.loss.l_pert = infonce_bidirectional(sim_pert.scores);
  out.loss.l_sup = infonce_bidirectional(sim_sup.scores);
  out.loss.total = out.loss.l_pert + lambda * out.loss.l_sup;
  out.video_embeddings = video;
  if (gated) out.gates = gates.values;

  if (!std::isfinite(static_cast<double>(out.loss.total))) {
    const std::pair<const char*, const Tensor<T>*> stages[] = {
        {"projected_frames", &f3},   {"projected_audio", &a3}, {"normalized_text", &text},
        {"gates", &gates.values},    {"fused_frames", &fused}, {"video_embedding", &video},
        {"std_estimate", &std_est.std}, {"perturbed_text", &t_pert}, {"support_text", &t_sup},
        {"perturbation_scores", &sim_pert.scores}, {"support_scores", &sim_sup.scores}};
    for (const auto& [name, tensor] : stages)
      if (tensor->numel() > 0 && !all_finite(*tensor))
        throw NumericError(std::string("non-finite loss; first non-finite intermediate: ") + name);
    throw NumericError("non-finite loss with finite intermediates");
  }

  // Backward.
  GradBundle<T> g = zero_grads_like(params);
  Tensor<T> d_text(text.shape());
  Tensor<T> d_video(video.shape());
  T d_log_tau{};

  {
    const Tensor<T> ds_pert = infonce_bidirectional_backward(sim_pert.scores);
    const auto sb = similarity_backward(t_pert, video, sim_pert, ds_pert);
    Tensor<T> d_tpert = sb.d_text;
    add_inplace(d_video, sb.d_video);
    d_log_tau += sb.d_log_temperature;

    Tensor<T> d_tsup({b, text.dim(1)});
    if (lambda != T(0)) {
      const Tensor<T> ds_sup = scale(infonce_bidirectional_backward(sim_sup.scores), lambda);
      const auto sb2 = similarity_backward(t_sup, video, sim_sup, ds_sup);
      d_tsup = sb2.d_text;
      add_inplace(d_video, sb2.d_video);
      d_log_tau += sb2.d_log_temperature;
    }

    if (perturbed) {
      Tensor<T> d_std(std_est.std.shape());
      T d_alpha{};
      const auto pb = cfg.perturb == PerturbMode::Dasp
                          ? perturb_train_backward(std_est.std, alpha, noise.sigmas, d_tpert)
                          : perturb_stp_backward(std_est.std, noise.sigmas, d_tpert);
      add_inplace(d_text, pb.d_text);
      add_inplace(d_std, pb.d_std);
      d_alpha += pb.d_alpha;

      const auto sup_b = support_embedding_backward(d_tsup);
      add_inplace(d_text, sup_b.d_text);
      add_inplace(d_std, sup_b.d_std);

      const auto eb = estimate_std_backward(std_est, params.perturb, d_std);
      add_inplace(d_text, eb.d_text);
      add_inplace(d_video, eb.d_video);
      add_inplace(g.perturb.std_weight, eb.d_weight);
      add_inplace(g.perturb.std_bias, eb.d_bias);
      g.perturb.alpha_raw[0] += d_alpha * alpha * (T(1) - alpha);
    } else {
      add_inplace(d_text, d_tpert);
      add_inplace(d_text, d_tsup);
    }
  }

  g.log_temperature[0] = d_log_tau;

  const auto agg_b = aggregate_backward(fused, text, params.attn, keep, dropout, agg, d_video);
  add_inplace(d_text, agg_b.d_text);
  add_inplace(g.attn.query_w, agg_b.d_params.query_w);
  add_inplace(g.attn.key_w, agg_b.d_params.key_w);
  add_inplace(g.attn.value_w, agg_b.d_params.value_w);
  add_inplace(g.attn.out_w, agg_b.d_params.out_w);

  Tensor<T> d_f3, d_a3;
  if (gated) {
    const auto fb = fuse_backward(f3, a3, gates.values, cfg.granularity, agg_b.d_fused);
    const auto gb = gate_backward(gates, params.gate, fb.d_gates);
    d_f3 = fb.d_frames;
    add_inplace(d_f3, gb.d_frames);
    d_a3 = fb.d_audio;
    add_inplace(d_a3, gb.d_audio);
    add_inplace(d_text, gb.d_text);
    add_inplace(g.gate.weight, gb.d_params.weight);
    add_inplace(g.gate.bias, gb.d_params.bias);
  } else {
    d_f3 = agg_b.d_fused;
    d_a3 = Tensor<T>(a3.shape());
  }

  const Tensor<T> d_t0 = l2_normalize_rows_backward(tn, d_text);
  detail::projection_backward_3d(batch.frames, params.visual_proj, d_f3, g.visual_proj);
  detail::projection_backward_3d(batch.audio, params.audio_proj, d_a3, g.audio_proj);
  detail::projection_backward_2d(batch.text, params.text_proj, d_t0, g.text_proj);

  out.grads = std::move(g);
  return out;
}

}  // namespace gaid
