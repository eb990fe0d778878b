#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "gaid/model.hpp"

// Retrieval evaluation: rank metrics with pessimistic tie handling, dual
// softmax post-processing, and the scoring harness for the three inference
// modes. A "scoring pass" runs the full per-pair pipeline (std estimation,
// perturbation, dot products) for one query row; the deterministic mode needs
// one pass per query, the stochastic baseline one per draw.

namespace gaid {

struct RetrievalMetrics {
  double r1 = 0, r5 = 0, r10 = 0;  // percentages
  double mdr = 0, mnr = 0;
};

struct CostReport {
  std::int64_t forward_passes_per_query = 1;
  double wall_time_s = 0.0;
};

// Rank of query q: 1 + number of competitor columns scoring >= the true
// column (ties count against us).
RetrievalMetrics rank_metrics(const TensorD& sim, const std::vector<std::int64_t>& truth);
std::vector<std::int64_t> t2v_ranks(const TensorD& sim, const std::vector<std::int64_t>& truth);

// Video-to-text on the transposed matrix; with several true captions per
// video the best-ranked one counts.
RetrievalMetrics v2t_metrics(const TensorD& sim, const std::vector<std::int64_t>& truth);

// S'_{qv} = S_{qv} * softmax over q of (beta * S_{.v}).
TensorD dsl(const TensorD& sim, double beta = 100.0);

struct EvalOptions {
  PerturbMode mode = PerturbMode::Dasp;
  std::int64_t stp_samples = 20;
  bool apply_dsl = true;
  double dsl_beta = 100.0;
  std::uint64_t seed = 0;
  std::optional<double> forced_sigma;  // test hook: fixes every sigma draw
};

struct EvalReport {
  RetrievalMetrics t2v, v2t;
  std::optional<RetrievalMetrics> t2v_dsl, v2t_dsl;
  CostReport cost;
  TensorD scores;                    // final raw scores, [Q,V]
  std::vector<std::int64_t> ranks;   // per-query t2v ranks on raw scores
};

namespace detail {

// Video embeddings are text-conditioned; the cached gallery embedding for a
// video uses its paired caption (the first manifest item naming it), exactly
// as during training.
template <typename T>
std::vector<std::int64_t> video_caption_index(const Dataset<T>& data) {
  std::vector<std::int64_t> cap(data.videos.size(), -1);
  for (std::size_t q = 0; q < data.queries.size(); ++q) {
    const std::int64_t v = data.query_video[q];
    if (cap[static_cast<std::size_t>(v)] < 0) cap[static_cast<std::size_t>(v)] = static_cast<std::int64_t>(q);
  }
  for (std::size_t v = 0; v < cap.size(); ++v)
    if (cap[v] < 0) throw DataError("evaluate: video " + data.videos[v].id + " has no caption");
  return cap;
}

}  // namespace detail

template <typename T>
struct EncodedDataset {
  Tensor<T> text;    // [Q,d] normalized projected text
  Tensor<T> videos;  // [V,d] unit video embeddings
  Tensor<T> gates;   // gate values per video batch; empty for granularity none
};

template <typename T>
EncodedDataset<T> encode_dataset(const ModelParams<T>& params, const Dataset<T>& data,
                                 Granularity granularity) {
  const std::int64_t v_count = static_cast<std::int64_t>(data.videos.size());
  const std::int64_t q_count = static_cast<std::int64_t>(data.queries.size());
  const std::int64_t f = data.frames();

  EncodedDataset<T> out;
  {  // all query texts
    Tensor<T> raw({q_count, data.text_dim()});
    for (std::int64_t q = 0; q < q_count; ++q)
      for (std::int64_t c = 0; c < data.text_dim(); ++c)
        raw.at2(q, c) = data.queries[static_cast<std::size_t>(q)].embedding[c];
    const Tensor<T> projected = detail::apply_projection_2d(raw, params.text_proj);
    out.text = l2_normalize_rows(projected).values;
  }

  const auto caption = detail::video_caption_index(data);
  Tensor<T> frames({v_count, f, data.visual_dim()});
  Tensor<T> audio({v_count, f, data.audio_dim()});
  Tensor<T> cond_text({v_count, data.text_dim()});
  for (std::int64_t v = 0; v < v_count; ++v) {
    const auto& sample = data.videos[static_cast<std::size_t>(v)];
    for (std::int64_t j = 0; j < f; ++j) {
      for (std::int64_t c = 0; c < data.visual_dim(); ++c) frames.at3(v, j, c) = sample.frames.at2(j, c);
      for (std::int64_t c = 0; c < data.audio_dim(); ++c) audio.at3(v, j, c) = sample.audio.at2(j, c);
    }
    const auto& q = data.queries[static_cast<std::size_t>(caption[static_cast<std::size_t>(v)])];
    for (std::int64_t c = 0; c < data.text_dim(); ++c) cond_text.at2(v, c) = q.embedding[c];
  }
  const Tensor<T> f3 = detail::apply_projection_3d(frames, params.visual_proj);
  const Tensor<T> a3 = detail::apply_projection_3d(audio, params.audio_proj);
  const Tensor<T> t0 = detail::apply_projection_2d(cond_text, params.text_proj);
  const Tensor<T> tn = l2_normalize_rows(t0).values;

  Tensor<T> fused;
  if (granularity != Granularity::None) {
    const GateResult<T> gates = gate_forward(f3, a3, tn, params.gate);
    fused = fuse_forward(f3, a3, gates.values, granularity);
    out.gates = gates.values;
  } else {
    fused = f3;
  }
  const Tensor<T> no_dropout;
  out.videos = aggregate_forward(fused, tn, params.attn, no_dropout, T(0)).embedding;
  return out;
}

// One scoring pass for query row `t_q` against all gallery embeddings:
// estimate per-pair std, shift the text by coef * std, take scaled dots.
template <typename T>
void perturbed_row_scores(const Tensor<T>& videos, std::span<const T> t_q, T coef, T tau,
                          const ModelParams<T>& params, std::vector<T>& scratch_scores) {
  const std::int64_t v_count = videos.dim(0), d = videos.dim(1);
  Tensor<T> tiled({v_count, d});
  for (std::int64_t v = 0; v < v_count; ++v)
    for (std::int64_t c = 0; c < d; ++c) tiled.at2(v, c) = t_q[static_cast<std::size_t>(c)];
  const StdEstimate<T> est = estimate_std_forward(tiled, videos, params.perturb);
  scratch_scores.assign(static_cast<std::size_t>(v_count), T(0));
  for (std::int64_t v = 0; v < v_count; ++v) {
    T acc{};
    for (std::int64_t c = 0; c < d; ++c)
      acc += (t_q[static_cast<std::size_t>(c)] + coef * est.std.at2(v, c)) * videos.at2(v, c);
    scratch_scores[static_cast<std::size_t>(v)] = tau * acc;
  }
}

template <typename T>
EvalReport evaluate(const ModelParams<T>& params, const Dataset<T>& data, Granularity granularity,
                    const EvalOptions& opts) {
  if (data.queries.empty() || data.videos.empty()) throw DataError("evaluate: empty dataset");
  const auto t_start = std::chrono::steady_clock::now();
  const EncodedDataset<T> enc = encode_dataset(params, data, granularity);
  const std::int64_t q_count = enc.text.dim(0), v_count = enc.videos.dim(0), d = enc.text.dim(1);
  const T tau = std::exp(params.log_temperature[0]);
  const T alpha = params.perturb.alpha();

  TensorD scores({q_count, v_count});
  std::vector<T> pass_scores;
  std::int64_t passes = 1;
  switch (opts.mode) {
    case PerturbMode::None: {
      for (std::int64_t q = 0; q < q_count; ++q)
        for (std::int64_t v = 0; v < v_count; ++v) {
          T acc{};
          for (std::int64_t c = 0; c < d; ++c) acc += enc.text.at2(q, c) * enc.videos.at2(v, c);
          scores.at2(q, v) = static_cast<double>(tau * acc);
        }
      break;
    }
    case PerturbMode::Dasp: {
      for (std::int64_t q = 0; q < q_count; ++q) {
        perturbed_row_scores(enc.videos, row(enc.text, q), alpha, tau, params, pass_scores);
        for (std::int64_t v = 0; v < v_count; ++v) scores.at2(q, v) = static_cast<double>(pass_scores[static_cast<std::size_t>(v)]);
      }
      break;
    }
    case PerturbMode::Stp: {
      passes = opts.stp_samples;
      if (passes < 1) throw DataError("evaluate: stp_samples must be >= 1");
      for (std::int64_t q = 0; q < q_count; ++q) {
        Rng rng = Rng::substream(opts.seed, 0x57e0 + static_cast<std::uint64_t>(q));
        for (std::int64_t k = 0; k < passes; ++k) {
          const T sigma = opts.forced_sigma ? static_cast<T>(*opts.forced_sigma)
                                            : rng.template normal_as<T>();
          perturbed_row_scores(enc.videos, row(enc.text, q), sigma, tau, params, pass_scores);
          for (std::int64_t v = 0; v < v_count; ++v) {
            const double s = static_cast<double>(pass_scores[static_cast<std::size_t>(v)]);
            if (k == 0 || s > scores.at2(q, v)) scores.at2(q, v) = s;
          }
        }
      }
      break;
    }
  }
  const auto t_end = std::chrono::steady_clock::now();

  EvalReport report;
  report.cost.forward_passes_per_query = passes;
  report.cost.wall_time_s = std::chrono::duration<double>(t_end - t_start).count();
  report.scores = scores;
  report.ranks = t2v_ranks(scores, data.query_video);
  report.t2v = rank_metrics(scores, data.query_video);
  report.v2t = v2t_metrics(scores, data.query_video);
  if (opts.apply_dsl) {
    const TensorD post = dsl(scores, opts.dsl_beta);
    report.t2v_dsl = rank_metrics(post, data.query_video);
    report.v2t_dsl = v2t_metrics(post, data.query_video);
  }
  return report;
}

// Mean gate value per video, computed with each video's paired caption.
// Returns an empty tensor for granularity none.
template <typename T>
TensorD mean_gate_per_video(const ModelParams<T>& params, const Dataset<T>& data,
                            Granularity granularity) {
  if (granularity == Granularity::None) return TensorD();
  const EncodedDataset<T> enc = encode_dataset(params, data, granularity);
  const std::int64_t v_count = static_cast<std::int64_t>(data.videos.size());
  const std::int64_t per = enc.gates.numel() / v_count;
  TensorD out({v_count});
  for (std::int64_t v = 0; v < v_count; ++v) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < per; ++i) acc += static_cast<double>(enc.gates[v * per + i]);
    out[v] = acc / static_cast<double>(per);
  }
  return out;
}

}  // namespace gaid
