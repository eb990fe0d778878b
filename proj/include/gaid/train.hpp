#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gaid/adam.hpp"
#include "gaid/eval.hpp"
#include "gaid/model.hpp"

namespace gaid {

struct TrainConfig {
  std::int64_t epochs = 5;
  std::int64_t batch_size = 32;
  std::int64_t frames = 12;
  double lr_new = 1e-4;
  double lr_proj = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  double weight_decay = 0.2;
  double dropout = 0.3;
  double lambda = 0.8;
  double init_temperature = 1.0 / 0.07;
  double val_fraction = 0.1;
  std::uint64_t seed = 42;
  Granularity granularity = Granularity::Frame;
  PerturbMode perturb = PerturbMode::Dasp;
};

struct EpochMetrics {
  std::int64_t epoch = 0;       // 0 = untrained baseline
  double train_loss = 0.0;      // NaN for epoch 0
  double val_r1 = 0.0;
  double val_r5 = 0.0;
  double val_mnr = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;  // best-validation checkpoint among trained epochs
  std::vector<EpochMetrics> log;
  std::int64_t best_epoch = 0;
};

template <typename T>
GraphConfig graph_config(const TrainConfig& cfg, bool training) {
  GraphConfig g;
  g.granularity = cfg.granularity;
  g.perturb = cfg.perturb;
  g.lambda = cfg.lambda;
  g.dropout = cfg.dropout;
  g.training = training;
  return g;
}

// Deterministic split of query indices into train/validation parts.
template <typename T>
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> split_indices(
    const Dataset<T>& data, double val_fraction, std::uint64_t seed) {
  std::vector<std::int64_t> idx(data.queries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
  Rng rng = Rng::substream(seed, 0x5b17);
  shuffle_indices(idx, rng);
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(idx.size())));
  std::vector<std::int64_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::int64_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return {train, val};
}

// Subset restricted to the given queries (videos re-indexed, order preserved).
template <typename T>
Dataset<T> subset_dataset(const Dataset<T>& data, const std::vector<std::int64_t>& query_indices) {
  Dataset<T> out;
  std::vector<std::int64_t> video_map(data.videos.size(), -1);
  for (const std::int64_t q : query_indices) {
    const std::int64_t v = data.query_video[static_cast<std::size_t>(q)];
    if (video_map[static_cast<std::size_t>(v)] < 0) {
      video_map[static_cast<std::size_t>(v)] = static_cast<std::int64_t>(out.videos.size());
      out.videos.push_back(data.videos[static_cast<std::size_t>(v)]);
      if (!data.audio_informative.empty())
        out.audio_informative.push_back(data.audio_informative[static_cast<std::size_t>(v)]);
    }
    out.queries.push_back(data.queries[static_cast<std::size_t>(q)]);
    out.query_video.push_back(video_map[static_cast<std::size_t>(v)]);
  }
  return out;
}

template <typename T>
double validation_r1(const ModelParams<T>& params, const Dataset<T>& val, const TrainConfig& cfg,
                     EpochMetrics& m) {
  EvalOptions opts;
  opts.mode = cfg.perturb;
  opts.stp_samples = 4;  // cheap validation proxy for the stochastic mode
  opts.apply_dsl = false;
  opts.seed = cfg.seed;
  const EvalReport rep = evaluate(params, val, cfg.granularity, opts);
  m.val_r1 = rep.t2v.r1;
  m.val_r5 = rep.t2v.r5;
  m.val_mnr = rep.t2v.mnr;
  return rep.t2v.r1;
}

// Shuffled-minibatch training with per-epoch validation. Returns the
// checkpoint with the best validation R@1 over trained epochs; the epoch-0
// entry in the log is the untrained baseline.
template <typename T>
TrainResult<T> train(const Dataset<T>& train_data, const Dataset<T>& val_data,
                     const TrainConfig& cfg) {
  if (train_data.queries.empty()) throw DataError("train: empty dataset");
  ModelDims dims{0, train_data.visual_dim(), train_data.audio_dim(), train_data.text_dim()};
  dims.d_model = dims.d_visual;  // common space; projections appear when dims differ
  ModelParams<T> params =
      init_params<T>(dims, cfg.granularity, cfg.init_temperature, cfg.seed);

  AdamConfig adam;
  adam.lr_new = cfg.lr_new;
  adam.lr_proj = cfg.lr_proj;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;
  adam.weight_decay = cfg.weight_decay;
  AdamState<T> state = init_adam_state(params);

  TrainResult<T> result;
  EpochMetrics baseline;
  baseline.epoch = 0;
  baseline.train_loss = std::nan("");
  validation_r1(params, val_data, cfg, baseline);
  result.log.push_back(baseline);

  const GraphConfig train_graph = graph_config<T>(cfg, true);
  std::vector<std::int64_t> order(train_data.queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);

  ModelParams<T> best = params;
  double best_r1 = -1.0;
  std::int64_t best_epoch = 0;

  std::uint64_t step_counter = 0;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::substream(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch));
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0;
    std::int64_t steps = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      if (end - pos < 2) continue;  // a single pair has no negatives
      const std::vector<std::int64_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch<T> batch = make_batch(train_data, batch_idx);
      Rng noise_rng = Rng::substream(cfg.seed, 0x70a5e + step_counter);
      const NoiseRecord<T> noise =
          sample_noise<T>(batch.text.dim(0), batch.frames.dim(1), train_graph, noise_rng);
      const auto fb = forward_backward(batch, params, noise, train_graph);
      adam_step(params, fb.grads, state, adam);
      loss_sum += static_cast<double>(fb.loss.total);
      ++steps;
      ++step_counter;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : std::nan("");
    const double r1 = validation_r1(params, val_data, cfg, m);
    result.log.push_back(m);
    if (r1 > best_r1) {
      best_r1 = r1;
      best = params;
      best_epoch = epoch;
    }
  }

  result.params = cfg.epochs > 0 ? std::move(best) : std::move(params);
  result.best_epoch = best_epoch;
  return result;
}

template <typename T>
TrainResult<T> train(const Dataset<T>& data, const TrainConfig& cfg) {
  const auto [train_idx, val_idx] = split_indices(data, cfg.val_fraction, cfg.seed);
  if (train_idx.empty() || val_idx.empty())
    throw DataError("train: dataset too small for validation split");
  return train(subset_dataset(data, train_idx), subset_dataset(data, val_idx), cfg);
}

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  std::int64_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool passed = false;
};

// Central differences over flattened parameter coordinates against the
// analytic gradients, replaying one fixed noise record. Checks every
// coordinate unless the model exceeds `subset_threshold`, in which case a
// seeded subset of at least 500 coordinates per run is used.
inline double grad_check_rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const Batch<double>& batch, const ModelParams<double>& params,
                           const NoiseRecord<double>& noise, const GraphConfig& cfg,
                           double tolerance = 1e-4, double fd_step = 1e-5,
                           std::int64_t subset_threshold = 20000, std::uint64_t seed = 0);

}  // namespace gaid
