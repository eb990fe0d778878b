#include "gaid/eval.hpp"

#include <algorithm>
#include <cmath>

#include "gaid/error.hpp"
#include "gaid/ops.hpp"

namespace gaid {

namespace {

double median_of(std::vector<std::int64_t> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return static_cast<double>(values[n / 2]);
  return 0.5 * static_cast<double>(values[n / 2 - 1] + values[n / 2]);
}

RetrievalMetrics metrics_from_ranks(const std::vector<std::int64_t>& ranks) {
  RetrievalMetrics m;
  const double n = static_cast<double>(ranks.size());
  double sum = 0.0;
  std::int64_t le1 = 0, le5 = 0, le10 = 0;
  for (const auto r : ranks) {
    sum += static_cast<double>(r);
    le1 += r <= 1;
    le5 += r <= 5;
    le10 += r <= 10;
  }
  m.r1 = 100.0 * static_cast<double>(le1) / n;
  m.r5 = 100.0 * static_cast<double>(le5) / n;
  m.r10 = 100.0 * static_cast<double>(le10) / n;
  m.mdr = median_of(ranks);
  m.mnr = sum / n;
  return m;
}

}  // namespace

std::vector<std::int64_t> t2v_ranks(const TensorD& sim, const std::vector<std::int64_t>& truth) {
  if (sim.rank() != 2) throw ShapeError("rank_metrics: scores must be rank 2");
  const std::int64_t q_count = sim.dim(0), v_count = sim.dim(1);
  if (static_cast<std::int64_t>(truth.size()) != q_count)
    throw DataError("rank_metrics: truth size " + std::to_string(truth.size()) +
                    " does not match query count " + std::to_string(q_count));
  std::vector<std::int64_t> ranks(static_cast<std::size_t>(q_count));
  for (std::int64_t q = 0; q < q_count; ++q) {
    const std::int64_t t = truth[static_cast<std::size_t>(q)];
    if (t < 0 || t >= v_count)
      throw DataError("rank_metrics: query " + std::to_string(q) + " has no ground-truth column");
    const double s_true = sim.at2(q, t);
    std::int64_t above = 0;
    for (std::int64_t v = 0; v < v_count; ++v)
      if (v != t && sim.at2(q, v) >= s_true) ++above;  // ties count against us
    ranks[static_cast<std::size_t>(q)] = 1 + above;
  }
  return ranks;
}

RetrievalMetrics rank_metrics(const TensorD& sim, const std::vector<std::int64_t>& truth) {
  return metrics_from_ranks(t2v_ranks(sim, truth));
}

RetrievalMetrics v2t_metrics(const TensorD& sim, const std::vector<std::int64_t>& truth) {
  if (sim.rank() != 2) throw ShapeError("v2t_metrics: scores must be rank 2");
  const std::int64_t q_count = sim.dim(0), v_count = sim.dim(1);
  if (static_cast<std::int64_t>(truth.size()) != q_count)
    throw DataError("v2t_metrics: truth size does not match query count");
  std::vector<std::vector<std::int64_t>> captions(static_cast<std::size_t>(v_count));
  for (std::int64_t q = 0; q < q_count; ++q) {
    const std::int64_t t = truth[static_cast<std::size_t>(q)];
    if (t < 0 || t >= v_count) throw DataError("v2t_metrics: bad truth index");
    captions[static_cast<std::size_t>(t)].push_back(q);
  }
  std::vector<std::int64_t> ranks;
  ranks.reserve(static_cast<std::size_t>(v_count));
  for (std::int64_t v = 0; v < v_count; ++v) {
    const auto& caps = captions[static_cast<std::size_t>(v)];
    if (caps.empty()) throw DataError("v2t_metrics: video " + std::to_string(v) + " has no captions");
    std::int64_t best = q_count + 1;
    for (const std::int64_t c : caps) {
      const double s_true = sim.at2(c, v);
      std::int64_t above = 0;
      for (std::int64_t q = 0; q < q_count; ++q)
        if (q != c && sim.at2(q, v) >= s_true) ++above;
      best = std::min(best, 1 + above);
    }
    ranks.push_back(best);
  }
  return metrics_from_ranks(ranks);
}

TensorD dsl(const TensorD& sim, double beta) {
  if (sim.rank() != 2) throw ShapeError("dsl: scores must be rank 2");
  const TensorD weights = softmax(scale(sim, beta), 0);  // column-wise over queries
  return mul(sim, weights);
}

}  // namespace gaid
