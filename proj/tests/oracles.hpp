#pragma once

// Independent oracles used by the tests. Each reimplements the contract it
// checks by a different route than the library (naive loops, sorting, the
// incomplete-beta identity, long-double recurrences) and must stay decoupled
// from the implementation headers' internals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "gaid/tensor.hpp"

namespace oracle {

// Plain triple loop, ijk order with a local accumulator.
inline gaid::TensorD matmul(const gaid::TensorD& a, const gaid::TensorD& b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  gaid::TensorD c({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
      c.at2(i, j) = acc;
    }
  return c;
}

// Per-block mean with explicit floor boundaries.
inline gaid::TensorD block_mean(const gaid::TensorD& raw, std::int64_t frames) {
  const std::int64_t ta = raw.dim(0), d = raw.dim(1);
  gaid::TensorD out({frames, d});
  for (std::int64_t i = 0; i < frames; ++i) {
    const auto lo = static_cast<std::int64_t>(std::floor(static_cast<double>(i * ta) / static_cast<double>(frames)));
    const auto hi = static_cast<std::int64_t>(std::floor(static_cast<double>((i + 1) * ta) / static_cast<double>(frames)));
    for (std::int64_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::int64_t r = lo; r < hi; ++r) acc += raw.at2(r, c);
      out.at2(i, c) = acc / static_cast<double>(hi - lo);
    }
  }
  return out;
}

inline std::vector<long double> softmax_ld(const std::vector<long double>& x) {
  long double mx = x[0];
  for (const auto v : x) mx = std::max(mx, v);
  std::vector<long double> e(x.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - mx);
    sum += e[i];
  }
  for (auto& v : e) v /= sum;
  return e;
}

// Bidirectional InfoNCE evaluated in long double straight from the formula.
inline long double infonce_ld(const gaid::TensorD& s) {
  const std::int64_t b = s.dim(0);
  long double t2v = 0.0L, v2t = 0.0L;
  for (std::int64_t i = 0; i < b; ++i) {
    std::vector<long double> r(static_cast<std::size_t>(b)), c(static_cast<std::size_t>(b));
    for (std::int64_t j = 0; j < b; ++j) {
      r[static_cast<std::size_t>(j)] = s.at2(i, j);
      c[static_cast<std::size_t>(j)] = s.at2(j, i);
    }
    t2v += -std::log(softmax_ld(r)[static_cast<std::size_t>(i)]);
    v2t += -std::log(softmax_ld(c)[static_cast<std::size_t>(i)]);
  }
  return 0.5L * (t2v / b + v2t / b);
}

// Pessimistic rank by explicit sort: competitors win ties.
inline std::int64_t rank_by_sort(const std::vector<double>& scores, std::int64_t truth) {
  std::vector<std::pair<double, int>> v;
  v.reserve(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j)
    v.emplace_back(scores[j], j == static_cast<std::size_t>(truth) ? 1 : 0);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // tied competitors come first
  });
  for (std::size_t pos = 0; pos < v.size(); ++pos)
    if (v[pos].second == 1) return static_cast<std::int64_t>(pos) + 1;
  return -1;
}

struct Metrics {
  double r1, r5, r10, mdr, mnr;
};

inline Metrics metrics_from_ranks(std::vector<std::int64_t> ranks) {
  Metrics m{0, 0, 0, 0, 0};
  const double n = static_cast<double>(ranks.size());
  for (const auto r : ranks) {
    m.r1 += r <= 1;
    m.r5 += r <= 5;
    m.r10 += r <= 10;
    m.mnr += static_cast<double>(r);
  }
  m.r1 *= 100.0 / n;
  m.r5 *= 100.0 / n;
  m.r10 *= 100.0 / n;
  m.mnr /= n;
  std::sort(ranks.begin(), ranks.end());
  const std::size_t half = ranks.size() / 2;
  m.mdr = ranks.size() % 2 == 1 ? static_cast<double>(ranks[half])
                                : 0.5 * static_cast<double>(ranks[half - 1] + ranks[half]);
  return m;
}

inline Metrics rank_metrics(const gaid::TensorD& sim, const std::vector<std::int64_t>& truth) {
  std::vector<std::int64_t> ranks;
  for (std::int64_t q = 0; q < sim.dim(0); ++q) {
    std::vector<double> rowv(static_cast<std::size_t>(sim.dim(1)));
    for (std::int64_t v = 0; v < sim.dim(1); ++v) rowv[static_cast<std::size_t>(v)] = sim.at2(q, v);
    ranks.push_back(rank_by_sort(rowv, truth[static_cast<std::size_t>(q)]));
  }
  return metrics_from_ranks(std::move(ranks));
}

// Best-ranked true caption per video on the transposed matrix.
inline Metrics v2t_metrics(const gaid::TensorD& sim, const std::vector<std::int64_t>& truth) {
  const std::int64_t q_count = sim.dim(0), v_count = sim.dim(1);
  std::vector<std::int64_t> ranks;
  for (std::int64_t v = 0; v < v_count; ++v) {
    std::vector<double> col(static_cast<std::size_t>(q_count));
    for (std::int64_t q = 0; q < q_count; ++q) col[static_cast<std::size_t>(q)] = sim.at2(q, v);
    std::int64_t best = q_count + 1;
    for (std::int64_t q = 0; q < q_count; ++q)
      if (truth[static_cast<std::size_t>(q)] == v) best = std::min(best, rank_by_sort(col, q));
    ranks.push_back(best);
  }
  return metrics_from_ranks(std::move(ranks));
}

// Direct evaluation of the dual-softmax reweighting in long double.
inline gaid::TensorD dsl(const gaid::TensorD& s, double beta) {
  const std::int64_t q_count = s.dim(0), v_count = s.dim(1);
  gaid::TensorD out({q_count, v_count});
  for (std::int64_t v = 0; v < v_count; ++v) {
    std::vector<long double> col(static_cast<std::size_t>(q_count));
    for (std::int64_t q = 0; q < q_count; ++q)
      col[static_cast<std::size_t>(q)] = static_cast<long double>(beta) * s.at2(q, v);
    const auto w = softmax_ld(col);
    for (std::int64_t q = 0; q < q_count; ++q)
      out.at2(q, v) = static_cast<double>(s.at2(q, v) * static_cast<double>(w[static_cast<std::size_t>(q)]));
  }
  return out;
}

// Regularized incomplete beta by modified Lentz continued fraction; the
// spherical cap identity is P(theta) = 0.5 * I_{sin^2 theta}((d-1)/2, 1/2)
// for theta <= pi/2.
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 800;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double log_inc_beta(double a, double b, double x) {  // ln I_x(a,b)
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  if (x >= 1.0) return 0.0;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    const double lnbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                        b * std::log1p(-x);
    return lnbt - std::log(a) + std::log(betacf(a, b, x));
  }
  return std::log1p(-std::exp(log_inc_beta(b, a, 1.0 - x)));
}

// log10 of the cap fraction for theta in (0, pi/2].
inline double cap_fraction_log10(double theta, std::int64_t dim) {
  const double s = std::sin(theta);
  const double a = (static_cast<double>(dim) - 1.0) / 2.0;
  const double ln_i = log_inc_beta(a, 0.5, s * s);
  return (std::log(0.5) + ln_i) / std::log(10.0);
}

// Scalar Adam recurrence in long double.
struct AdamTrace {
  std::vector<long double> params;
};

inline AdamTrace adam_scalar(long double p0, const std::vector<long double>& grads, long double lr,
                             long double b1, long double b2, long double eps) {
  AdamTrace trace;
  long double p = p0, m = 0.0L, v = 0.0L;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const long double g = grads[t - 1];
    m = b1 * m + (1.0L - b1) * g;
    v = b2 * v + (1.0L - b2) * g * g;
    const long double mh = m / (1.0L - std::pow(b1, static_cast<long double>(t)));
    const long double vh = v / (1.0L - std::pow(b2, static_cast<long double>(t)));
    p -= lr * mh / (std::sqrt(vh) + eps);
    trace.params.push_back(p);
  }
  return trace;
}

// Central finite differences for a scalar function of a flat vector.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = f(x);
    x[i] = saved - h;
    const double minus = f(x);
    x[i] = saved;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
