#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaid/error.hpp"
#include "gaid/gft.hpp"
#include "gaid/ops.hpp"
#include "gaid/rng.hpp"
#include "gaid/tensor.hpp"

namespace gaid {

template <typename T>
struct VideoSample {
  std::string id;
  Tensor<T> frames;  // [F, d_v]
  Tensor<T> audio;   // [F, d_a]; all-zero rows when has_audio is false
  bool has_audio = true;
};

template <typename T>
struct TextQuery {
  std::string id;
  Tensor<T> embedding;  // [d_t]
  std::string video_id;
};

template <typename T>
struct Dataset {
  std::vector<VideoSample<T>> videos;
  std::vector<TextQuery<T>> queries;
  std::vector<std::int64_t> query_video;  // queries[i] pairs with videos[query_video[i]]
  // Synthetic-generation labels; empty for datasets loaded from a manifest.
  std::vector<std::uint8_t> audio_informative;

  std::int64_t frames() const { return videos.empty() ? 0 : videos.front().frames.dim(0); }
  std::int64_t visual_dim() const { return videos.empty() ? 0 : videos.front().frames.dim(1); }
  std::int64_t audio_dim() const { return videos.empty() ? 0 : videos.front().audio.dim(1); }
  std::int64_t text_dim() const { return queries.empty() ? 0 : queries.front().embedding.dim(0); }

  template <typename U>
  Dataset<U> cast() const {
    Dataset<U> out;
    out.videos.reserve(videos.size());
    for (const auto& v : videos)
      out.videos.push_back({v.id, v.frames.template cast<U>(), v.audio.template cast<U>(), v.has_audio});
    out.queries.reserve(queries.size());
    for (const auto& q : queries)
      out.queries.push_back({q.id, q.embedding.template cast<U>(), q.video_id});
    out.query_video = query_video;
    out.audio_informative = audio_informative;
    return out;
  }
};

// Temporal block-mean pooling of [T_a, d] rows onto F output rows. Block i
// covers raw rows [floor(i*T_a/F), floor((i+1)*T_a/F)); when T_a < F, rows
// are repeated by nearest-index assignment.
template <typename T>
Tensor<T> align_audio(const Tensor<T>& raw, std::int64_t frames) {
  if (raw.rank() != 2 || raw.dim(0) < 1) throw DataError("align_audio: empty or non-matrix input");
  if (frames < 1) throw DataError("align_audio: frames must be >= 1");
  const std::int64_t ta = raw.dim(0), d = raw.dim(1);
  Tensor<T> out({frames, d});
  if (ta < frames) {
    for (std::int64_t i = 0; i < frames; ++i) {
      const std::int64_t src = i * ta / frames;
      for (std::int64_t c = 0; c < d; ++c) out.at2(i, c) = raw.at2(src, c);
    }
    return out;
  }
  for (std::int64_t i = 0; i < frames; ++i) {
    const std::int64_t lo = i * ta / frames;
    const std::int64_t hi = (i + 1) * ta / frames;
    for (std::int64_t c = 0; c < d; ++c) {
      T acc{};
      for (std::int64_t r = lo; r < hi; ++r) acc += raw.at2(r, c);
      out.at2(i, c) = acc / static_cast<T>(hi - lo);
    }
  }
  return out;
}

// Affine map x W + b applied per row.
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() == 1) {
    Tensor<T> x2 = x.reshaped({1, x.dim(0)});
    return add_row_vector(matmul(x2, w), b).reshaped({w.dim(1)});
  }
  return add_row_vector(matmul(x, w), b);
}

struct SynthConfig {
  std::int64_t samples = 64;
  std::int64_t frames = 12;
  std::int64_t dim = 512;
  double rho = 1.0;          // fraction of samples with informative audio
  double noise_scale = 0.3;  // per-channel noise added to text/frames/audio
  double blank_frac = 0.0;   // fraction of visual frames replaced by noise
  double offset_scale = 2.0; // class-centroid magnitude of noise audio / blank frames
};

// Synthetic paired dataset. Every sample has a latent z; text = z + noise,
// non-blank frames = z + noise, informative audio = z + noise. Blank frames
// and uninformative audio are isotropic noise around fixed per-dataset
// centroids, mirroring how real encoders place non-speech audio and corrupt
// frames in their own clusters. Deterministic per-sample substreams.
template <typename T>
Dataset<T> gen_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.samples < 1) throw DataError("gen_synthetic: need at least one sample");
  if (cfg.rho < 0.0 || cfg.rho > 1.0) throw DataError("gen_synthetic: rho outside [0,1]");
  if (cfg.blank_frac < 0.0 || cfg.blank_frac > 1.0)
    throw DataError("gen_synthetic: blank_frac outside [0,1]");
  const std::int64_t b = cfg.samples, f = cfg.frames, d = cfg.dim;

  auto unit_direction = [&](std::uint64_t stream) {
    Rng r = Rng::substream(seed, stream);
    TensorD v({d});
    double sq = 0.0;
    for (std::int64_t c = 0; c < d; ++c) {
      v[c] = r.normal();
      sq += v[c] * v[c];
    }
    const double n = std::sqrt(sq);
    for (std::int64_t c = 0; c < d; ++c) v[c] /= n;
    return v;
  };
  const TensorD noise_audio_centroid = unit_direction(1);
  const TensorD blank_frame_centroid = unit_direction(2);

  // Exactly round(rho*B) samples get informative audio, chosen by a seeded shuffle.
  std::vector<std::int64_t> order(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng pick = Rng::substream(seed, 3);
  shuffle_indices(order, pick);
  const std::int64_t n_informative = static_cast<std::int64_t>(std::llround(cfg.rho * static_cast<double>(b)));
  std::vector<std::uint8_t> informative(static_cast<std::size_t>(b), 0);
  for (std::int64_t i = 0; i < n_informative; ++i) informative[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  const std::int64_t n_blank = static_cast<std::int64_t>(std::llround(cfg.blank_frac * static_cast<double>(f)));

  Dataset<T> out;
  out.videos.reserve(static_cast<std::size_t>(b));
  out.queries.reserve(static_cast<std::size_t>(b));
  out.audio_informative = informative;
  char idbuf[32];

  for (std::int64_t i = 0; i < b; ++i) {
    Rng rng = Rng::substream(seed, 16 + static_cast<std::uint64_t>(i));
    TensorD z({d});
    for (std::int64_t c = 0; c < d; ++c) z[c] = rng.normal();

    Tensor<T> text({d});
    for (std::int64_t c = 0; c < d; ++c)
      text[c] = static_cast<T>(z[c] + cfg.noise_scale * rng.normal());

    std::vector<std::int64_t> frame_order(static_cast<std::size_t>(f));
    for (std::int64_t j = 0; j < f; ++j) frame_order[static_cast<std::size_t>(j)] = j;
    shuffle_indices(frame_order, rng);
    std::vector<std::uint8_t> blank(static_cast<std::size_t>(f), 0);
    for (std::int64_t j = 0; j < n_blank; ++j) blank[static_cast<std::size_t>(frame_order[static_cast<std::size_t>(j)])] = 1;

    Tensor<T> frames({f, d});
    for (std::int64_t j = 0; j < f; ++j) {
      for (std::int64_t c = 0; c < d; ++c) {
        const double v = blank[static_cast<std::size_t>(j)]
                             ? cfg.offset_scale * blank_frame_centroid[c] + rng.normal()
                             : z[c] + cfg.noise_scale * rng.normal();
        frames.at2(j, c) = static_cast<T>(v);
      }
    }

    Tensor<T> audio({f, d});
    for (std::int64_t j = 0; j < f; ++j) {
      for (std::int64_t c = 0; c < d; ++c) {
        const double v = informative[static_cast<std::size_t>(i)]
                             ? z[c] + cfg.noise_scale * rng.normal()
                             : cfg.offset_scale * noise_audio_centroid[c] + rng.normal();
        audio.at2(j, c) = static_cast<T>(v);
      }
    }

    std::snprintf(idbuf, sizeof(idbuf), "v%05lld", static_cast<long long>(i));
    const std::string vid = idbuf;
    std::snprintf(idbuf, sizeof(idbuf), "q%05lld", static_cast<long long>(i));
    const std::string qid = idbuf;
    out.videos.push_back({vid, std::move(frames), std::move(audio), true});
    out.queries.push_back({qid, std::move(text), vid});
    out.query_video.push_back(i);
  }
  return out;
}

struct ManifestEntry {
  std::string id;
  std::string text_path;
  std::string video_path;
  std::string audio_path;  // empty when absent
  std::string pair;
};

struct Manifest {
  std::int64_t d_model = 512;
  std::int64_t frames = 12;
  std::vector<ManifestEntry> items;
  std::string base_dir;
};

Manifest parse_manifest(const std::string& path);

// Loads all referenced tensors, aligns audio rows to the frame timeline,
// inserts zero audio where absent, and resolves query->video pairing in
// manifest order.
template <typename T>
Dataset<T> load_dataset(const Manifest& manifest);

extern template Dataset<float> load_dataset<float>(const Manifest&);
extern template Dataset<double> load_dataset<double>(const Manifest&);

}  // namespace gaid
