#include "gaid/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

namespace fs = std::filesystem;

namespace gaid {

namespace {

void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) throw DataError("manifest: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

Manifest parse_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("manifest: cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: invalid JSON in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("manifest: top level must be an object: " + path);
  reject_unknown_keys(j, {"d_model", "frames", "items"}, path);

  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  if (!j.contains("d_model") || !j.contains("frames") || !j.contains("items"))
    throw DataError("manifest: requires d_model, frames, items: " + path);
  m.d_model = j.at("d_model").get<std::int64_t>();
  m.frames = j.at("frames").get<std::int64_t>();
  if (m.d_model < 1 || m.frames < 1) throw DataError("manifest: d_model and frames must be positive");

  for (const auto& item : j.at("items")) {
    if (!item.is_object()) throw DataError("manifest: items[] entries must be objects");
    reject_unknown_keys(item, {"id", "text", "video", "audio", "pair"}, "items[]");
    ManifestEntry e;
    e.id = item.at("id").get<std::string>();
    e.text_path = item.at("text").get<std::string>();
    e.video_path = item.at("video").get<std::string>();
    if (item.contains("audio")) e.audio_path = item.at("audio").get<std::string>();
    e.pair = item.at("pair").get<std::string>();
    m.items.push_back(std::move(e));
  }
  if (m.items.empty()) throw DataError("manifest: no items: " + path);
  return m;
}

namespace {

std::string resolve(const std::string& base, const std::string& rel) {
  fs::path p(rel);
  if (p.is_absolute() || base.empty()) return rel;
  return (fs::path(base) / p).string();
}

}  // namespace

template <typename T>
Dataset<T> load_dataset(const Manifest& manifest) {
  Dataset<T> out;
  std::unordered_map<std::string, std::int64_t> video_index;

  // First pass: dimensions of audio present anywhere, so zero-fill matches.
  std::int64_t d_audio = -1;
  for (const auto& item : manifest.items) {
    if (item.audio_path.empty()) continue;
    const auto t = load_gft(resolve(manifest.base_dir, item.audio_path));
    if (t.values.rank() != 2) throw DataError("manifest: audio tensor must be rank 2: " + item.audio_path);
    if (d_audio < 0) d_audio = t.values.dim(1);
    if (t.values.dim(1) != d_audio)
      throw DataError("manifest: inconsistent audio dims at " + item.audio_path);
  }

  std::int64_t d_visual = -1, d_text = -1;
  for (const auto& item : manifest.items) {
    const auto text = load_gft(resolve(manifest.base_dir, item.text_path));
    if (text.values.rank() != 1)
      throw DataError("manifest: text tensor must be rank 1: " + item.text_path);
    if (d_text < 0) d_text = text.values.dim(0);
    if (text.values.dim(0) != d_text)
      throw DataError("manifest: inconsistent text dims at " + item.text_path);

    auto it = video_index.find(item.pair);
    if (it == video_index.end()) {
      const auto frames = load_gft(resolve(manifest.base_dir, item.video_path));
      if (frames.values.rank() != 2)
        throw DataError("manifest: video tensor must be rank 2: " + item.video_path);
      if (frames.values.dim(0) != manifest.frames)
        throw DataError("manifest: video " + item.video_path + " has " +
                        std::to_string(frames.values.dim(0)) + " frames, manifest says " +
                        std::to_string(manifest.frames));
      if (d_visual < 0) d_visual = frames.values.dim(1);
      if (frames.values.dim(1) != d_visual)
        throw DataError("manifest: inconsistent visual dims at " + item.video_path);

      VideoSample<T> sample;
      sample.id = item.pair;
      sample.frames = frames.values.template cast<T>();
      if (!item.audio_path.empty()) {
        const auto raw = load_gft(resolve(manifest.base_dir, item.audio_path));
        sample.audio = align_audio(raw.values, manifest.frames).template cast<T>();
        sample.has_audio = true;
      } else {
        const std::int64_t da = d_audio > 0 ? d_audio : d_visual;
        sample.audio = Tensor<T>({manifest.frames, da});
        sample.has_audio = false;
      }
      it = video_index.emplace(item.pair, static_cast<std::int64_t>(out.videos.size())).first;
      out.videos.push_back(std::move(sample));
    }

    out.queries.push_back({item.id, text.values.template cast<T>(), item.pair});
    out.query_video.push_back(it->second);
  }
  return out;
}

template Dataset<float> load_dataset<float>(const Manifest&);
template Dataset<double> load_dataset<double>(const Manifest&);

}  // namespace gaid
