#include "gaid/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gaid/gft.hpp"

namespace fs = std::filesystem;

namespace gaid {

Granularity granularity_from_name(const std::string& name) {
  if (name == "none") return Granularity::None;
  if (name == "sample") return Granularity::Sample;
  if (name == "frame") return Granularity::Frame;
  if (name == "token") return Granularity::Token;
  throw DataError("unknown fusion granularity '" + name + "'");
}

PerturbMode perturb_mode_from_name(const std::string& name) {
  if (name == "none") return PerturbMode::None;
  if (name == "stp") return PerturbMode::Stp;
  if (name == "dasp") return PerturbMode::Dasp;
  throw DataError("unknown perturb mode '" + name + "'");
}

namespace {

std::string file_name_for(const std::string& param_name) {
  std::string out = param_name;
  for (auto& ch : out)
    if (ch == '.') ch = '_';
  return out + ".gft";
}

template <typename T>
void save_impl(const std::string& dir, const ModelParams<T>& params, const CheckpointMeta& meta) {
  fs::create_directories(dir);
  nlohmann::json index;
  index["format"] = "gaid-checkpoint-v1";
  index["d_model"] = meta.dims.d_model;
  index["d_visual"] = meta.dims.d_visual;
  index["d_audio"] = meta.dims.d_audio;
  index["d_text"] = meta.dims.d_text;
  index["frames"] = meta.frames;
  index["granularity"] = granularity_name(meta.granularity);
  index["perturb"] = perturb_mode_name(meta.perturb);
  index["dtype"] = std::is_same_v<T, float> ? "f32" : "f64";
  index["params"] = nlohmann::json::array();

  auto refs = param_refs(const_cast<ModelParams<T>&>(params));
  for (const auto& r : refs) {
    const std::string file = file_name_for(r.name);
    save_gft((fs::path(dir) / file).string(), *r.tensor);
    nlohmann::json entry;
    entry["name"] = r.name;
    entry["file"] = file;
    entry["shape"] = r.tensor->shape();
    index["params"].push_back(entry);
  }
  std::ofstream out(fs::path(dir) / "index.json");
  if (!out) throw DataError("checkpoint: cannot write index in " + dir);
  out << index.dump(2) << "\n";
}

}  // namespace

void save_checkpoint(const std::string& dir, const ModelParams<double>& params,
                     const CheckpointMeta& meta) {
  save_impl(dir, params, meta);
}

void save_checkpoint(const std::string& dir, const ModelParams<float>& params,
                     const CheckpointMeta& meta) {
  save_impl(dir, params, meta);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in) throw DataError("checkpoint: cannot open " + dir + "/index.json");
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint: invalid index.json in " + dir + ": " + e.what());
  }
  if (index.value("format", "") != "gaid-checkpoint-v1")
    throw ParseError("checkpoint: unsupported format in " + dir);

  LoadedCheckpoint out;
  out.meta.dims.d_model = index.at("d_model").get<std::int64_t>();
  out.meta.dims.d_visual = index.at("d_visual").get<std::int64_t>();
  out.meta.dims.d_audio = index.at("d_audio").get<std::int64_t>();
  out.meta.dims.d_text = index.at("d_text").get<std::int64_t>();
  out.meta.frames = index.at("frames").get<std::int64_t>();
  out.meta.granularity = granularity_from_name(index.at("granularity").get<std::string>());
  out.meta.perturb = perturb_mode_from_name(index.at("perturb").get<std::string>());

  out.params = init_params<double>(out.meta.dims, out.meta.granularity, 1.0 / 0.07, 0);
  auto refs = param_refs(out.params);
  if (refs.size() != index.at("params").size())
    throw ParseError("checkpoint: parameter count mismatch in " + dir);
  std::size_t k = 0;
  for (const auto& entry : index.at("params")) {
    auto& ref = refs[k++];
    if (entry.at("name").get<std::string>() != ref.name)
      throw ParseError("checkpoint: unexpected parameter '" + entry.at("name").get<std::string>() +
                       "', wanted '" + ref.name + "'");
    const auto loaded = load_gft((fs::path(dir) / entry.at("file").get<std::string>()).string());
    if (loaded.values.shape() != ref.tensor->shape())
      throw ParseError("checkpoint: shape mismatch for " + ref.name + ": file has " +
                       shape_str(loaded.values.shape()) + ", model wants " +
                       shape_str(ref.tensor->shape()));
    *ref.tensor = loaded.values;
  }
  return out;
}

}  // namespace gaid
