#ifndef TRIAN_CHECKPOINT_HPP
#define TRIAN_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trian/error.hpp"
#include "trian/model.hpp"

namespace trian {

// Checkpoint = JSON manifest (parameter name/shape/offset directory, the
// full ModelConfig, and the run's RNG seed) + one little-endian float32 blob.

namespace detail {

inline void write_f32_le(std::ofstream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
               static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(b, 4);
}

inline float read_f32_le(const unsigned char* p) {
  uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                  (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const TriANModelT<T>& model, uint64_t seed,
                     const std::string& manifest_path, const std::string& blob_name = "model.bin") {
  namespace fs = std::filesystem;
  fs::path blob_path = fs::path(manifest_path).parent_path() / blob_name;

  nlohmann::json manifest;
  manifest["format"] = "trian-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = model.config().to_json();
  manifest["seed"] = seed;
  manifest["blob"] = blob_name;

  nlohmann::json params = nlohmann::json::array();
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw CheckpointError("cannot write blob: " + blob_path.string());
  uint64_t offset = 0;
  for (const auto& [name, t] : model.params().items()) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    for (T v : t.values()) detail::write_f32_le(blob, static_cast<float>(v));
    offset += static_cast<uint64_t>(t.numel()) * 4;
  }
  manifest["params"] = std::move(params);

  std::ofstream out(manifest_path);
  if (!out) throw CheckpointError("cannot write manifest: " + manifest_path);
  out << manifest.dump(2) << '\n';
}

template <typename T>
TriANModelT<T> load_checkpoint(const std::string& manifest_path, uint64_t* seed_out = nullptr) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw CheckpointError("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(manifest_path + ": " + e.what());
  }
  if (manifest.value("format", "") != "trian-checkpoint")
    throw CheckpointError(manifest_path + ": not a checkpoint manifest");

  ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
  if (seed_out) *seed_out = manifest.at("seed").get<uint64_t>();

  auto expected = TriANModelT<T>::expected_param_shapes(cfg);
  const auto& plist = manifest.at("params");
  if (plist.size() != expected.size())
    throw CheckpointError(manifest_path + ": expected " + std::to_string(expected.size()) +
                          " parameters, manifest lists " + std::to_string(plist.size()));

  fs::path blob_path =
      fs::path(manifest_path).parent_path() / manifest.value("blob", "model.bin");
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw CheckpointError("cannot open blob: " + blob_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)),
                                   std::istreambuf_iterator<char>());

  TriANModelT<T> model(cfg);
  size_t i = 0;
  for (const auto& entry : plist) {
    const auto& [want_name, want_shape] = expected[i++];
    std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    if (name != want_name)
      throw CheckpointError(manifest_path + ": parameter '" + name + "' where '" + want_name +
                            "' was expected");
    if (shape != want_shape)
      throw CheckpointError(manifest_path + ": parameter '" + name + "' has shape " +
                            shape_str(shape) + ", config requires " + shape_str(want_shape));
    uint64_t offset = entry.at("offset").get<uint64_t>();
    auto& t = model.param(name);
    uint64_t need = offset + static_cast<uint64_t>(t.numel()) * 4;
    if (need > bytes.size())
      throw CheckpointError(blob_path.string() + ": parameter '" + name +
                            "' extends past end of blob");
    for (int64_t j = 0; j < t.numel(); ++j)
      t.values()[static_cast<size_t>(j)] =
          static_cast<T>(detail::read_f32_le(bytes.data() + offset + j * 4));
  }
  return model;
}

}  // namespace trian

#endif  // TRIAN_CHECKPOINT_HPP
