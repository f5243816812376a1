#pragma once

// Checkpoint container:
//
//   "AFNC" | u32 version | u64 header_bytes | JSON header | float32 payload
//
// The JSON header carries the model config, epoch, free-form metadata and a
// tensor table [{name, shape:[c,r,k], offset}] where offset counts float32
// elements into the payload. All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "afn/model.hpp"
#include "afn/raster_io.hpp"

namespace afn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json model_config;
  int epoch = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "afn-checkpoint";
  header["model"] = ck.model_config;
  header["epoch"] = ck.epoch;
  header["meta"] = ck.meta;
  auto& table = header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    table.push_back({{"name", name}, {"shape", {t.channels(), t.rows(), t.cols()}}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = header.dump();

  std::string buf("AFNC", 4);
  detail::put_le<std::uint32_t>(buf, kCheckpointVersion);
  detail::put_le<std::uint64_t>(buf, text.size());
  buf += text;
  buf.reserve(buf.size() + offset * 4);
  for (const auto& [_, t] : ck.tensors) {
    for (float v : t.values()) detail::put_le<float>(buf, v);
  }
  // Write then rename so a crash never leaves a truncated checkpoint behind.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  detail::write_file(tmp, buf);
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ResourceError("checkpoint not found: " + path.string());
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "AFNC") != 0) throw FormatError(path.string() + " is not a checkpoint");
  if (detail::get_le<std::uint32_t>(bytes.data() + 4) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version in " + path.string());
  }
  const auto hlen = detail::get_le<std::uint64_t>(bytes.data() + 8);
  if (16 + hlen > bytes.size()) throw CorruptionError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptionError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.model_config = header.value("model", nlohmann::json::object());
  ck.epoch = header.value("epoch", 0);
  ck.meta = header.value("meta", nlohmann::json::object());
  const char* payload = bytes.data() + 16 + hlen;
  const std::size_t payload_floats = (bytes.size() - 16 - hlen) / 4;
  for (const auto& e : header.at("tensors")) {
    const auto shape = e.at("shape").get<std::array<int, 3>>();
    const auto offset = e.at("offset").get<std::size_t>();
    Tensor<float> t(shape[0], shape[1], shape[2]);
    if (offset + t.size() > payload_floats) throw CorruptionError("tensor " + e.at("name").get<std::string>() + " exceeds payload");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::get_le<float>(payload + 4 * (offset + i));
    ck.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

template <typename T>
void store_params(const AfnModel<T>& model, Checkpoint& ck, const std::string& prefix = "") {
  for (const auto& [name, v] : model.params().items()) ck.tensors[prefix + name] = v->value.template cast<float>();
}

// Copies every parameter whose name matches; returns how many were loaded.
// Shape mismatches are errors, missing names are reported to the caller.
template <typename T>
std::size_t restore_params(AfnModel<T>& model, const Checkpoint& ck, const std::string& prefix = "",
                           bool (*filter)(std::string_view) = nullptr) {
  std::size_t loaded = 0;
  for (const auto& [name, v] : model.params().items()) {
    if (filter != nullptr && !filter(name)) continue;
    auto it = ck.tensors.find(prefix + name);
    if (it == ck.tensors.end()) continue;
    if (!(it->second.shape() == v->value.shape())) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + it->second.shape().str() + ", model expects " +
                       v->value.shape().str());
    }
    v->value = it->second.template cast<T>();
    ++loaded;
  }
  return loaded;
}

template <typename T>
Checkpoint make_checkpoint(const AfnModel<T>& model, int epoch) {
  Checkpoint ck;
  ck.model_config = model.config();
  ck.epoch = epoch;
  store_params(model, ck);
  return ck;
}

template <typename T>
AfnModel<T> load_model(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  AfnModel<T> model(ck.model_config.get<ModelConfig>());
  const std::size_t loaded = restore_params(model, ck);
  if (loaded != model.params().items().size()) {
    throw CorruptionError("checkpoint " + path.string() + " is missing model parameters");
  }
  return model;
}

}  // namespace afn
