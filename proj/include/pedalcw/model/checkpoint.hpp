#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedalcw/error.hpp"
#include "pedalcw/model/config.hpp"
#include "pedalcw/model/net.hpp"

// Checkpoint file: a JSON header (config, training step, tensor directory
// with byte offsets), a single NUL separator, then the raw float32 payload
// in little-endian row-major order. Weights are stored as float32 regardless
// of the in-memory scalar type.

namespace pedalcw {

inline constexpr std::string_view kCheckpointMagic = "pedalcw-ckpt v1";

namespace ckpt_detail {

inline void put_f32_le(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(std::uint8_t(bits));
  out.push_back(std::uint8_t(bits >> 8));
  out.push_back(std::uint8_t(bits >> 16));
  out.push_back(std::uint8_t(bits >> 24));
}

inline float get_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                       (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace ckpt_detail

template <typename Real>
std::vector<std::uint8_t> checkpoint_bytes(const Model<Real>& model, std::int64_t step) {
  nlohmann::ordered_json header;
  header["format"] = kCheckpointMagic;
  header["config"] = config_json(model.config());
  header["step"] = step;
  auto tensors = nlohmann::ordered_json::array();
  std::int64_t offset = 0;
  for (const Tensor<Real>* t : model.params()) {
    nlohmann::ordered_json entry;
    entry["name"] = t->name;
    entry["rows"] = t->rows;
    entry["cols"] = t->cols;
    entry["offset"] = offset;
    tensors.push_back(entry);
    offset += t->size() * 4;
  }
  header["tensors"] = tensors;

  std::string header_text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(header_text.size() + 1 + std::size_t(offset));
  out.insert(out.end(), header_text.begin(), header_text.end());
  out.push_back(0);
  for (const Tensor<Real>* t : model.params()) {
    for (Real v : t->w) ckpt_detail::put_f32_le(out, float(v));
  }
  return out;
}

template <typename Real>
struct LoadedCheckpoint {
  Model<Real> model;
  std::int64_t step = 0;
};

template <typename Real>
LoadedCheckpoint<Real> checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes) {
  auto nul = std::find(bytes.begin(), bytes.end(), std::uint8_t(0));
  if (nul == bytes.end()) raise(Errc::bad_checkpoint, "missing header separator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), nul);
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::bad_checkpoint, std::string("header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointMagic)
    raise(Errc::bad_checkpoint, "unrecognized format tag");

  ModelConfig config;
  try {
    config = config_from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::bad_checkpoint, std::string("config: ") + e.what());
  }

  LoadedCheckpoint<Real> loaded{Model<Real>(config), header.value("step", std::int64_t(0))};
  const std::uint8_t* payload = &*nul + 1;
  std::size_t payload_size = std::size_t(bytes.end() - nul) - 1;

  if (!header.contains("tensors") || !header["tensors"].is_array())
    raise(Errc::bad_checkpoint, "missing tensor directory");
  for (const auto& entry : header["tensors"]) {
    std::string name = entry.value("name", "");
    Tensor<Real>* t = loaded.model.find_param(name);
    if (!t) raise(Errc::bad_checkpoint, "unknown tensor '" + name + "'");
    if (entry.value("rows", -1) != t->rows || entry.value("cols", -1) != t->cols)
      raise(Errc::bad_checkpoint, "shape mismatch for tensor '" + name + "'");
    std::int64_t offset = entry.value("offset", std::int64_t(-1));
    if (offset < 0 || std::size_t(offset) + std::size_t(t->size()) * 4 > payload_size)
      raise(Errc::bad_checkpoint, "tensor '" + name + "' past end of payload");
    for (std::int64_t i = 0; i < t->size(); ++i)
      t->w[std::size_t(i)] = Real(ckpt_detail::get_f32_le(payload + offset + i * 4));
  }
  return loaded;
}

template <typename Real>
void save_checkpoint(const std::string& path, const Model<Real>& model, std::int64_t step) {
  auto bytes = checkpoint_bytes(model, step);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::bad_checkpoint, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) raise(Errc::bad_checkpoint, "short write to '" + path + "'");
}

template <typename Real>
LoadedCheckpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::bad_checkpoint, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return checkpoint_from_bytes<Real>(bytes);
}

}  // namespace pedalcw
