#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <string>

#include <json.hpp>

#include "pedalcw/error.hpp"
#include "pedalcw/vocab.hpp"

namespace pedalcw {

/// Desk-scale decoder hyperparameters. Field order of emb_widths matches the
/// Field enum: family, position, tempo, chord, pedal, pitch, duration.
struct ModelConfig {
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 512;
  int context = 256;  // max super tokens per forward pass
  std::array<int, kFieldCount> emb_widths = {16, 32, 32, 32, 32, 64, 32};
  double dropout = 0.1;
  std::uint64_t seed = 0;

  int embed_concat_width() const {
    return std::accumulate(emb_widths.begin(), emb_widths.end(), 0);
  }

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || context <= 1)
      raise(Errc::invalid_config, "non-positive model dimension");
    if (d_model % n_heads != 0)
      raise(Errc::invalid_config, "d_model must be divisible by n_heads");
    for (int w : emb_widths)
      if (w <= 0) raise(Errc::invalid_config, "non-positive embedding width");
    if (dropout < 0.0 || dropout >= 1.0) raise(Errc::invalid_config, "dropout must be in [0,1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["context"] = c.context;
  nlohmann::ordered_json widths;
  for (int f = 0; f < kFieldCount; ++f) widths[std::string(kFieldNames[f])] = c.emb_widths[f];
  j["emb_widths"] = widths;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.context = j.value("context", c.context);
  if (j.contains("emb_widths")) {
    const auto& widths = j.at("emb_widths");
    for (int f = 0; f < kFieldCount; ++f) {
      c.emb_widths[f] = widths.value(std::string(kFieldNames[f]), c.emb_widths[f]);
    }
  }
  c.dropout = j.value("dropout", c.dropout);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

}  // namespace pedalcw
