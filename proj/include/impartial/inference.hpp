#pragma once

// Whole-image prediction by overlapping tiles, MC-dropout ensembles and
// binary entropy maps.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "impartial/data.hpp"
#include "impartial/model.hpp"
#include "impartial/tensor.hpp"

namespace impartial {

/// Single-channel float raster (row-major), used for probabilities and entropy.
struct ScalarMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  ScalarMap() = default;
  ScalarMap(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(std::size_t(w) * h, fill) {}
  float at(int y, int x) const { return values[std::size_t(y) * width + x]; }
  float& at(int y, int x) { return values[std::size_t(y) * width + x]; }
  bool operator==(const ScalarMap&) const = default;
};

using ProbabilityMap = ScalarMap;
using EntropyMap = ScalarMap;

struct TileConfig {
  int tile = 256;
  int margin = 32;
  /// Both must be multiples of `multiple`; margin < tile/2.
  void validate(int multiple) const;
};

struct Prediction {
  Tensor<float> rho;          // M×H×W
  ProbabilityMap foreground;  // Σ_{m∈m_1} ρ^m
};

/// Tiled forward pass on a normalized image. An axis no longer than the tile
/// is covered by one window padded at the end to the model's size multiple;
/// longer axes use windows of `tile` whose central `tile − 2·margin` is kept.
/// Out-of-image reads reflect about the border pixel. `dropout` enables
/// decoder dropout; tiles consume the stream in raster order.
Prediction predict_full(const Model& model, const MultiChannelImage& image,
                        const TileConfig& tiles = {}, Rng* dropout = nullptr);

/// Foreground probability Σ_{m∈m_1} ρ^m of a membership tensor.
ProbabilityMap foreground_probability(const Tensor<float>& rho, int class0_components);

/// −p ln p − (1−p) ln(1−p) in nats, with 0·ln 0 = 0.
double binary_entropy(double p);

struct EnsembleResult {
  ProbabilityMap mean;
  EntropyMap entropy;
};

/// T tiled passes; pass t draws dropout from make_rng(seed, t). With
/// `dropout` false every pass is deterministic.
EnsembleResult mc_ensemble(const Model& model, const MultiChannelImage& image, int passes = 8,
                           std::uint64_t seed = 0, const TileConfig& tiles = {},
                           bool dropout = true);

/// Mean and per-pixel entropy of already computed per-pass probability maps.
EnsembleResult ensemble_from(const std::vector<ProbabilityMap>& passes);

void save_map(const ScalarMap& map, const std::filesystem::path& path);
ScalarMap load_map(const std::filesystem::path& path);

}  // namespace impartial
