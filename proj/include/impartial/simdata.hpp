#pragma once

// Synthetic multi-channel cell images with exact instance labels, simulated
// scribble annotators and dataset directories.
//
// Dataset directory layout:
//
//     dataset.json                 {"version":1,"images":[{"id","image","labels","scribbles"}]}
//     images/<id>.raw (+ .hdr)     float32, C channels
//     labels/<id>.lbl (+ .hdr)     uint32
//     scribbles/<id>.txt           optional

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "impartial/data.hpp"
#include "impartial/inference.hpp"

namespace impartial {

struct SynthConfig {
  int width = 256;
  int height = 256;
  int channels = 2;
  int images = 8;
  int cells_min = 40;
  int cells_max = 60;
  double radius_min = 6.0;  // ellipse semi-axes are drawn from [radius_min, radius_max]
  double radius_max = 10.0;
  double gap = 2.0;  // extra spacing between bounding circles
  std::vector<double> foreground_mean{0.7};  // per channel, or one shared value
  std::vector<double> background_mean{0.2};
  double subpopulation_offset = 0.08;  // ±δ, alternating sign across channels
  double jitter = 0.05;                // per-cell uniform offset in [−j, j]
  double noise = 0.1;                  // σ_n of the additive Gaussian noise
  double background_period = 128.0;    // wavelength of the background pattern
  std::uint64_t seed = 0;

  double fg_mean(int c) const;
  double bg_mean(int c) const;
  void validate() const;
};

struct SynthSample {
  std::string id;
  MultiChannelImage image;  // not normalized
  LabelMap labels;
  std::vector<int> cell_population;  // per instance (index id−1): 0 or 1
};

/// Deterministic in `config.seed`. Throws ConfigError when the requested cell
/// count cannot be packed.
std::vector<SynthSample> generate(const SynthConfig& config);

enum class SelectionPolicy { random, entropy };

struct ScribbleBudget {
  double fraction = 0.1;  // of the ground-truth instances
  SelectionPolicy policy = SelectionPolicy::random;
  long count = -1;  // exact instance count; overrides `fraction` when >= 0
};

struct SimulatedScribbles {
  ScribbleSet scribbles;
  std::vector<std::uint32_t> instances;  // annotated instance IDs
};

/// Annotates ⌈fraction·K⌉ instances (fewer if `exclude` leaves fewer
/// candidates): a foreground skeleton of the instance eroded by one pixel
/// (centroid fallback) and a background ring at Chebyshev distance 2 that
/// avoids every instance.
SimulatedScribbles simulate_scribbles(const LabelMap& labels, const ScribbleBudget& budget,
                                      std::uint64_t seed, const EntropyMap* entropy = nullptr,
                                      std::span<const std::uint32_t> exclude = {});

/// Instance IDs ordered by mean entropy (descending), ties by ID.
std::vector<std::uint32_t> entropy_rank(const LabelMap& labels, const EntropyMap& entropy);

/// Ceil of fraction·count, robust to representation error (0.1·50 → 5).
std::size_t budget_count(double fraction, std::size_t count);

/// Zhang–Suen thinning of a binary mask.
std::vector<std::uint8_t> skeletonize(std::vector<std::uint8_t> mask, int width, int height);

struct DatasetEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path labels;     // empty when absent
  std::filesystem::path scribbles;  // empty when absent
};

struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
};

/// Writes rasters, labels, optional scribbles (one per sample or none) and
/// dataset.json.
Dataset write_dataset(const std::filesystem::path& root, std::span<const SynthSample> samples,
                      std::span<const ScribbleSet> scribbles = {});
Dataset read_dataset(const std::filesystem::path& root);

/// Adds or replaces the scribble file of each entry and rewrites dataset.json.
void attach_scribbles(Dataset& dataset, std::span<const ScribbleSet> scribbles);

}  // namespace impartial
