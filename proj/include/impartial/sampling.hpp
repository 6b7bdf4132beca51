#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "impartial/data.hpp"
#include "impartial/losses.hpp"
#include "impartial/rng.hpp"
#include "impartial/tensor.hpp"

namespace impartial {

/// A normalized training image with its scribbles.
struct TrainingImage {
  std::string id;
  MultiChannelImage image;
  ScribbleSet scribbles;
};

struct SamplingConfig {
  int patches_per_image = 16;  // B
  int patch_size = 128;
  double scribble_bias = 0.9;  // probability a patch is anchored on a scribbled pixel
  double validation_fraction = 0.1;
  void validate() const;
};

struct PatchPair {
  Tensor<float> image;
  std::vector<ScribblePixel> scribbles;
  std::size_t source = 0;  // index into the dataset
  int x0 = 0;
  int y0 = 0;
  int size = 0;

  double center_x() const { return x0 + size / 2.0; }
  double center_y() const { return y0 + size / 2.0; }
};

struct PatchSplit {
  std::vector<PatchPair> train;
  std::vector<PatchPair> val;
};

/// B patches per image (N·B in total). Validation patches occupy grid cells
/// and every training patch of the same image keeps its center at least
/// patch_size/2 away from every validation center.
PatchSplit sample_patches(std::span<const TrainingImage> dataset, const SamplingConfig& config,
                          std::uint64_t seed);

/// Crops a patch (all channels) and its scribbles.
PatchPair crop_patch(const TrainingImage& image, std::size_t source, int x0, int y0, int size);

template <class T>
struct BlindSpotResult {
  Tensor<T> imputed;
  /// One entry per pixel; channels of a selected pixel are replaced jointly,
  /// so the mask is shared by all channels.
  std::vector<std::uint8_t> mask;
};

/// Each pixel is selected with probability p and takes the value of a
/// uniformly drawn pixel j ≠ i in the (2r+1)² window clipped to the patch.
template <class T>
BlindSpotResult<T> blindspot(const Tensor<T>& patch, double p, int radius, Rng& rng);

}  // namespace impartial
