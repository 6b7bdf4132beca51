#pragma once

// Core rasters, scribbles, percentile normalization and the on-disk formats.
//
// Raster format: a raw little-endian payload in (channel, row, col) order plus
// a sidecar text header at `<path>.hdr`:
//
//     width 64
//     height 48
//     channels 2
//     dtype float32        (float32 | uint32 | uint8)
//     byteorder little
//
// Scribble format (text, one stroke per line, coordinates are x,y = col,row):
//
//     # impartial scribbles v1
//     size 64 48
//     stroke 1 10,10 10,11
//     stroke 0 3,4

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace impartial {

/// H×W×C float raster stored channel-major.
class MultiChannelImage {
 public:
  MultiChannelImage() = default;
  /// Validates the value count and finiteness; throws DataError otherwise.
  MultiChannelImage(int width, int height, int channels, std::vector<float> values,
                    bool normalized = false);

  static MultiChannelImage zeros(int width, int height, int channels);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool normalized() const { return normalized_; }
  std::size_t plane_size() const { return std::size_t(width_) * height_; }

  float at(int c, int y, int x) const {
    return values_[(std::size_t(c) * height_ + y) * width_ + x];
  }
  std::span<const float> values() const { return values_; }
  std::span<const float> channel(int c) const {
    return std::span<const float>(values_).subspan(std::size_t(c) * plane_size(), plane_size());
  }

  bool operator==(const MultiChannelImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> values_;
  bool normalized_ = false;
};

/// Integer instance raster; 0 is background.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h) : width(w), height(h), labels(std::size_t(w) * h, 0) {}
  LabelMap(int w, int h, std::vector<std::uint32_t> l);

  std::uint32_t at(int y, int x) const { return labels[std::size_t(y) * width + x]; }
  std::uint32_t& at(int y, int x) { return labels[std::size_t(y) * width + x]; }
  std::uint32_t max_label() const;

  /// Relabels instances to 1..K in scan order of first appearance.
  LabelMap canonical() const;
  /// Number of distinct non-zero labels.
  std::size_t instance_count() const;

  bool operator==(const LabelMap&) const = default;
};

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
  auto operator<=>(const Pixel&) const = default;
};

enum class ScribbleClass : int { background = 0, foreground = 1 };

struct Stroke {
  int cls = 0;  // 0 background, 1 foreground
  std::vector<Pixel> pixels;
  bool operator==(const Stroke&) const = default;
};

/// Sparse class annotations. At most one class per pixel.
struct ScribbleSet {
  int width = 0;
  int height = 0;
  std::vector<Stroke> strokes;

  /// Throws DataError on out-of-bounds pixels, empty strokes, unknown classes
  /// or pixels carrying both classes.
  void validate() const;
  /// Per-pixel class raster: -1 unlabeled, 0 background, 1 foreground.
  std::vector<std::int8_t> rasterize() const;
  std::size_t pixel_count() const;
  bool empty() const { return strokes.empty(); }

  /// Union of two sets over the same image, validated.
  ScribbleSet merged(const ScribbleSet& other) const;

  bool operator==(const ScribbleSet&) const = default;
};

struct NormalizationConfig {
  double low_percentile = 1.0;
  double high_percentile = 99.0;
  void validate() const;
};

/// Percentile with linear interpolation between order statistics
/// (rank = p/100 · (n−1)).
double percentile(std::span<const float> values, double p);

/// Per-channel (v − P_low)/(P_high − P_low) clipped to [0,1]. Constant channels
/// map to zero with a warning.
MultiChannelImage normalize(const MultiChannelImage& image, const NormalizationConfig& config = {});

struct RasterHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::string dtype = "float32";
};

std::filesystem::path header_path(const std::filesystem::path& raster);
RasterHeader read_header(const std::filesystem::path& raster);
void write_header(const std::filesystem::path& raster, const RasterHeader& header);

void save_image(const MultiChannelImage& image, const std::filesystem::path& path);
/// Loads float32 or uint8 payloads (uint8 values are widened to float).
MultiChannelImage load_image(const std::filesystem::path& path);

void save_labels(const LabelMap& labels, const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);

void save_scribbles(const ScribbleSet& set, const std::filesystem::path& path);
ScribbleSet load_scribbles(const std::filesystem::path& path);
std::string format_scribbles(const ScribbleSet& set);
ScribbleSet parse_scribbles(const std::string& text);

/// Binary PGM (P5) for display; values in [lo, hi] are mapped to 0..255.
void write_pgm(const std::filesystem::path& path, std::span<const float> values, int width,
               int height, float lo = 0.0f, float hi = 1.0f);
/// Imports an 8-bit binary PGM as a single-channel image.
MultiChannelImage load_pgm(const std::filesystem::path& path);

/// Writes `bytes` to a temporary sibling then renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace impartial
