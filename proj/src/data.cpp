#include "impartial/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace fs = std::filesystem;

namespace impartial {

static_assert(std::endian::native == std::endian::little,
              "raster payloads are stored little-endian; big-endian hosts need byte swapping");

namespace {

std::string describe_index(std::size_t flat, int width, int height) {
  const std::size_t plane = std::size_t(width) * height;
  const std::size_t c = flat / plane;
  const std::size_t r = (flat % plane) / width;
  const std::size_t col = flat % width;
  std::ostringstream os;
  os << "index " << flat << " (channel " << c << ", row " << r << ", col " << col << ")";
  return os.str();
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "float32" || dtype == "uint32") return 4;
  if (dtype == "uint8") return 1;
  throw DataError("unsupported dtype '" + dtype + "'");
}

std::string read_payload(const fs::path& path, const RasterHeader& h) {
  std::string bytes = read_file(path);
  const std::size_t expected =
      std::size_t(h.width) * h.height * h.channels * dtype_size(h.dtype);
  if (bytes.size() != expected) {
    std::ostringstream os;
    os << "dimension mismatch in " << path << ": header " << h.width << "x" << h.height << "x"
       << h.channels << " " << h.dtype << " needs " << expected << " bytes, payload has "
       << bytes.size();
    throw DataError(os.str());
  }
  return bytes;
}

}  // namespace

// ---------------------------------------------------------------------------
// MultiChannelImage

MultiChannelImage::MultiChannelImage(int width, int height, int channels,
                                     std::vector<float> values, bool normalized)
    : width_(width), height_(height), channels_(channels), values_(std::move(values)),
      normalized_(normalized) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw DataError("image dimensions must be positive");
  }
  if (values_.size() != std::size_t(width) * height * channels) {
    std::ostringstream os;
    os << "dimension mismatch: " << width << "x" << height << "x" << channels << " needs "
       << std::size_t(width) * height * channels << " values, got " << values_.size();
    throw DataError(os.str());
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw DataError("non-finite value at " + describe_index(i, width, height));
    }
    if (normalized && (values_[i] < 0.0f || values_[i] > 1.0f)) {
      throw DataError("normalized image has value outside [0,1] at " +
                      describe_index(i, width, height));
    }
  }
}

MultiChannelImage MultiChannelImage::zeros(int width, int height, int channels) {
  return MultiChannelImage(width, height, channels,
                           std::vector<float>(std::size_t(width) * height * channels, 0.0f));
}

// ---------------------------------------------------------------------------
// LabelMap

LabelMap::LabelMap(int w, int h, std::vector<std::uint32_t> l)
    : width(w), height(h), labels(std::move(l)) {
  if (labels.size() != std::size_t(w) * h) {
    throw DataError("label map size does not match its dimensions");
  }
}

std::uint32_t LabelMap::max_label() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

LabelMap LabelMap::canonical() const {
  LabelMap out(width, height);
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  std::uint32_t next = 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = labels[i];
    if (l == 0) continue;
    auto [it, inserted] = remap.try_emplace(l, next);
    if (inserted) ++next;
    out.labels[i] = it->second;
  }
  return out;
}

std::size_t LabelMap::instance_count() const {
  std::set<std::uint32_t> ids(labels.begin(), labels.end());
  ids.erase(0);
  return ids.size();
}

// ---------------------------------------------------------------------------
// ScribbleSet

void ScribbleSet::validate() const {
  if (width <= 0 || height <= 0) throw DataError("scribble set has no image dimensions");
  std::map<Pixel, int> seen;
  for (const auto& s : strokes) {
    if (s.cls != 0 && s.cls != 1) {
      throw DataError("scribble class must be 0 or 1, got " + std::to_string(s.cls));
    }
    if (s.pixels.empty()) throw DataError("empty stroke");
    for (const auto& p : s.pixels) {
      if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
        std::ostringstream os;
        os << "scribble coordinate (" << p.x << "," << p.y << ") outside " << width << "x"
           << height << " image";
        throw DataError(os.str());
      }
      auto [it, inserted] = seen.try_emplace(p, s.cls);
      if (!inserted && it->second != s.cls) {
        std::ostringstream os;
        os << "scribble class conflict at (" << p.x << "," << p.y << ")";
        throw DataError(os.str());
      }
    }
  }
}

std::vector<std::int8_t> ScribbleSet::rasterize() const {
  std::vector<std::int8_t> mask(std::size_t(width) * height, -1);
  for (const auto& s : strokes) {
    for (const auto& p : s.pixels) mask[std::size_t(p.y) * width + p.x] = std::int8_t(s.cls);
  }
  return mask;
}

std::size_t ScribbleSet::pixel_count() const {
  std::size_t n = 0;
  for (const auto& s : strokes) n += s.pixels.size();
  return n;
}

ScribbleSet ScribbleSet::merged(const ScribbleSet& other) const {
  if (other.width != width || other.height != height) {
    throw DataError("cannot merge scribble sets of different image sizes");
  }
  ScribbleSet out = *this;
  out.strokes.insert(out.strokes.end(), other.strokes.begin(), other.strokes.end());
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

void NormalizationConfig::validate() const {
  if (!(0.0 <= low_percentile && low_percentile < high_percentile && high_percentile <= 100.0)) {
    throw ConfigError("normalization percentiles must satisfy 0 <= low < high <= 100");
  }
}

double percentile(std::span<const float> values, double p) {
  if (values.empty()) throw DataError("percentile of an empty sample");
  std::vector<float> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = p / 100.0 * double(sorted.size() - 1);
  const auto lo = std::size_t(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - double(lo);
  return double(sorted[lo]) + frac * (double(sorted[hi]) - double(sorted[lo]));
}

MultiChannelImage normalize(const MultiChannelImage& image, const NormalizationConfig& config) {
  config.validate();
  if (image.normalized()) throw DataError("image is already normalized");
  std::vector<float> out(image.values().size());
  for (int c = 0; c < image.channels(); ++c) {
    const auto ch = image.channel(c);
    const double lo = percentile(ch, config.low_percentile);
    const double hi = percentile(ch, config.high_percentile);
    float* dst = out.data() + std::size_t(c) * image.plane_size();
    if (!(hi > lo)) {
      log::warn("channel " + std::to_string(c) + " is constant; mapped to zeros");
      std::fill(dst, dst + ch.size(), 0.0f);
      continue;
    }
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      dst[i] = float(std::clamp((double(ch[i]) - lo) * scale, 0.0, 1.0));
    }
  }
  return MultiChannelImage(image.width(), image.height(), image.channels(), std::move(out), true);
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path header_path(const fs::path& raster) {
  fs::path h = raster;
  h += ".hdr";
  return h;
}

RasterHeader read_header(const fs::path& raster) {
  const auto hp = header_path(raster);
  if (!fs::exists(hp)) throw DataError("missing raster header " + hp.string());
  std::istringstream in(read_file(hp));
  RasterHeader h;
  std::string key;
  while (in >> key) {
    if (key == "width") in >> h.width;
    else if (key == "height") in >> h.height;
    else if (key == "channels") in >> h.channels;
    else if (key == "dtype") in >> h.dtype;
    else if (key == "byteorder") {
      std::string order;
      in >> order;
      if (order != "little") throw DataError("unsupported byte order '" + order + "'");
    } else {
      throw DataError("unknown header key '" + key + "' in " + hp.string());
    }
    if (!in) throw DataError("malformed header " + hp.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.channels <= 0) {
    throw DataError("header " + hp.string() + " has non-positive dimensions");
  }
  return h;
}

void write_header(const fs::path& raster, const RasterHeader& h) {
  std::ostringstream os;
  os << "width " << h.width << "\nheight " << h.height << "\nchannels " << h.channels
     << "\ndtype " << h.dtype << "\nbyteorder little\n";
  write_file_atomic(header_path(raster), os.str());
}

void save_image(const MultiChannelImage& image, const fs::path& path) {
  const auto vals = image.values();
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(vals.data()),
                                           vals.size() * sizeof(float)));
  write_header(path, {image.width(), image.height(), image.channels(), "float32"});
}

MultiChannelImage load_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing image file " + path.string());
  const auto h = read_header(path);
  const std::string bytes = read_payload(path, h);
  const std::size_t n = std::size_t(h.width) * h.height * h.channels;
  std::vector<float> values(n);
  if (h.dtype == "float32") {
    std::memcpy(values.data(), bytes.data(), n * sizeof(float));
  } else if (h.dtype == "uint8") {
    for (std::size_t i = 0; i < n; ++i) values[i] = float(static_cast<unsigned char>(bytes[i]));
  } else {
    throw DataError("image dtype must be float32 or uint8, got " + h.dtype);
  }
  return MultiChannelImage(h.width, h.height, h.channels, std::move(values));
}

void save_labels(const LabelMap& labels, const fs::path& path) {
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(labels.labels.data()),
                                           labels.labels.size() * sizeof(std::uint32_t)));
  write_header(path, {labels.width, labels.height, 1, "uint32"});
}

LabelMap load_labels(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing label file " + path.string());
  const auto h = read_header(path);
  if (h.dtype != "uint32" || h.channels != 1) {
    throw DataError("label map must be single-channel uint32: " + path.string());
  }
  const std::string bytes = read_payload(path, h);
  std::vector<std::uint32_t> labels(std::size_t(h.width) * h.height);
  std::memcpy(labels.data(), bytes.data(), bytes.size());
  return LabelMap(h.width, h.height, std::move(labels));
}

std::string format_scribbles(const ScribbleSet& set) {
  std::ostringstream os;
  os << "# impartial scribbles v1\n";
  os << "size " << set.width << " " << set.height << "\n";
  for (const auto& s : set.strokes) {
    os << "stroke " << s.cls;
    for (const auto& p : s.pixels) os << " " << p.x << "," << p.y;
    os << "\n";
  }
  return os.str();
}

ScribbleSet parse_scribbles(const std::string& text) {
  ScribbleSet set;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_size = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "size") {
      ls >> set.width >> set.height;
      if (!ls) throw DataError("malformed size line " + std::to_string(lineno));
      have_size = true;
    } else if (key == "stroke") {
      Stroke s;
      if (!(ls >> s.cls)) throw DataError("malformed stroke on line " + std::to_string(lineno));
      std::string tok;
      while (ls >> tok) {
        const auto comma = tok.find(',');
        if (comma == std::string::npos) {
          throw DataError("malformed coordinate '" + tok + "' on line " + std::to_string(lineno));
        }
        try {
          s.pixels.push_back({std::stoi(tok.substr(0, comma)), std::stoi(tok.substr(comma + 1))});
        } catch (const std::exception&) {
          throw DataError("malformed coordinate '" + tok + "' on line " + std::to_string(lineno));
        }
      }
      set.strokes.push_back(std::move(s));
    } else {
      throw DataError("unknown scribble record '" + key + "' on line " + std::to_string(lineno));
    }
  }
  if (!have_size) throw DataError("scribble file lacks a size line");
  set.validate();
  return set;
}

void save_scribbles(const ScribbleSet& set, const fs::path& path) {
  set.validate();
  write_file_atomic(path, format_scribbles(set));
}

ScribbleSet load_scribbles(const fs::path& path) { return parse_scribbles(read_file(path)); }

void write_pgm(const fs::path& path, std::span<const float> values, int width, int height,
               float lo, float hi) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
  out.reserve(out.size() + values.size());
  for (float v : values) {
    out.push_back(char(std::uint8_t(std::lround(std::clamp((v - lo) * scale, 0.0f, 255.0f)))));
  }
  write_file_atomic(path, out);
}

MultiChannelImage load_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || !in || maxval != 255) {
    throw DataError("only 8-bit binary PGM (P5, maxval 255) is supported: " + path.string());
  }
  in.get();
  const auto offset = std::size_t(in.tellg());
  if (bytes.size() - offset != std::size_t(w) * h) {
    throw DataError("dimension mismatch in PGM payload " + path.string());
  }
  std::vector<float> values(std::size_t(w) * h);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = float(static_cast<unsigned char>(bytes[offset + i]));
  }
  return MultiChannelImage(w, h, 1, std::move(values));
}

}  // namespace impartial
