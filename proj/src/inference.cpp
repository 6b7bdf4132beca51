#include "impartial/inference.hpp"

#include <algorithm>
#include <cmath>

#include "impartial/error.hpp"

namespace impartial {

void TileConfig::validate(int multiple) const {
  if (tile < multiple || tile % multiple != 0) {
    throw ConfigError("tile size must be a positive multiple of " + std::to_string(multiple));
  }
  if (margin < 0 || margin % multiple != 0) {
    throw ConfigError("tile margin must be a non-negative multiple of " + std::to_string(multiple));
  }
  if (2 * margin >= tile) throw ConfigError("tile margin leaves no interior (margin >= tile/2)");
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct Segment {
  int read0;
  int read_len;
  int write0;
  int write_len;
  int local0;
};

std::vector<Segment> segments(int length, const TileConfig& t, int multiple) {
  if (length <= t.tile) {
    const int padded = (length + multiple - 1) / multiple * multiple;
    return {{0, padded, 0, length, 0}};
  }
  std::vector<Segment> out;
  const int interior = t.tile - 2 * t.margin;
  for (int o = 0; o < length; o += interior) {
    out.push_back({o - t.margin, t.tile, o, std::min(interior, length - o), t.margin});
  }
  return out;
}

}  // namespace

ProbabilityMap foreground_probability(const Tensor<float>& rho, int class0_components) {
  ProbabilityMap p(rho.w, rho.h);
  const std::size_t hw = rho.plane();
  for (int m = class0_components; m < rho.c; ++m) {
    const float* r = rho.channel(m);
    for (std::size_t i = 0; i < hw; ++i) p.values[i] += r[i];
  }
  for (auto& v : p.values) v = std::clamp(v, 0.0f, 1.0f);
  return p;
}

Prediction predict_full(const Model& model, const MultiChannelImage& image,
                        const TileConfig& tiles, Rng* dropout) {
  const auto& cfg = model.config();
  tiles.validate(cfg.size_multiple());
  if (image.channels() != cfg.in_channels) {
    throw DataError("image has " + std::to_string(image.channels()) +
                      " channels, model expects " + std::to_string(cfg.in_channels));
  }
  if (!image.normalized()) throw DataError("prediction needs a normalized image");
  const int W = image.width();
  const int H = image.height();
  const int C = image.channels();
  Prediction out;
  out.rho = Tensor<float>(cfg.components, H, W);
  const auto rows = segments(H, tiles, cfg.size_multiple());
  const auto cols = segments(W, tiles, cfg.size_multiple());
  Tensor<float> window;
  for (const auto& sy : rows) {
    for (const auto& sx : cols) {
      window.reshape(C, sy.read_len, sx.read_len);
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < sy.read_len; ++y) {
          const int iy = reflect(sy.read0 + y, H);
          for (int x = 0; x < sx.read_len; ++x) {
            window(c, y, x) = image.at(c, iy, reflect(sx.read0 + x, W));
          }
        }
      }
      const auto heads = model.forward(window, dropout);
      for (int m = 0; m < cfg.components; ++m) {
        for (int y = 0; y < sy.write_len; ++y) {
          for (int x = 0; x < sx.write_len; ++x) {
            out.rho(m, sy.write0 + y, sx.write0 + x) =
                heads.rho(m, sy.local0 + y, sx.local0 + x);
          }
        }
      }
    }
  }
  out.foreground = foreground_probability(out.rho, cfg.class0_components);
  return out;
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

EnsembleResult ensemble_from(const std::vector<ProbabilityMap>& passes) {
  if (passes.empty()) throw ConfigError("ensemble needs at least one pass");
  const int W = passes.front().width;
  const int H = passes.front().height;
  std::vector<double> sum(std::size_t(W) * H, 0.0);
  for (const auto& p : passes) {
    if (p.width != W || p.height != H) throw DataError("ensemble passes differ in size");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += p.values[i];
  }
  EnsembleResult r{ProbabilityMap(W, H), EntropyMap(W, H)};
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = std::clamp(sum[i] / double(passes.size()), 0.0, 1.0);
    r.mean.values[i] = float(mean);
    r.entropy.values[i] = float(binary_entropy(mean));
  }
  return r;
}

EnsembleResult mc_ensemble(const Model& model, const MultiChannelImage& image, int passes,
                           std::uint64_t seed, const TileConfig& tiles, bool dropout) {
  if (passes < 1) throw ConfigError("ensemble needs at least one pass");
  std::vector<ProbabilityMap> maps;
  for (int t = 0; t < passes; ++t) {
    Rng rng = make_rng(seed, std::uint64_t(t));
    maps.push_back(predict_full(model, image, tiles, dropout ? &rng : nullptr).foreground);
  }
  return ensemble_from(maps);
}

void save_map(const ScalarMap& map, const std::filesystem::path& path) {
  save_image(MultiChannelImage(map.width, map.height, 1, map.values), path);
}

ScalarMap load_map(const std::filesystem::path& path) {
  const auto img = load_image(path);
  if (img.channels() != 1) throw DataError("expected a single-channel raster: " + path.string());
  ScalarMap m(img.width(), img.height());
  std::copy(img.values().begin(), img.values().end(), m.values.begin());
  return m;
}

}  // namespace impartial
