#include "impartial/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace impartial {

void SamplingConfig::validate() const {
  if (patches_per_image < 1) throw ConfigError("patches per image must be >= 1");
  if (patch_size < 1) throw ConfigError("patch size must be >= 1");
  if (!(scribble_bias >= 0.0 && scribble_bias <= 1.0)) {
    throw ConfigError("scribble bias must lie in [0,1]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0,1)");
  }
}

PatchPair crop_patch(const TrainingImage& img, std::size_t source, int x0, int y0, int size) {
  const auto& im = img.image;
  PatchPair p;
  p.source = source;
  p.x0 = x0;
  p.y0 = y0;
  p.size = size;
  p.image = Tensor<float>(im.channels(), size, size);
  for (int c = 0; c < im.channels(); ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) p.image(c, y, x) = im.at(c, y0 + y, x0 + x);
    }
  }
  const auto raster = img.scribbles.strokes.empty() ? std::vector<std::int8_t>{}
                                                    : img.scribbles.rasterize();
  if (!raster.empty()) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const auto cls = raster[std::size_t(y0 + y) * im.width() + x0 + x];
        if (cls >= 0) p.scribbles.push_back({std::uint32_t(y * size + x), cls});
      }
    }
  }
  return p;
}

namespace {

struct ImagePlan {
  std::size_t index;
  std::vector<Pixel> scribbled;
  std::vector<std::int8_t> raster;
  int val_count = 0;
};

bool cell_has_scribble(const ImagePlan& plan, int width, int x0, int y0, int size) {
  if (plan.raster.empty()) return false;
  for (int y = y0; y < y0 + size; ++y) {
    for (int x = x0; x < x0 + size; ++x) {
      if (plan.raster[std::size_t(y) * width + x] >= 0) return true;
    }
  }
  return false;
}

}  // namespace

PatchSplit sample_patches(std::span<const TrainingImage> dataset, const SamplingConfig& config,
                          std::uint64_t seed) {
  config.validate();
  const int ps = config.patch_size;
  std::vector<ImagePlan> plans;
  bool any_scribbles = false;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& im = dataset[i].image;
    if (im.width() < ps || im.height() < ps) {
      log::warn("image '" + dataset[i].id + "' is smaller than the patch size; skipped");
      continue;
    }
    ImagePlan plan;
    plan.index = i;
    if (!dataset[i].scribbles.strokes.empty()) {
      plan.raster = dataset[i].scribbles.rasterize();
      for (int y = 0; y < im.height(); ++y) {
        for (int x = 0; x < im.width(); ++x) {
          if (plan.raster[std::size_t(y) * im.width() + x] >= 0) plan.scribbled.push_back({x, y});
        }
      }
    }
    any_scribbles = any_scribbles || !plan.scribbled.empty();
    plans.push_back(std::move(plan));
  }
  if (plans.empty()) throw DataError("no image is large enough for the patch size");
  if (!any_scribbles) throw DataError("no scribbles in the dataset");

  // Validation quota, distributed round-robin and capped by grid capacity.
  const int B = config.patches_per_image;
  const auto total = std::size_t(B) * plans.size();
  auto n_val = std::size_t(std::lround(config.validation_fraction * double(total)));
  std::vector<int> capacity;
  for (const auto& plan : plans) {
    const auto& im = dataset[plan.index].image;
    capacity.push_back(std::min((im.width() / ps) * (im.height() / ps), B - 1));
  }
  for (std::size_t assigned = 0, round = 0; assigned < n_val && round < total; ++round) {
    auto& plan = plans[round % plans.size()];
    if (plan.val_count < capacity[round % plans.size()]) {
      ++plan.val_count;
      ++assigned;
    }
  }

  PatchSplit split;
  for (auto& plan : plans) {
    const auto& img = dataset[plan.index];
    const int W = img.image.width();
    const int H = img.image.height();
    Rng rng = make_rng(seed, plan.index);

    // Validation cells, scribbled cells first.
    std::vector<std::pair<int, int>> cells, scribbled_cells, plain_cells;
    for (int gy = 0; gy + ps <= H; gy += ps) {
      for (int gx = 0; gx + ps <= W; gx += ps) {
        (cell_has_scribble(plan, W, gx, gy, ps) ? scribbled_cells : plain_cells).push_back({gx, gy});
      }
    }
    std::shuffle(scribbled_cells.begin(), scribbled_cells.end(), rng);
    std::shuffle(plain_cells.begin(), plain_cells.end(), rng);
    cells = scribbled_cells;
    cells.insert(cells.end(), plain_cells.begin(), plain_cells.end());
    std::vector<PatchPair> val;
    for (int v = 0; v < plan.val_count; ++v) {
      val.push_back(crop_patch(img, plan.index, cells[std::size_t(v)].first,
                               cells[std::size_t(v)].second, ps));
    }

    auto far_from_val = [&](int x0, int y0) {
      const double cx = x0 + ps / 2.0, cy = y0 + ps / 2.0;
      for (const auto& v : val) {
        if (std::hypot(cx - v.center_x(), cy - v.center_y()) < ps / 2.0) return false;
      }
      return true;
    };

    std::bernoulli_distribution anchored(config.scribble_bias);
    std::uniform_int_distribution<int> ux(0, W - ps), uy(0, H - ps);
    const int n_train = B - plan.val_count;
    for (int t = 0; t < n_train; ++t) {
      bool placed = false;
      int x0 = 0, y0 = 0;
      if (!plan.scribbled.empty() && anchored(rng)) {
        std::uniform_int_distribution<std::size_t> pick(0, plan.scribbled.size() - 1);
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
          const Pixel s = plan.scribbled[pick(rng)];
          std::uniform_int_distribution<int> ax(std::max(0, s.x - ps + 1), std::min(s.x, W - ps));
          std::uniform_int_distribution<int> ay(std::max(0, s.y - ps + 1), std::min(s.y, H - ps));
          x0 = ax(rng);
          y0 = ay(rng);
          placed = far_from_val(x0, y0);
        }
      }
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        x0 = ux(rng);
        y0 = uy(rng);
        placed = far_from_val(x0, y0);
      }
      if (!placed) {
        throw DataError("cannot place a training patch in '" + img.id +
                        "' away from its validation patches");
      }
      split.train.push_back(crop_patch(img, plan.index, x0, y0, ps));
    }
    for (auto& v : val) split.val.push_back(std::move(v));
  }
  return split;
}

template <class T>
BlindSpotResult<T> blindspot(const Tensor<T>& patch, double p, int radius, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("imputation probability must lie in [0,1]");
  if (radius < 1) throw ConfigError("replacement window radius must be >= 1");
  BlindSpotResult<T> out{patch, std::vector<std::uint8_t>(patch.plane(), 0)};
  if (patch.plane() < 2) return out;
  std::bernoulli_distribution select(p);
  std::uniform_int_distribution<int> offset(-radius, radius);
  const std::size_t hw = patch.plane();
  for (int y = 0; y < patch.h; ++y) {
    for (int x = 0; x < patch.w; ++x) {
      if (!select(rng)) continue;
      int sx, sy;
      do {
        sx = x + offset(rng);
        sy = y + offset(rng);
      } while ((sx == x && sy == y) || sx < 0 || sy < 0 || sx >= patch.w || sy >= patch.h);
      const std::size_t i = std::size_t(y) * patch.w + x;
      const std::size_t j = std::size_t(sy) * patch.w + sx;
      for (int c = 0; c < patch.c; ++c) out.imputed.data[c * hw + i] = patch.data[c * hw + j];
      out.mask[i] = 1;
    }
  }
  return out;
}

template BlindSpotResult<float> blindspot<float>(const Tensor<float>&, double, int, Rng&);
template BlindSpotResult<double> blindspot<double>(const Tensor<double>&, double, int, Rng&);

}  // namespace impartial
