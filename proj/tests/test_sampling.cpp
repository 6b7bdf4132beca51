#include <cmath>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"

#include "impartial/error.hpp"
#include "impartial/sampling.hpp"

using namespace impartial;

namespace {

TrainingImage scribbled_image(const std::string& id, int w, int h, std::uint64_t seed,
                              bool everywhere = false) {
  TrainingImage t;
  t.id = id;
  t.image = testing::random_image(w, h, 2, seed, 0.0f, 1.0f, true);
  t.scribbles = {w, h, {}};
  Stroke fg{1, {}}, bg{0, {}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (everywhere) {
        ((x + y) % 2 ? fg : bg).pixels.push_back({x, y});
      } else if (y == h / 3 && x % 7 == 0) {
        fg.pixels.push_back({x, y});
      }
    }
  }
  t.scribbles.strokes.push_back(fg);
  if (!bg.pixels.empty()) t.scribbles.strokes.push_back(bg);
  return t;
}

}  // namespace

TEST_CASE("N images and B patches per image give N·B patches") {
  const std::vector<TrainingImage> data{scribbled_image("a", 96, 96, 1), scribbled_image("b", 96, 96, 2)};
  SamplingConfig cfg;
  cfg.patches_per_image = 8;
  cfg.patch_size = 32;
  const auto split = sample_patches(data, cfg, 3);
  CHECK(split.train.size() + split.val.size() == 16);
  CHECK(split.val.size() == 2);
}

TEST_CASE("patch offsets are deterministic in the seed") {
  const std::vector<TrainingImage> data{scribbled_image("a", 128, 96, 1)};
  SamplingConfig cfg;
  cfg.patch_size = 32;
  const auto a = sample_patches(data, cfg, 5);
  const auto b = sample_patches(data, cfg, 5);
  const auto c = sample_patches(data, cfg, 6);
  auto offsets = [](const PatchSplit& s) {
    std::vector<std::pair<int, int>> o;
    for (const auto& p : s.train) o.push_back({p.x0, p.y0});
    for (const auto& p : s.val) o.push_back({p.x0, p.y0});
    return o;
  };
  CHECK(offsets(a) == offsets(b));
  CHECK(offsets(a) != offsets(c));
}

TEST_CASE("patches lie inside the image and carry the source scribbles") {
  const std::vector<TrainingImage> data{scribbled_image("a", 100, 80, 1), scribbled_image("b", 64, 120, 2)};
  SamplingConfig cfg;
  cfg.patch_size = 32;
  cfg.patches_per_image = 20;
  const auto split = sample_patches(data, cfg, 9);
  for (const auto* list : {&split.train, &split.val}) {
    for (const auto& p : *list) {
      const auto& src = data[p.source];
      REQUIRE(p.x0 >= 0);
      REQUIRE(p.y0 >= 0);
      REQUIRE(p.x0 + 32 <= src.image.width());
      REQUIRE(p.y0 + 32 <= src.image.height());
      const auto raster = src.scribbles.rasterize();
      std::size_t expected = 0;
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          REQUIRE(p.image(1, y, x) == src.image.at(1, p.y0 + y, p.x0 + x));
          expected += raster[std::size_t(p.y0 + y) * src.image.width() + p.x0 + x] >= 0;
        }
      }
      REQUIRE(p.scribbles.size() == expected);
      for (const auto& s : p.scribbles) {
        const int y = int(s.index) / 32, x = int(s.index) % 32;
        REQUIRE(raster[std::size_t(p.y0 + y) * src.image.width() + p.x0 + x] == s.cls);
      }
    }
  }
}

TEST_CASE("validation and training centers keep half a patch apart") {
  std::vector<TrainingImage> data;
  for (int i = 0; i < 3; ++i) data.push_back(scribbled_image("i" + std::to_string(i), 128, 128, std::uint64_t(i)));
  SamplingConfig cfg;
  cfg.patch_size = 32;
  cfg.patches_per_image = 30;
  cfg.validation_fraction = 0.2;
  const auto split = sample_patches(data, cfg, 2);
  REQUIRE_FALSE(split.val.empty());
  for (const auto& t : split.train) {
    for (const auto& v : split.val) {
      if (t.source != v.source) continue;
      REQUIRE(std::hypot(t.center_x() - v.center_x(), t.center_y() - v.center_y()) >= 16.0);
    }
  }
}

TEST_CASE("with q=1 on a fully scribbled image every patch holds a scribble") {
  const std::vector<TrainingImage> data{scribbled_image("a", 64, 64, 1, true)};
  SamplingConfig cfg;
  cfg.patch_size = 16;
  cfg.scribble_bias = 1.0;
  const auto split = sample_patches(data, cfg, 1);
  for (const auto& p : split.train) CHECK_FALSE(p.scribbles.empty());
}

TEST_CASE("sampling errors") {
  SamplingConfig cfg;
  cfg.patch_size = 32;
  auto plain = scribbled_image("a", 64, 64, 1);
  plain.scribbles.strokes.clear();
  CHECK_THROWS_AS(sample_patches(std::vector<TrainingImage>{plain}, cfg, 0), DataError);
  const std::vector<TrainingImage> small{scribbled_image("s", 16, 16, 1)};
  CHECK_THROWS_AS(sample_patches(small, cfg, 0), DataError);
  const std::vector<TrainingImage> mixed{scribbled_image("s", 16, 16, 1), scribbled_image("b", 64, 64, 2)};
  const auto split = sample_patches(mixed, cfg, 0);
  for (const auto& p : split.train) CHECK(p.source == 1);
}

TEST_CASE("blind-spot identity outside the mask and donor provenance") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto patch = testing::random_tensor<float>(2, 24, 20, seed);
    Rng rng = make_rng(seed, 7);
    const int r = 1 + int(seed % 5);
    const auto b = blindspot(patch, 0.3, r, rng);
    const std::size_t hw = patch.plane();
    for (int y = 0; y < patch.h; ++y) {
      for (int x = 0; x < patch.w; ++x) {
        const std::size_t i = std::size_t(y) * patch.w + x;
        if (!b.mask[i]) {
          REQUIRE(b.imputed(0, y, x) == patch(0, y, x));
          REQUIRE(b.imputed(1, y, x) == patch(1, y, x));
          continue;
        }
        bool found = false;
        for (int dy = -r; dy <= r && !found; ++dy) {
          for (int dx = -r; dx <= r && !found; ++dx) {
            const int sx = x + dx, sy = y + dy;
            if ((dx == 0 && dy == 0) || sx < 0 || sy < 0 || sx >= patch.w || sy >= patch.h) continue;
            found = b.imputed.data[i] == patch(0, sy, sx) && b.imputed.data[hw + i] == patch(1, sy, sx);
          }
        }
        REQUIRE(found);
      }
    }
  }
}

TEST_CASE("blind-spot limits") {
  const auto patch = testing::random_tensor<float>(1, 16, 16, 3);
  Rng rng = make_rng(1);
  const auto none = blindspot(patch, 0.0, 5, rng);
  CHECK(none.imputed == patch);
  CHECK(count_imputed(none.mask) == 0);
  const auto all = blindspot(patch, 1.0, 5, rng);
  CHECK(count_imputed(all.mask) == 256);
  CHECK_THROWS_AS(blindspot(patch, 1.5, 5, rng), ConfigError);
  CHECK_THROWS_AS(blindspot(patch, 0.5, 0, rng), ConfigError);
}

TEST_CASE("imputed count stays within three binomial sigmas of p·H·W") {
  const auto patch = testing::random_tensor<float>(1, 128, 128, 4);
  const double n = 128.0 * 128.0, p = 0.2;
  const double mean = n * p, sd = std::sqrt(n * p * (1 - p));
  CHECK(mean == doctest::Approx(3276.8));
  Rng rng = make_rng(2);
  double total = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double k = double(count_imputed(blindspot(patch, p, 5, rng).mask));
    REQUIRE(std::abs(k - mean) <= 3.0 * sd);
    total += k;
  }
  CHECK(std::abs(total / 100.0 - mean) <= 3.0 * sd / 10.0);
}
