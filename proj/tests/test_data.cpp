#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "support.hpp"

#include "impartial/data.hpp"
#include "impartial/error.hpp"

using namespace impartial;
using testing::TempDir;

namespace {

// Percentile by full sort and explicit interpolation between neighbours.
double sorted_percentile(std::vector<float> v, double p) {
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * double(v.size() - 1);
  const auto lo = std::size_t(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = rank - double(lo);
  return double(v[lo]) * (1.0 - frac) + double(v[hi]) * frac;
}

}  // namespace

TEST_CASE("image save and load round-trip bit-exactly") {
  TempDir dir("data");
  const auto img = testing::random_image(4, 4, 2, 7, -3.0f, 5.0f);
  save_image(img, dir / "a.raw");
  const auto back = load_image(dir / "a.raw");
  CHECK(back == img);
  CHECK_FALSE(back.normalized());
  const auto header = read_header(dir / "a.raw");
  CHECK(header.width == 4);
  CHECK(header.channels == 2);
  CHECK(header.dtype == "float32");
}

TEST_CASE("random rasters of many shapes round-trip") {
  TempDir dir("data");
  for (int s = 0; s < 20; ++s) {
    const int w = 1 + s % 7, h = 1 + (s * 3) % 5, c = 1 + s % 3;
    const auto img = testing::random_image(w, h, c, 100 + std::uint64_t(s), -1e6f, 1e6f);
    save_image(img, dir / "r.raw");
    REQUIRE(load_image(dir / "r.raw") == img);
  }
}

TEST_CASE("short payload is a dimension mismatch") {
  TempDir dir("data");
  save_image(testing::random_image(4, 4, 2, 1), dir / "a.raw");
  std::filesystem::resize_file(dir / "a.raw", 4 * 4 * 2 * 4 - 4);
  CHECK_THROWS_AS(load_image(dir / "a.raw"), DataError);
}

TEST_CASE("missing file is a data error") {
  TempDir dir("data");
  CHECK_THROWS_AS(load_image(dir / "none.raw"), DataError);
}

TEST_CASE("non-finite values are rejected with their index") {
  std::vector<float> v(8, 0.0f);
  v[5] = std::nanf("");
  try {
    MultiChannelImage(2, 2, 2, v);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }
  TempDir dir("data");
  write_header(dir / "bad.raw", {2, 2, 1, "float32"});
  const float payload[4] = {0.0f, INFINITY, 0.0f, 0.0f};
  std::ofstream(dir / "bad.raw", std::ios::binary)
      .write(reinterpret_cast<const char*>(payload), sizeof payload);
  CHECK_THROWS_AS(load_image(dir / "bad.raw"), DataError);
}

TEST_CASE("8-bit grayscale import widens to integer floats") {
  TempDir dir("data");
  std::vector<float> v;
  for (int i = 0; i < 256; ++i) v.push_back(float(i));
  write_pgm(dir / "g.pgm", v, 16, 16, 0.0f, 255.0f);
  const auto img = load_pgm(dir / "g.pgm");
  REQUIRE(img.channels() == 1);
  for (int i = 0; i < 256; ++i) CHECK(img.values()[std::size_t(i)] == float(i));

  write_header(dir / "u8.raw", {3, 1, 1, "uint8"});
  const unsigned char bytes[3] = {0, 128, 255};
  std::ofstream(dir / "u8.raw", std::ios::binary).write(reinterpret_cast<const char*>(bytes), 3);
  const auto u8 = load_image(dir / "u8.raw");
  CHECK(u8.values()[0] == 0.0f);
  CHECK(u8.values()[1] == 128.0f);
  CHECK(u8.values()[2] == 255.0f);
}

TEST_CASE("percentile matches a sort-based oracle") {
  auto rng = make_rng(3);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  for (int n : {1, 2, 3, 10, 101, 1000}) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    for (double p : {0.0, 1.0, 12.5, 50.0, 99.0, 100.0}) {
      CHECK(percentile(v, p) == doctest::Approx(sorted_percentile(v, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalize maps 0..255 with the 1st and 99th percentiles") {
  std::vector<float> v;
  for (int i = 0; i < 256; ++i) v.push_back(float(i));
  const MultiChannelImage img(16, 16, 1, v);
  const auto n = normalize(img, {1.0, 99.0});
  CHECK(n.normalized());
  const double p1 = sorted_percentile(v, 1.0);
  const double p99 = sorted_percentile(v, 99.0);
  CHECK(p1 == doctest::Approx(2.55));
  CHECK(p99 == doctest::Approx(252.45));
  CHECK(n.values()[128] == doctest::Approx((128.0 - p1) / (p99 - p1)).epsilon(1e-6));
  CHECK(n.values()[0] == 0.0f);
  CHECK(n.values()[255] == 1.0f);
}

TEST_CASE("constant channel normalizes to zeros") {
  std::vector<float> v(32, 3.0f);
  for (int i = 16; i < 32; ++i) v[std::size_t(i)] = float(i);
  const auto n = normalize(MultiChannelImage(4, 4, 2, v));
  for (float x : n.channel(0)) CHECK(x == 0.0f);
  CHECK(n.channel(1)[15] == 1.0f);
}

TEST_CASE("normalization is the identity on [0,1]-spanning data with (0,100)") {
  auto img = testing::random_image(8, 8, 2, 11);
  std::vector<float> v(img.values().begin(), img.values().end());
  v[0] = 0.0f;
  v[1] = 1.0f;
  v[64] = 0.0f;
  v[65] = 1.0f;
  const MultiChannelImage spanning(8, 8, 2, v);
  const auto n = normalize(spanning, {0.0, 100.0});
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(n.values()[i] == doctest::Approx(v[i]).epsilon(1e-7));
}

TEST_CASE("normalized output stays in [0,1] with outliers") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto img = testing::random_image(16, 16, 3, s, -10.0f, 10.0f);
    std::vector<float> v(img.values().begin(), img.values().end());
    v[3] = 1e9f;
    v[300] = -1e9f;
    const auto n = normalize(MultiChannelImage(16, 16, 3, v));
    for (float x : n.values()) {
      REQUIRE(x >= 0.0f);
      REQUIRE(x <= 1.0f);
    }
  }
}

TEST_CASE("normalizing twice is refused") {
  const auto n = normalize(testing::random_image(4, 4, 1, 2));
  CHECK_THROWS_AS(normalize(n), Error);
}

TEST_CASE("invalid percentiles are a config error") {
  CHECK_THROWS_AS((NormalizationConfig{50.0, 50.0}.validate()), ConfigError);
  CHECK_THROWS_AS((NormalizationConfig{-1.0, 50.0}.validate()), ConfigError);
  CHECK_THROWS_AS((NormalizationConfig{0.0, 101.0}.validate()), ConfigError);
}

TEST_CASE("scribble round-trips") {
  TempDir dir("data");
  SUBCASE("empty set") {
    const ScribbleSet empty{6, 5, {}};
    save_scribbles(empty, dir / "e.txt");
    const auto back = load_scribbles(dir / "e.txt");
    CHECK(back == empty);
    CHECK(back.empty());
  }
  SUBCASE("one foreground stroke of three pixels") {
    const ScribbleSet s{20, 20, {{1, {{10, 10}, {10, 11}, {11, 11}}}}};
    save_scribbles(s, dir / "s.txt");
    CHECK(load_scribbles(dir / "s.txt") == s);
  }
  SUBCASE("random sets") {
    auto rng = make_rng(5);
    for (int t = 0; t < 20; ++t) {
      ScribbleSet s{32, 24, {}};
      std::vector<std::int8_t> used(32 * 24, -1);
      for (int k = 0; k < 5; ++k) {
        Stroke st{int(rng() % 2), {}};
        for (int p = 0; p < 6; ++p) {
          const Pixel px{int(rng() % 32), int(rng() % 24)};
          auto& u = used[std::size_t(px.y) * 32 + px.x];
          if (u >= 0 && u != st.cls) continue;
          u = std::int8_t(st.cls);
          st.pixels.push_back(px);
        }
        if (!st.pixels.empty()) s.strokes.push_back(st);
      }
      save_scribbles(s, dir / "r.txt");
      REQUIRE(load_scribbles(dir / "r.txt") == s);
    }
  }
}

TEST_CASE("scribble validation errors") {
  SUBCASE("pixel in both classes names the coordinate") {
    const std::string text = "# impartial scribbles v1\nsize 10 10\nstroke 0 5,5\nstroke 1 5,5\n";
    try {
      parse_scribbles(text);
      FAIL("expected a conflict");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("(5,5)") != std::string::npos);
    }
  }
  SUBCASE("out-of-bounds coordinate is named") {
    try {
      parse_scribbles("size 10 10\nstroke 1 3,10\n");
      FAIL("expected a bounds error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("(3,10)") != std::string::npos);
    }
  }
  SUBCASE("empty stroke") {
    CHECK_THROWS_AS((ScribbleSet{4, 4, {{1, {}}}}.validate()), DataError);
  }
  SUBCASE("unknown class") {
    CHECK_THROWS_AS((ScribbleSet{4, 4, {{2, {{0, 0}}}}}.validate()), DataError);
  }
}

TEST_CASE("rasterize and merge") {
  const ScribbleSet a{4, 3, {{1, {{0, 0}, {1, 0}}}}};
  const ScribbleSet b{4, 3, {{0, {{3, 2}}}}};
  const auto m = a.merged(b);
  const auto r = m.rasterize();
  CHECK(r[0] == 1);
  CHECK(r[1] == 1);
  CHECK(r[11] == 0);
  CHECK(r[5] == -1);
  CHECK(m.pixel_count() == 3);
  CHECK_THROWS_AS(a.merged(ScribbleSet{4, 3, {{0, {{1, 0}}}}}), DataError);
}

TEST_CASE("label maps round-trip and canonicalize") {
  TempDir dir("data");
  LabelMap l(5, 2, {0, 7, 7, 0, 3, 3, 0, 0, 9, 9});
  save_labels(l, dir / "l.lbl");
  CHECK(load_labels(dir / "l.lbl") == l);
  const auto c = l.canonical();
  CHECK(c.labels == std::vector<std::uint32_t>{0, 1, 1, 0, 2, 2, 0, 0, 3, 3});
  CHECK(c.instance_count() == 3);
  CHECK(c.max_label() == 3);
}
