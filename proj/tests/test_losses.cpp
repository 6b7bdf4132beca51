#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"

#include "impartial/error.hpp"
#include "impartial/losses.hpp"

using namespace impartial;

namespace {

HeadOutputs<double> one_pixel_heads(std::vector<double> rho, std::vector<double> tau) {
  HeadOutputs<double> h{Tensor<double>(int(rho.size()), 1, 1), Tensor<double>(int(tau.size()), 1, 1)};
  h.rho.data = std::move(rho);
  h.tau.data = std::move(tau);
  return h;
}

MixtureConfig two_components(double sigma) {
  MixtureConfig c;
  c.components = 2;
  c.class0_components = 1;
  c.sigma = {sigma};
  return c;
}

// Softmax-normalized random memberships and random means.
HeadOutputs<double> random_heads(int m, int c, int size, std::uint64_t seed) {
  HeadOutputs<double> h{testing::random_tensor<double>(m, size, size, seed, -3.0, 3.0),
                        testing::random_tensor<double>(m * c, size, size, seed + 1)};
  const std::size_t hw = h.rho.plane();
  for (std::size_t i = 0; i < hw; ++i) {
    double z = 0.0;
    for (int k = 0; k < m; ++k) z += std::exp(h.rho.data[k * hw + i]);
    for (int k = 0; k < m; ++k) h.rho.data[k * hw + i] = std::exp(h.rho.data[k * hw + i]) / z;
  }
  return h;
}

const std::vector<std::uint8_t> kOneImputed{1};

}  // namespace

TEST_CASE("mixture loss fixtures") {
  const Tensor<double> x0(1, 1, 1, 0.0);
  SUBCASE("perfect reconstruction") {
    CHECK(mixture_loss(one_pixel_heads({1, 0}, {0, 1}), x0, kOneImputed, two_components(1.0)) ==
          0.0);
  }
  SUBCASE("half membership on the wrong mean") {
    CHECK(mixture_loss(one_pixel_heads({0.5, 0.5}, {0, 1}), x0, kOneImputed,
                       two_components(1.0)) == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("sigma 0.5 against a scalar oracle") {
    const Tensor<double> x(1, 1, 1, 0.5);
    const auto h = one_pixel_heads({0.2, 0.8}, {0, 1});
    double oracle = 0.0;
    for (int m = 0; m < 2; ++m) oracle += h.rho.data[m] * std::pow(0.5 - h.tau.data[m], 2) / (2 * 0.25);
    CHECK(oracle == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mixture_loss(h, x, kOneImputed, two_components(0.5)) == doctest::Approx(oracle).epsilon(1e-15));
  }
  SUBCASE("empty mask is zero") {
    const std::vector<std::uint8_t> none{0};
    CHECK(mixture_loss(one_pixel_heads({0.5, 0.5}, {0, 1}), x0, none, two_components(1.0)) == 0.0);
  }
}

TEST_CASE("scribble loss fixtures") {
  MixtureConfig cfg;  // M=4, m0={1,2}, m1={3,4}
  SUBCASE("confident and correct") {
    const auto h = one_pixel_heads({0, 0, 1, 0}, {0, 0, 0, 0});
    const std::vector<ScribblePixel> s{{0, 1}};
    const auto l = scribble_loss(h, s, cfg);
    CHECK(l.foreground == 0.0);
    CHECK(l.background == 0.0);
  }
  SUBCASE("uniform memberships give ln 2") {
    const auto h = one_pixel_heads({0.25, 0.25, 0.25, 0.25}, {0, 0, 0, 0});
    const std::vector<ScribblePixel> s{{0, 0}};
    CHECK(scribble_loss(h, s, cfg).background == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(scribble_loss(h, s, cfg).background == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("class mass 0.8") {
    const auto h = one_pixel_heads({0.1, 0.1, 0.5, 0.3}, {0, 0, 0, 0});
    const std::vector<ScribblePixel> s{{0, 1}};
    const double oracle = -std::log(0.5 + 0.3);
    CHECK(oracle == doctest::Approx(0.223144).epsilon(1e-6));
    CHECK(scribble_loss(h, s, cfg).foreground == doctest::Approx(oracle).epsilon(1e-15));
  }
  SUBCASE("zero class mass is clamped and counted") {
    const auto h = one_pixel_heads({0.5, 0.5, 0, 0}, {0, 0, 0, 0});
    const std::vector<ScribblePixel> s{{0, 1}};
    const auto l = scribble_loss(h, s, cfg);
    CHECK(l.clamped == 1);
    CHECK(l.foreground == doctest::Approx(-std::log(1e-12)));
  }
  SUBCASE("no scribbles") {
    const auto h = one_pixel_heads({0.25, 0.25, 0.25, 0.25}, {0, 0, 0, 0});
    const auto l = scribble_loss(h, {}, cfg);
    CHECK(l.foreground == 0.0);
    CHECK(l.background == 0.0);
  }
}

TEST_CASE("joint loss arithmetic") {
  CHECK(joint_loss(1.0, {0.2, 0.4, 0}, 0.5) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(joint_loss(1.7, {0.2, 0.4, 0}, 1.0) == 1.7);
  CHECK(joint_loss(1.7, {0.2, 0.4, 0}, 0.0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(joint_loss(1.0, {}, 1.5), ConfigError);
}

TEST_CASE("fast path agrees with the brute-force oracle on random batches") {
  auto rng = make_rng(1);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    MixtureConfig cfg;
    cfg.components = 2 + int(rng() % 4);
    cfg.class0_components = 1 + int(rng() % std::uint64_t(cfg.components - 1));
    const int channels = 1 + int(rng() % 3);
    cfg.sigma = {0.1 + double(rng() % 100) / 200.0};
    cfg.lambda = double(rng() % 11) / 10.0;
    const auto heads = random_heads(cfg.components, channels, 8, 100 + std::uint64_t(t));
    const auto x = testing::random_tensor<double>(channels, 8, 8, 300 + std::uint64_t(t));
    std::vector<std::uint8_t> mask(64);
    std::vector<ScribblePixel> scribbles;
    for (std::uint32_t i = 0; i < 64; ++i) {
      mask[i] = rng() % 5 == 0;
      if (rng() % 4 == 0) scribbles.push_back({i, std::int8_t(rng() % 2)});
    }
    const LossSample<double> sample{&heads, &x, mask, scribbles};
    const auto fast = batch_losses<double>(std::span(&sample, 1), cfg);
    const auto slow = brute_force_losses(std::span(&sample, 1), cfg);
    for (auto [a, b] : {std::pair{fast.mix, slow.mix}, {fast.seg[0], slow.seg[0]},
                        {fast.seg[1], slow.seg[1]}, {fast.joint, slow.joint}}) {
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
    }
    REQUIRE(fast.imputed == slow.imputed);
    REQUIRE(fast.scribbled[0] == slow.scribbled[0]);
    REQUIRE(fast.scribbled[1] == slow.scribbled[1]);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("empty scribbles and full masks on both paths") {
  MixtureConfig cfg;
  const auto heads = random_heads(4, 2, 8, 5);
  const auto x = testing::random_tensor<double>(2, 8, 8, 6);
  const std::vector<std::uint8_t> full(64, 1);
  const LossSample<double> sample{&heads, &x, full, {}};
  const auto fast = batch_losses<double>(std::span(&sample, 1), cfg);
  const auto slow = brute_force_losses(std::span(&sample, 1), cfg);
  CHECK(fast.seg[0] == 0.0);
  CHECK(fast.seg[1] == 0.0);
  CHECK(slow.seg[0] == 0.0);
  CHECK(fast.imputed == 64);
  CHECK(slow.imputed == 64);
  CHECK(fast.mix == doctest::Approx(slow.mix).epsilon(1e-12));
}

TEST_CASE("batch normalization uses counts summed over patches") {
  MixtureConfig cfg;
  const auto h1 = random_heads(4, 1, 4, 1);
  const auto h2 = random_heads(4, 1, 4, 2);
  const auto x = testing::random_tensor<double>(1, 4, 4, 3);
  const std::vector<std::uint8_t> m1(16, 1), m2(16, 0);
  const std::vector<ScribblePixel> s1{{0, 1}}, s2{{1, 1}, {2, 1}, {3, 0}};
  const LossSample<double> batch[2] = {{&h1, &x, m1, s1}, {&h2, &x, m2, s2}};
  const auto r = batch_losses<double>(batch, cfg);
  CHECK(r.scribbled[1] == 3);
  CHECK(r.scribbled[0] == 1);
  CHECK(r.imputed == 16);
  auto mass1 = [&](const HeadOutputs<double>& h, int i) { return h.rho.data[32 + i] + h.rho.data[48 + i]; };
  const double oracle = -(std::log(mass1(h1, 0)) + std::log(mass1(h2, 1)) + std::log(mass1(h2, 2))) / 3.0;
  CHECK(r.seg[1] == doctest::Approx(oracle).epsilon(1e-14));
}

TEST_CASE("reconstruction loss ignores targets outside the mask") {
  MixtureConfig cfg;
  const auto heads = random_heads(4, 2, 8, 9);
  auto x = testing::random_tensor<double>(2, 8, 8, 10);
  auto rng = make_rng(11);
  std::vector<std::uint8_t> mask(64);
  for (auto& m : mask) m = rng() % 3 == 0;
  const double base = mixture_loss(heads, x, mask, cfg);
  for (int trial = 0; trial < 50; ++trial) {
    auto y = x;
    for (std::size_t i = 0; i < 64; ++i) {
      if (mask[i]) continue;
      y.data[i] += double(rng() % 1000) - 500.0;
      y.data[64 + i] = -double(rng() % 7);
    }
    REQUIRE(mixture_loss(heads, y, mask, cfg) == base);
  }
}

TEST_CASE("scribble loss equals binary cross-entropy on the class mass") {
  MixtureConfig cfg;
  const auto heads = random_heads(4, 1, 4, 12);
  for (std::uint32_t i = 0; i < 16; ++i) {
    for (std::int8_t k : {std::int8_t(0), std::int8_t(1)}) {
      const std::vector<ScribblePixel> s{{i, k}};
      const double p_fg = heads.rho.data[32 + i] + heads.rho.data[48 + i];
      const double y = k;
      const double bce = -(y * std::log(p_fg) + (1 - y) * std::log(1 - p_fg));
      const auto l = scribble_loss(heads, s, cfg);
      CHECK((k == 1 ? l.foreground : l.background) == doctest::Approx(bce).epsilon(1e-12));
    }
  }
}

TEST_CASE("duplicating every scribbled pixel leaves the class losses unchanged") {
  MixtureConfig cfg;
  const auto heads = random_heads(4, 1, 8, 13);
  std::vector<ScribblePixel> s;
  for (std::uint32_t i = 0; i < 64; i += 3) s.push_back({i, std::int8_t(i % 2)});
  auto doubled = s;
  doubled.insert(doubled.end(), s.begin(), s.end());
  const auto a = scribble_loss(heads, s, cfg);
  const auto b = scribble_loss(heads, doubled, cfg);
  CHECK(a.foreground == doctest::Approx(b.foreground).epsilon(1e-14));
  CHECK(a.background == doctest::Approx(b.background).epsilon(1e-14));
}

TEST_CASE("more correct class mass strictly lowers the scribble loss") {
  MixtureConfig cfg;
  const std::vector<ScribblePixel> s{{0, 1}};
  double previous = INFINITY;
  for (double mass = 0.05; mass < 1.0; mass += 0.05) {
    const auto h = one_pixel_heads({(1 - mass) / 2, (1 - mass) / 2, mass / 2, mass / 2}, {0, 0, 0, 0});
    const double l = scribble_loss(h, s, cfg).foreground;
    CHECK(l < previous);
    CHECK(l >= 0.0);
    previous = l;
  }
}

TEST_CASE("mixture loss is zero exactly when every weighted mean matches") {
  MixtureConfig cfg;
  cfg.components = 2;
  cfg.class0_components = 1;
  const Tensor<double> x(1, 1, 1, 0.3);
  CHECK(mixture_loss(one_pixel_heads({1, 0}, {0.3, 0.9}), x, kOneImputed, cfg) == 0.0);
  CHECK(mixture_loss(one_pixel_heads({0.999, 0.001}, {0.3, 0.9}), x, kOneImputed, cfg) > 0.0);
}

TEST_CASE("head gradients of the weighted sums match finite differences") {
  MixtureConfig cfg;
  cfg.sigma = {0.3, 0.2};
  auto heads = random_heads(4, 2, 4, 14);
  const auto x = testing::random_tensor<double>(2, 4, 4, 15);
  std::vector<std::uint8_t> mask(16);
  for (std::size_t i = 0; i < 16; ++i) mask[i] = i % 3 == 0;
  const std::vector<ScribblePixel> s{{1, 1}, {2, 0}, {7, 1}};
  const auto w = loss_weights(count_terms(mask, s), cfg.lambda);
  auto value = [&] { return finalize(patch_loss(heads, x, mask, s, cfg), cfg.lambda).joint; };
  HeadOutputs<double> grad;
  patch_loss(heads, x, mask, s, cfg, &w, &grad);
  for (auto [field, g] : {std::pair{&heads.rho, &grad.rho}, {&heads.tau, &grad.tau}}) {
    for (std::size_t i = 0; i < field->data.size(); ++i) {
      const double keep = field->data[i];
      field->data[i] = keep + 1e-6;
      const double up = value();
      field->data[i] = keep - 1e-6;
      const double down = value();
      field->data[i] = keep;
      REQUIRE(g->data[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("mixture config validation") {
  MixtureConfig c;
  c.class0_components = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.sigma = {0.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.sigma = {0.1, 0.2, 0.3};
  CHECK_THROWS_AS(c.validate(2), ConfigError);
  c = {};
  c.lambda = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
