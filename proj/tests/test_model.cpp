#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "support.hpp"

#include "impartial/error.hpp"
#include "impartial/model.hpp"

using namespace impartial;
using testing::TempDir;

namespace {

// Hand-written layer table for depth 1, base 4, C=1, M=2 (k=3).
std::size_t hand_counted_depth1() {
  auto conv = [](int in, int out, int k) { return std::size_t(out * in * k * k + out); };
  return conv(1, 4, 3)     // enc0.conv0
         + conv(4, 4, 3)   // enc0.conv1
         + conv(4, 8, 3)   // bottleneck.conv0
         + conv(8, 8, 3)   // bottleneck.conv1
         + conv(8, 4, 3)   // dec0.up
         + conv(8, 4, 3)   // dec0.conv0 on the concatenated skip
         + conv(4, 4, 3)   // dec0.conv1
         + conv(4, 2, 1)   // head_rho
         + conv(4, 2, 1);  // head_tau
}

void zero_block(Model& m, const std::string& prefix) {
  for (const auto& b : m.blocks()) {
    if (b.name.rfind(prefix, 0) != 0) continue;
    for (std::size_t i = 0; i < b.size; ++i) m.parameters()[b.offset + i] = 0.0f;
  }
}

}  // namespace

TEST_CASE("parameter count matches the hand-counted layer table") {
  const auto cfg = testing::tiny_config(1, 2);
  CHECK(hand_counted_depth1() == 1820);
  CHECK(unet_parameter_count(cfg) == 1820);
  CHECK(Model::build(cfg, 0).parameter_count() == 1820);
  CHECK(Model::build(ModelConfig::desk(2), 0).parameter_count() ==
        unet_parameter_count(ModelConfig::desk(2)));
}

TEST_CASE("config validation") {
  auto c = ModelConfig::desk(1);
  c.depth = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::desk(1);
  c.components = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::desk(1);
  c.class0_components = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::desk(1);
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto full = ModelConfig::full_scale(3);
  CHECK(full.depth == 4);
  CHECK(full.base_features == 64);
  CHECK(full.kernel_size == 3);
  CHECK(full.components == 4);
  CHECK(full.class0_components == 2);
}

TEST_CASE("same seed gives identical parameters") {
  const auto cfg = ModelConfig::desk(2);
  const auto a = Model::build(cfg, 42);
  const auto b = Model::build(cfg, 42);
  const auto c = Model::build(cfg, 43);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST_CASE("forward shapes and softmax normalization") {
  for (int depth : {1, 2, 3}) {
    for (int channels : {1, 3}) {
      ModelConfig cfg = ModelConfig::desk(channels);
      cfg.depth = depth;
      cfg.base_features = 4;
      cfg.components = 5;
      cfg.class0_components = 2;
      const auto model = Model::build(cfg, std::uint64_t(depth * 10 + channels));
      const auto x = testing::random_tensor<float>(channels, 16, 24, 9);
      const auto out = model.forward(x);
      REQUIRE(out.rho.c == 5);
      REQUIRE(out.rho.h == 16);
      REQUIRE(out.rho.w == 24);
      REQUIRE(out.tau.c == 5 * channels);
      for (int y = 0; y < 16; ++y) {
        for (int xx = 0; xx < 24; ++xx) {
          double sum = 0.0;
          for (int m = 0; m < 5; ++m) {
            REQUIRE(out.rho(m, y, xx) >= 0.0f);
            sum += out.rho(m, y, xx);
          }
          REQUIRE(std::abs(sum - 1.0) < 1e-5);
        }
      }
      for (float t : out.tau.data) {
        REQUIRE(t >= 0.0f);
        REQUIRE(t <= 1.0f);
      }
    }
  }
}

TEST_CASE("indivisible spatial dimensions are refused") {
  const auto model = Model::build(ModelConfig::desk(1), 0);
  CHECK_THROWS_AS(model.forward(Tensor<float>(1, 10, 16)), ConfigError);
  CHECK_THROWS_AS(model.forward(Tensor<float>(2, 16, 16)), ConfigError);
}

TEST_CASE("forward without dropout is deterministic; dropout follows its stream") {
  const auto model = Model::build(ModelConfig::desk(2), 1);
  const auto x = testing::random_tensor<float>(2, 32, 32, 2);
  const auto a = model.forward(x);
  const auto b = model.forward(x);
  CHECK(a.rho == b.rho);
  CHECK(a.tau == b.tau);

  Rng r1 = make_rng(7), r2 = make_rng(7), r3 = make_rng(8);
  const auto d1 = model.forward(x, &r1);
  const auto d2 = model.forward(x, &r2);
  const auto d3 = model.forward(x, &r3);
  CHECK(d1.rho == d2.rho);
  CHECK_FALSE(d1.rho == d3.rho);
  CHECK_FALSE(d1.rho == a.rho);
}

TEST_CASE("zero input with zeroed heads gives uniform memberships") {
  auto model = Model::build(testing::tiny_config(2, 4), 3);
  zero_block(model, "head_rho");
  const auto out = model.forward(Tensor<float>(2, 8, 8));
  for (float r : out.rho.data) CHECK(r == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("gradients match central finite differences in 64-bit") {
  const auto model = UNet<double>::build(testing::tiny_config(2, 4), 5);
  const auto g = testing::gradient_check(model, 8, 60, 1e-5, 11);
  INFO("worst parameter ", g.worst_index, " in ", model.block_of(g.worst_index).name);
  CHECK(g.sampled == 60);
  CHECK(g.kinked < 10);
  CHECK(g.max_relative_error < 1e-6);
}

TEST_CASE("32-bit gradients match 64-bit central differences") {
  const auto model = Model::build(testing::tiny_config(2, 4), 6);
  const auto g = testing::gradient_check(model, 8, 60, 1e-3, 12);
  INFO("worst parameter ", g.worst_index, " in ", model.block_of(g.worst_index).name);
  CHECK(g.sampled == 60);
  CHECK(g.kinked < 10);
  CHECK(g.max_relative_error < 1e-3);
}

TEST_CASE("gradients through a depth-2 net with dropout") {
  auto cfg = testing::tiny_config(1, 4);
  cfg.depth = 2;
  const auto model = UNet<double>::build(cfg, 8);
  const auto problem = testing::make_problem<double>(1, 8, 4, 21);
  const auto closure = testing::joint_closure(problem);
  Rng rng = make_rng(4);
  const auto analytic = gradients(model, problem.blind.imputed, closure, &rng).values;
  auto copy = model;
  auto loss_at = [&](std::size_t i, double v) {
    const double keep = copy.parameters()[i];
    copy.parameters()[i] = v;
    Rng r = make_rng(4);
    const double out = closure(copy.forward(problem.blind.imputed, &r)).value;
    copy.parameters()[i] = keep;
    return out;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < model.parameter_count(); i += 37) {
    const double p = model.parameters()[i];
    const double numeric = (loss_at(i, p + 1e-5) - loss_at(i, p - 1e-5)) / 2e-5;
    worst = std::max(worst, testing::relative_error(analytic[i], numeric));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("a loss constant in the parameters has zero gradient") {
  const auto model = Model::build(testing::tiny_config(2, 4), 2);
  const auto x = testing::random_tensor<float>(2, 8, 8, 3);
  LossClosure<float> zero = [](const HeadOutputs<float>& h) {
    return LossValue<float>{0.0, HeadOutputs<float>::zeros_like(h)};
  };
  const auto g = gradients(model, x, zero);
  CHECK(g.loss == 0.0);
  for (double v : g.values) REQUIRE(v == 0.0);
}

TEST_CASE("non-finite gradients name the layer") {
  const auto model = Model::build(testing::tiny_config(1, 2), 2);
  std::vector<double> grad(model.parameter_count(), 0.0);
  const auto& head = model.blocks().back();
  grad[head.offset] = std::nan("");
  try {
    check_finite_gradients(model, std::span<const double>(grad));
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find(head.name) != std::string::npos);
  }
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bit-exactly") {
  TempDir dir("model");
  const auto model = Model::build(ModelConfig::desk(2), 9);
  save_checkpoint(model, dir / "m.ckpt", {7, 9});
  CheckpointInfo info;
  const auto back = load_checkpoint(dir / "m.ckpt", &info);
  CHECK(info.epoch == 7);
  CHECK(info.seed == 9);
  CHECK(back.config() == model.config());
  const auto x = testing::random_tensor<float>(2, 32, 32, 4);
  const auto a = model.forward(x);
  const auto b = back.forward(x);
  CHECK(a.rho == b.rho);
  CHECK(a.tau == b.tau);
}

TEST_CASE("checkpoint rebuilds from its manifest without a caller config") {
  TempDir dir("model");
  auto cfg = ModelConfig::desk(3);
  cfg.depth = 3;
  cfg.base_features = 8;
  cfg.components = 6;
  cfg.class0_components = 4;
  cfg.dropout_rate = 0.1;
  save_checkpoint(Model::build(cfg, 1), dir / "m.ckpt");
  CHECK(load_checkpoint(dir / "m.ckpt").config() == cfg);
}

TEST_CASE("truncated checkpoint blob is a shape mismatch") {
  TempDir dir("model");
  save_checkpoint(Model::build(ModelConfig::desk(1), 1), dir / "m.ckpt");
  const auto blob = dir / "m.ckpt.bin";
  std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 4);
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL("expected a shape mismatch");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
  }
}
