#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "impartial/losses.hpp"
#include "impartial/model.hpp"
#include "impartial/sampling.hpp"

#include "support.hpp"

namespace testing {

inline impartial::ModelConfig tiny_config(int channels, int components) {
  impartial::ModelConfig c;
  c.depth = 1;
  c.base_features = 4;
  c.in_channels = channels;
  c.components = components;
  c.class0_components = components / 2;
  return c;
}

/// Blind-spot patch, target and scribbles for one joint-loss evaluation.
template <class T>
struct LossProblem {
  impartial::Tensor<T> target;
  impartial::BlindSpotResult<T> blind;
  std::vector<impartial::ScribblePixel> scribbles;
  impartial::MixtureConfig mixture;
};

template <class T>
LossProblem<T> make_problem(int channels, int size, int components, std::uint64_t seed) {
  LossProblem<T> p;
  p.target = random_tensor<T>(channels, size, size, seed);
  auto rng = impartial::make_rng(seed, 1);
  p.blind = impartial::blindspot(p.target, 0.2, 5, rng);
  // Guarantee a non-empty mask so the reconstruction term participates.
  p.blind.mask[0] = 1;
  std::bernoulli_distribution pick(0.3);
  for (std::uint32_t i = 0; i < std::uint32_t(size * size); ++i) {
    if (pick(rng)) p.scribbles.push_back({i, std::int8_t(rng() % 2)});
  }
  p.mixture.components = components;
  p.mixture.class0_components = components / 2;
  return p;
}

/// Joint objective of one patch and its gradient with respect to the heads.
template <class T>
impartial::LossClosure<T> joint_closure(const LossProblem<T>& p) {
  return [&p](const impartial::HeadOutputs<T>& heads) {
    const auto totals = impartial::count_terms(p.blind.mask, p.scribbles);
    const auto w = impartial::loss_weights(totals, p.mixture.lambda);
    impartial::LossValue<T> v;
    v.grad = impartial::HeadOutputs<T>::zeros_like(heads);
    const auto s =
        impartial::patch_loss(heads, p.target, p.blind.mask, p.scribbles, p.mixture, &w, &v.grad);
    v.value = impartial::finalize(s, p.mixture.lambda).joint;
    return v;
  };
}

struct GradCheck {
  std::size_t sampled = 0;
  std::size_t kinked = 0;  // draws whose ±step interval crosses a ReLU or pooling switch
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-10) return std::abs(analytic - numeric);
  return std::abs(analytic - numeric) / scale;
}

/// ReLU on/off pattern and pooling winners of one forward pass.
inline std::vector<int> activation_pattern(const impartial::ForwardCache<double>& cache) {
  std::vector<int> out;
  for (std::size_t i = 0; i + 2 < cache.convs.size(); ++i) {
    for (double v : cache.convs[i].out.data) out.push_back(v > 0.0);
  }
  for (const auto& level : cache.pool_argmax) out.insert(out.end(), level.begin(), level.end());
  return out;
}

/// Analytic gradients of `model` against central differences of the joint
/// loss evaluated by a 64-bit copy of the same network. A central difference
/// only estimates the derivative when the network is smooth on [p−h, p+h];
/// draws where the activation pattern differs at the two ends are counted in
/// `kinked` and replaced, until `samples` valid comparisons are made.
template <class T>
GradCheck gradient_check(const impartial::UNet<T>& model, int patch, std::size_t samples,
                         double step, std::uint64_t seed) {
  const auto& cfg = model.config();
  const auto problem = make_problem<T>(cfg.in_channels, patch, cfg.components, seed);
  const auto analytic =
      impartial::gradients(model, problem.blind.imputed, joint_closure(problem)).values;

  auto reference = model.template cast<double>();
  LossProblem<double> problem64;
  problem64.target = problem.target.template cast<double>();
  problem64.blind = {problem.blind.imputed.template cast<double>(), problem.blind.mask};
  problem64.scribbles = problem.scribbles;
  problem64.mixture = problem.mixture;
  impartial::ForwardCache<double> cache;
  auto value = [&](std::vector<int>& pattern) {
    const auto heads = reference.forward(problem64.blind.imputed, nullptr, &cache);
    pattern = activation_pattern(cache);
    return joint_closure(problem64)(heads).value;
  };

  GradCheck out;
  auto rng = impartial::make_rng(seed, 2);
  std::uniform_int_distribution<std::size_t> pick(0, model.parameter_count() - 1);
  std::vector<int> up_pattern, down_pattern;
  while (out.sampled < samples && out.kinked < 100 * samples) {
    const std::size_t i = pick(rng);
    auto params = reference.parameters();
    const double original = params[i];
    params[i] = original + step;
    const double up = value(up_pattern);
    params[i] = original - step;
    const double down = value(down_pattern);
    params[i] = original;
    if (up_pattern != down_pattern) {
      ++out.kinked;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    if (err > out.max_relative_error) {
      out.max_relative_error = err;
      out.worst_index = i;
    }
    ++out.sampled;
  }
  return out;
}

}  // namespace testing
