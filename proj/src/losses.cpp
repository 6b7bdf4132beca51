#include "impartial/losses.hpp"

#include <algorithm>
#include <cmath>

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace impartial {

void MixtureConfig::validate(int channels) const {
  if (components < 2) throw ConfigError("mixture needs at least two components");
  if (class0_components < 1 || class0_components >= components) {
    throw ConfigError("component partition must give each class at least one component");
  }
  if (sigma.empty() || (sigma.size() != 1 && sigma.size() != std::size_t(channels))) {
    throw ConfigError("sigma must have one entry or one per channel");
  }
  for (double s : sigma) {
    if (!(s > 0.0)) throw ConfigError("sigma must be positive");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
}

PatchLossSums& PatchLossSums::operator+=(const PatchLossSums& o) {
  mix += o.mix;
  seg[0] += o.seg[0];
  seg[1] += o.seg[1];
  imputed += o.imputed;
  scribbled[0] += o.scribbled[0];
  scribbled[1] += o.scribbled[1];
  clamped += o.clamped;
  return *this;
}

LossWeights loss_weights(const PatchLossSums& totals, double lambda) {
  LossWeights w;
  if (totals.imputed > 0) w.mix = lambda / double(totals.imputed);
  for (int k = 0; k < 2; ++k) {
    if (totals.scribbled[k] > 0) w.seg[k] = (1.0 - lambda) / double(totals.scribbled[k]);
  }
  return w;
}

LossReport finalize(const PatchLossSums& totals, double lambda) {
  LossReport r;
  r.imputed = totals.imputed;
  r.scribbled[0] = totals.scribbled[0];
  r.scribbled[1] = totals.scribbled[1];
  r.clamped = totals.clamped;
  r.mix = totals.imputed > 0 ? totals.mix / double(totals.imputed) : 0.0;
  for (int k = 0; k < 2; ++k) {
    r.seg[k] = totals.scribbled[k] > 0 ? totals.seg[k] / double(totals.scribbled[k]) : 0.0;
  }
  r.joint = joint_loss(r.mix, SegLosses{r.seg[0], r.seg[1], 0}, lambda);
  return r;
}

std::size_t count_imputed(std::span<const std::uint8_t> mask) {
  return std::size_t(std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
}

PatchLossSums count_terms(std::span<const std::uint8_t> mask,
                          std::span<const ScribblePixel> scribbles) {
  PatchLossSums s;
  s.imputed = count_imputed(mask);
  for (const auto& p : scribbles) ++s.scribbled[p.cls];
  return s;
}

template <class T>
PatchLossSums patch_loss(const HeadOutputs<T>& heads, const Tensor<T>& target,
                         std::span<const std::uint8_t> mask,
                         std::span<const ScribblePixel> scribbles, const MixtureConfig& config,
                         const LossWeights* weights, HeadOutputs<T>* grad) {
  const int M = heads.rho.c;
  const int C = target.c;
  const std::size_t hw = heads.rho.plane();
  if (M != config.components || heads.tau.c != M * C || target.plane() != hw ||
      mask.size() != hw) {
    throw ConfigError("loss inputs have inconsistent shapes");
  }
  if (grad) {
    if (!weights) throw ConfigError("gradient requested without loss weights");
    if (grad->rho.size() != heads.rho.size()) *grad = HeadOutputs<T>::zeros_like(heads);
  }
  std::vector<double> inv_two_var(static_cast<std::size_t>(C));
  std::vector<double> inv_var(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    const double s = config.sigma_for(c);
    inv_var[std::size_t(c)] = 1.0 / (s * s);
    inv_two_var[std::size_t(c)] = 0.5 / (s * s);
  }

  PatchLossSums out;
  const T* rho = heads.rho.data.data();
  const T* tau = heads.tau.data.data();
  const T* x = target.data.data();
  for (std::size_t i = 0; i < hw; ++i) {
    if (!mask[i]) continue;
    ++out.imputed;
    for (int m = 0; m < M; ++m) {
      const double r = double(rho[m * hw + i]);
      double d2 = 0.0;
      for (int c = 0; c < C; ++c) {
        const double diff = double(x[c * hw + i]) - double(tau[(m * C + c) * hw + i]);
        d2 += diff * diff * inv_two_var[std::size_t(c)];
        if (grad) {
          grad->tau.data[(m * C + c) * hw + i] +=
              T(weights->mix * r * -diff * inv_var[std::size_t(c)]);
        }
      }
      out.mix += r * d2;
      if (grad) grad->rho.data[m * hw + i] += T(weights->mix * d2);
    }
  }

  for (const auto& p : scribbles) {
    if (p.index >= hw || (p.cls != 0 && p.cls != 1)) {
      throw DataError("scribble pixel outside patch or with an invalid class");
    }
    const int k = p.cls;
    const int m0 = k == 0 ? 0 : config.class0_components;
    const int m1 = k == 0 ? config.class0_components : M;
    double mass = 0.0;
    for (int m = m0; m < m1; ++m) mass += double(rho[m * hw + p.index]);
    ++out.scribbled[k];
    if (mass < kLogEpsilon) {
      ++out.clamped;
      out.seg[k] += -std::log(kLogEpsilon);
      continue;
    }
    out.seg[k] += -std::log(mass);
    if (grad) {
      const T g = T(-weights->seg[k] / mass);
      for (int m = m0; m < m1; ++m) grad->rho.data[m * hw + p.index] += g;
    }
  }
  return out;
}

template <class T>
double mixture_loss(const HeadOutputs<T>& heads, const Tensor<T>& target,
                    std::span<const std::uint8_t> mask, const MixtureConfig& config) {
  const auto s = patch_loss(heads, target, mask, {}, config);
  if (s.imputed == 0) {
    log::warn("mixture loss over an empty imputation mask is defined as 0");
    return 0.0;
  }
  return s.mix / double(s.imputed);
}

template <class T>
SegLosses scribble_loss(const HeadOutputs<T>& heads, std::span<const ScribblePixel> scribbles,
                        const MixtureConfig& config) {
  const Tensor<T> dummy_target(heads.channels(), heads.rho.h, heads.rho.w);
  const std::vector<std::uint8_t> no_mask(heads.rho.plane(), 0);
  const auto s = patch_loss(heads, dummy_target, no_mask, scribbles, config);
  SegLosses out;
  out.background = s.scribbled[0] > 0 ? s.seg[0] / double(s.scribbled[0]) : 0.0;
  out.foreground = s.scribbled[1] > 0 ? s.seg[1] / double(s.scribbled[1]) : 0.0;
  out.clamped = s.clamped;
  return out;
}

double joint_loss(double mix, const SegLosses& seg, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  return (1.0 - lambda) * (seg.background + seg.foreground) + lambda * mix;
}

template <class T>
LossReport batch_losses(std::span<const LossSample<T>> batch, const MixtureConfig& config) {
  PatchLossSums totals;
  for (const auto& s : batch) {
    totals += patch_loss(*s.heads, *s.target, s.mask, s.scribbles, config);
  }
  return finalize(totals, config.lambda);
}

LossReport brute_force_losses(std::span<const LossSample<double>> batch,
                              const MixtureConfig& config) {
  double mix_sum = 0.0;
  double seg_sum[2] = {0.0, 0.0};
  std::size_t n_imputed = 0;
  std::size_t n_scribbled[2] = {0, 0};
  std::size_t clamped = 0;
  for (const auto& s : batch) {
    const auto& h = *s.heads;
    const auto& x = *s.target;
    const int M = h.components();
    for (int y = 0; y < x.h; ++y) {
      for (int col = 0; col < x.w; ++col) {
        if (!s.mask[std::size_t(y) * x.w + col]) continue;
        ++n_imputed;
        double pixel = 0.0;
        for (int m = 0; m < M; ++m) {
          double nll = 0.0;
          for (int c = 0; c < x.c; ++c) {
            const double diff = x(c, y, col) - h.tau_at(m, c, y, col);
            const double sd = config.sigma_for(c);
            nll += diff * diff / (2.0 * sd * sd);
          }
          pixel += h.rho(m, y, col) * nll;
        }
        mix_sum += pixel;
      }
    }
    for (const auto& p : s.scribbles) {
      const int y = int(p.index) / x.w;
      const int col = int(p.index) % x.w;
      double mass = 0.0;
      for (int m = 0; m < M; ++m) {
        if (config.class_of(m) == p.cls) mass += h.rho(m, y, col);
      }
      if (mass < kLogEpsilon) {
        mass = kLogEpsilon;
        ++clamped;
      }
      seg_sum[p.cls] -= std::log(mass);
      ++n_scribbled[p.cls];
    }
  }
  LossReport r;
  r.imputed = n_imputed;
  r.scribbled[0] = n_scribbled[0];
  r.scribbled[1] = n_scribbled[1];
  r.clamped = clamped;
  r.mix = n_imputed ? mix_sum / double(n_imputed) : 0.0;
  r.seg[0] = n_scribbled[0] ? seg_sum[0] / double(n_scribbled[0]) : 0.0;
  r.seg[1] = n_scribbled[1] ? seg_sum[1] / double(n_scribbled[1]) : 0.0;
  r.joint = (1.0 - config.lambda) * (r.seg[0] + r.seg[1]) + config.lambda * r.mix;
  return r;
}

std::vector<ScribblePixel> scribble_pixels(std::span<const std::int8_t> class_raster) {
  std::vector<ScribblePixel> out;
  for (std::size_t i = 0; i < class_raster.size(); ++i) {
    if (class_raster[i] >= 0) out.push_back({std::uint32_t(i), class_raster[i]});
  }
  return out;
}

#define IMPARTIAL_INSTANTIATE_LOSSES(T)                                                       \
  template PatchLossSums patch_loss<T>(const HeadOutputs<T>&, const Tensor<T>&,               \
                                       std::span<const std::uint8_t>,                         \
                                       std::span<const ScribblePixel>, const MixtureConfig&,  \
                                       const LossWeights*, HeadOutputs<T>*);                  \
  template double mixture_loss<T>(const HeadOutputs<T>&, const Tensor<T>&,                    \
                                  std::span<const std::uint8_t>, const MixtureConfig&);       \
  template SegLosses scribble_loss<T>(const HeadOutputs<T>&, std::span<const ScribblePixel>,  \
                                      const MixtureConfig&);                                  \
  template LossReport batch_losses<T>(std::span<const LossSample<T>>, const MixtureConfig&);

IMPARTIAL_INSTANTIATE_LOSSES(float)
IMPARTIAL_INSTANTIATE_LOSSES(double)

}  // namespace impartial
