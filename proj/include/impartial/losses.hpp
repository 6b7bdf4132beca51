#pragma once

// Training objectives over the head outputs.
//
// Reconstruction: the expected negative log-likelihood of the true intensity
// of every imputed pixel under fixed-variance Gaussian components,
//
//     L_mix = 1/|I| Σ_{i∈I} Σ_m ρ^m_i ‖x_i − τ^m_i‖² / (2σ²)
//
// The additive constant (C/2)·ln(2πσ²) is dropped since σ is fixed.
//
// Scribble: per class k, the mean of −ln Σ_{m∈m_k} ρ^m_i over pixels
// scribbled with class k (class-balanced cross entropy on the class mass).
//
// Joint: (1−λ)(L⁰_seg + L¹_seg) + λ·L_mix, with L_mix counted once.
//
// Batch losses normalize by counts summed over the batch, so callers that
// process patches one at a time use LossWeights computed from those totals.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "impartial/model.hpp"
#include "impartial/tensor.hpp"

namespace impartial {

inline constexpr double kLogEpsilon = 1e-12;

struct MixtureConfig {
  int components = 4;
  int class0_components = 2;  // components [0, class0) model background
  std::vector<double> sigma{0.25};  // one value shared, or one per channel
  double lambda = 0.5;

  int class_of(int component) const { return component < class0_components ? 0 : 1; }
  double sigma_for(int channel) const {
    return sigma.size() == 1 ? sigma[0] : sigma.at(std::size_t(channel));
  }
  void validate(int channels = 1) const;
};

/// Scribbled pixel within a patch; `index` = row·W + col.
struct ScribblePixel {
  std::uint32_t index = 0;
  std::int8_t cls = 0;
};

struct SegLosses {
  double background = 0.0;  // L⁰_seg
  double foreground = 0.0;  // L¹_seg
  std::size_t clamped = 0;  // class masses clamped at kLogEpsilon
  double sum() const { return background + foreground; }
};

struct LossReport {
  double mix = 0.0;
  double seg[2] = {0.0, 0.0};
  double joint = 0.0;
  std::size_t imputed = 0;
  std::size_t scribbled[2] = {0, 0};
  std::size_t clamped = 0;
};

/// Unnormalized per-patch sums.
struct PatchLossSums {
  double mix = 0.0;
  double seg[2] = {0.0, 0.0};
  std::size_t imputed = 0;
  std::size_t scribbled[2] = {0, 0};
  std::size_t clamped = 0;

  PatchLossSums& operator+=(const PatchLossSums& o);
};

/// Multipliers turning per-patch sums into the batch objective.
struct LossWeights {
  double mix = 0.0;
  double seg[2] = {0.0, 0.0};
};

/// λ/|I| and (1−λ)/|S_k| from batch totals; zero where a count is zero.
LossWeights loss_weights(const PatchLossSums& totals, double lambda);

/// Builds the final report from batch totals (applies the per-count means).
LossReport finalize(const PatchLossSums& totals, double lambda);

std::size_t count_imputed(std::span<const std::uint8_t> mask);
PatchLossSums count_terms(std::span<const std::uint8_t> mask,
                          std::span<const ScribblePixel> scribbles);

/// Per-patch sums; if `grad` is non-null, writes the gradient of
/// Σ_k w.seg[k]·seg_sum_k + w.mix·mix_sum with respect to the heads into it.
template <class T>
PatchLossSums patch_loss(const HeadOutputs<T>& heads, const Tensor<T>& target,
                         std::span<const std::uint8_t> mask,
                         std::span<const ScribblePixel> scribbles, const MixtureConfig& config,
                         const LossWeights* weights = nullptr, HeadOutputs<T>* grad = nullptr);

/// Mean reconstruction loss over the imputed pixels; 0 with a warning when
/// the mask is empty.
template <class T>
double mixture_loss(const HeadOutputs<T>& heads, const Tensor<T>& target,
                    std::span<const std::uint8_t> mask, const MixtureConfig& config);

template <class T>
SegLosses scribble_loss(const HeadOutputs<T>& heads, std::span<const ScribblePixel> scribbles,
                        const MixtureConfig& config);

double joint_loss(double mix, const SegLosses& seg, double lambda);

/// One patch worth of loss inputs.
template <class T>
struct LossSample {
  const HeadOutputs<T>* heads = nullptr;
  const Tensor<T>* target = nullptr;
  std::span<const std::uint8_t> mask;
  std::span<const ScribblePixel> scribbles;
};

/// Batch objective through the fast path.
template <class T>
LossReport batch_losses(std::span<const LossSample<T>> batch, const MixtureConfig& config);

/// Scalar per-pixel reference of the batch objective (test oracle).
LossReport brute_force_losses(std::span<const LossSample<double>> batch,
                              const MixtureConfig& config);

/// Scribble pixels of a class raster (-1 unlabeled) in index order.
std::vector<ScribblePixel> scribble_pixels(std::span<const std::int8_t> class_raster);

}  // namespace impartial
