#pragma once

// U-Net backbone with a membership head (softmax over M mixture components)
// and a statistics head (sigmoid mean per component and channel).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "impartial/rng.hpp"
#include "impartial/tensor.hpp"

namespace impartial {

struct ModelConfig {
  int depth = 2;
  int base_features = 16;
  int kernel_size = 3;
  int in_channels = 1;
  int components = 4;        // M
  int class0_components = 2; // |m_0|; components [0, class0) are background
  double dropout_rate = 0.2;

  /// Depth 4, 64 features, as used for full-scale training.
  static ModelConfig full_scale(int in_channels);
  /// Depth 2, 16 features.
  static ModelConfig desk(int in_channels);

  int class1_components() const { return components - class0_components; }
  /// Spatial dimensions must be multiples of this.
  int size_multiple() const { return 1 << depth; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// rho: M×H×W memberships; tau: (M·C)×H×W means, channel index m·C + c.
template <class T>
struct HeadOutputs {
  Tensor<T> rho;
  Tensor<T> tau;

  int components() const { return rho.c; }
  int channels() const { return rho.c == 0 ? 0 : tau.c / rho.c; }
  T tau_at(int m, int c, int y, int x) const { return tau(m * channels() + c, y, x); }

  static HeadOutputs zeros_like(const HeadOutputs& o) {
    return {Tensor<T>(o.rho.c, o.rho.h, o.rho.w), Tensor<T>(o.tau.c, o.tau.h, o.tau.w)};
  }
};

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

template <class T>
struct ForwardCache;

namespace detail {
struct ConvSpec {
  int in = 0;
  int out = 0;
  int k = 3;
  std::size_t weight = 0;  // offsets into the flat parameter vector
  std::size_t bias = 0;
};
}  // namespace detail

template <class T>
class UNet {
 public:
  UNet() = default;

  /// He-initialized convolutions, small random heads, zero biases.
  static UNet build(const ModelConfig& config, std::uint64_t seed);

  /// `dropout` enables decoder dropout drawn from the given stream; nullptr
  /// disables it. When `cache` is given, activations are kept for backward().
  HeadOutputs<T> forward(const Tensor<T>& patch, Rng* dropout = nullptr,
                         ForwardCache<T>* cache = nullptr) const;

  /// Accumulates ∂loss/∂θ into `grad` (same layout as parameters()) given the
  /// loss gradient with respect to the head outputs.
  void backward(const ForwardCache<T>& cache, const HeadOutputs<T>& head_grad,
                std::span<double> grad) const;

  const ModelConfig& config() const { return config_; }
  std::span<const T> parameters() const { return params_; }
  std::span<T> parameters() { return params_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Name of the block holding flat parameter `index`.
  const ParamBlock& block_of(std::size_t index) const;

  template <class U>
  UNet<U> cast() const {
    UNet<U> out;
    out.config_ = config_;
    out.blocks_ = blocks_;
    out.convs_ = convs_;
    out.params_.assign(params_.begin(), params_.end());
    return out;
  }

 private:
  template <class U>
  friend class UNet;

  ModelConfig config_;
  std::vector<T> params_;
  std::vector<ParamBlock> blocks_;
  std::vector<detail::ConvSpec> convs_;  // encoder, bottleneck, decoder, heads
};

/// Activations kept by forward() for backward(). Convolutions are indexed in
/// forward order: encoder (2 per level), bottleneck (2), decoder (up, conv0,
/// conv1 per level, deepest first), then the two 1×1 heads.
template <class T>
struct ForwardCache {
  struct Conv {
    std::vector<T> col;  // im2col of the input (or the input itself for 1×1)
    Tensor<T> out;       // post-activation output
  };
  std::vector<Conv> convs;
  std::vector<std::vector<int>> pool_argmax;  // per encoder level
  std::vector<std::vector<T>> dropout_masks;  // per decoder level, empty when off
  HeadOutputs<T> heads;
  bool filled = false;

  // Scratch reused across calls so repeated passes do not reallocate.
  struct Scratch {
    std::vector<T> dcol;
    std::vector<T> dweight;
    Tensor<T> pooled, upsampled, concat;
    Tensor<T> drho, dtau, dx, tmp, dcat, dup;
    std::vector<Tensor<T>> skip_grad;
  };
  mutable Scratch scratch;
};

extern template class UNet<float>;
extern template class UNet<double>;

using Model = UNet<float>;

/// Parameter count from the layer table, independent of build().
std::size_t unet_parameter_count(const ModelConfig& config);

// ---------------------------------------------------------------------------
// Differentiation contract

template <class T>
struct LossValue {
  double value = 0.0;
  HeadOutputs<T> grad;  // ∂loss/∂(rho, tau)
};

template <class T>
using LossClosure = std::function<LossValue<T>(const HeadOutputs<T>&)>;

struct ParameterGradients {
  double loss = 0.0;
  std::vector<double> values;
};

/// Forward, evaluate `loss`, backpropagate. Throws NumericalError naming the
/// first block whose gradient is not finite.
template <class T>
ParameterGradients gradients(const UNet<T>& model, const Tensor<T>& patch,
                             const LossClosure<T>& loss, Rng* dropout = nullptr);

/// Throws NumericalError naming the first block with a non-finite entry.
template <class T>
void check_finite_gradients(const UNet<T>& model, std::span<const double> grad);

// ---------------------------------------------------------------------------
// Checkpoints: text manifest at `path`, float32 LE blob at `path`.bin.

struct CheckpointInfo {
  int epoch = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const CheckpointInfo& info = {});
Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace impartial
