#include "impartial/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Core>

#include "impartial/data.hpp"
#include "impartial/error.hpp"

namespace fs = std::filesystem;

namespace impartial {

// ---------------------------------------------------------------------------
// Config

ModelConfig ModelConfig::full_scale(int in_channels) {
  ModelConfig c;
  c.depth = 4;
  c.base_features = 64;
  c.in_channels = in_channels;
  return c;
}

ModelConfig ModelConfig::desk(int in_channels) {
  ModelConfig c;
  c.in_channels = in_channels;
  return c;
}

void ModelConfig::validate() const {
  if (depth < 1) throw ConfigError("model depth must be >= 1");
  if (base_features < 1) throw ConfigError("base feature count must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel size must be odd");
  if (in_channels < 1) throw ConfigError("input channel count must be >= 1");
  if (components < 2) throw ConfigError("mixture needs M >= 2 components");
  if (class0_components < 1 || class1_components() < 1) {
    throw ConfigError("each class needs at least one mixture component");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0,1)");
  }
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct LayerEntry {
  std::string name;
  int in, out, k;
};

// Fixed layer order shared by build(), the parameter-count helper and the
// checkpoint manifest.
std::vector<LayerEntry> layer_table(const ModelConfig& c) {
  std::vector<LayerEntry> t;
  const int k = c.kernel_size;
  auto feat = [&](int level) { return c.base_features << level; };
  int in = c.in_channels;
  for (int l = 0; l < c.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    t.push_back({p + ".conv0", in, feat(l), k});
    t.push_back({p + ".conv1", feat(l), feat(l), k});
    in = feat(l);
  }
  t.push_back({"bottleneck.conv0", in, feat(c.depth), k});
  t.push_back({"bottleneck.conv1", feat(c.depth), feat(c.depth), k});
  for (int l = c.depth - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    t.push_back({p + ".up", feat(l + 1), feat(l), k});
    t.push_back({p + ".conv0", 2 * feat(l), feat(l), k});
    t.push_back({p + ".conv1", feat(l), feat(l), k});
  }
  t.push_back({"head_rho", feat(0), c.components, 1});
  t.push_back({"head_tau", feat(0), c.components * c.in_channels, 1});
  return t;
}

template <class T>
void im2col(const T* in, int cin, int h, int w, int k, T* col) {
  const int pad = k / 2;
  const std::size_t hw = std::size_t(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((std::size_t(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* dst = row + std::size_t(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h || x0 >= x1) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = in + (std::size_t(ci) * h + sy) * w;
          std::fill(dst, dst + x0, T(0));
          std::memcpy(dst + x0, src + x0 + dx, sizeof(T) * std::size_t(x1 - x0));
          std::fill(dst + x1, dst + w, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, int cin, int h, int w, int k, T* out) {
  const int pad = k / 2;
  const std::size_t hw = std::size_t(h) * w;
  std::fill(out, out + cin * hw, T(0));
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((std::size_t(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + std::size_t(y) * w;
          T* dst = out + (std::size_t(ci) * h + sy) * w + dx;
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

template <class T>
void conv_forward(const detail::ConvSpec& s, const T* params, const Tensor<T>& in,
                  typename ForwardCache<T>::Conv& slot, bool relu) {
  const std::size_t hw = in.plane();
  const std::size_t K = std::size_t(s.in) * s.k * s.k;
  if (s.k == 1) {
    slot.col.assign(in.data.begin(), in.data.end());
  } else {
    slot.col.resize(K * hw);
    im2col(in.data.data(), s.in, in.h, in.w, s.k, slot.col.data());
  }
  slot.out.reshape(s.out, in.h, in.w);
  CMapMat<T> W(params + s.weight, s.out, Eigen::Index(K));
  CMapMat<T> C(slot.col.data(), Eigen::Index(K), Eigen::Index(hw));
  MapMat<T> O(slot.out.data.data(), s.out, Eigen::Index(hw));
  O.noalias() = W * C;
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params + s.bias, s.out);
  O.colwise() += b;
  if (relu) O = O.cwiseMax(T(0));
}

// `dout` is the gradient w.r.t. the (pre-activation) conv output; `din` must
// not alias it.
template <class T>
void conv_backward(const detail::ConvSpec& s, const T* params, const std::vector<T>& col,
                   const Tensor<T>& dout, Tensor<T>* din, double* grad,
                   typename ForwardCache<T>::Scratch& ws) {
  const std::size_t hw = dout.plane();
  const std::size_t K = std::size_t(s.in) * s.k * s.k;
  CMapMat<T> dO(dout.data.data(), s.out, Eigen::Index(hw));
  CMapMat<T> C(col.data(), Eigen::Index(K), Eigen::Index(hw));
  ws.dweight.resize(std::size_t(s.out) * K);
  MapMat<T> dW(ws.dweight.data(), s.out, Eigen::Index(K));
  dW.noalias() = dO * C.transpose();
  double* gw = grad + s.weight;
  for (std::size_t i = 0; i < ws.dweight.size(); ++i) gw[i] += double(ws.dweight[i]);
  double* gb = grad + s.bias;
  for (int o = 0; o < s.out; ++o) {
    const T* row = dout.channel(o);
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += double(row[i]);
    gb[o] += acc;
  }
  if (din == nullptr) return;
  CMapMat<T> W(params + s.weight, s.out, Eigen::Index(K));
  din->reshape(s.in, dout.h, dout.w);
  if (s.k == 1) {
    MapMat<T> dI(din->data.data(), s.in, Eigen::Index(hw));
    dI.noalias() = W.transpose() * dO;
  } else {
    ws.dcol.resize(K * hw);
    MapMat<T> dcol(ws.dcol.data(), Eigen::Index(K), Eigen::Index(hw));
    dcol.noalias() = W.transpose() * dO;
    col2im(ws.dcol.data(), s.in, dout.h, dout.w, s.k, din->data.data());
  }
}

template <class T>
void relu_backward(const Tensor<T>& out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(out.data[i] > T(0))) grad.data[i] = T(0);
  }
}

template <class T>
void maxpool(const Tensor<T>& in, std::vector<int>& argmax, Tensor<T>& out) {
  out.reshape(in.c, in.h / 2, in.w / 2);
  argmax.resize(out.size());
  std::size_t o = 0;
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x, ++o) {
        int best = (c * in.h + 2 * y) * in.w + 2 * x;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (c * in.h + 2 * y + dy) * in.w + 2 * x + dx;
            if (in.data[idx] > in.data[best]) best = idx;
          }
        }
        argmax[o] = best;
        out.data[o] = in.data[best];
      }
    }
  }
}

template <class T>
void upsample2(const Tensor<T>& in, Tensor<T>& out) {
  out.reshape(in.c, in.h * 2, in.w * 2);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      const T* src = in.channel(c) + std::size_t(y / 2) * in.w;
      T* dst = out.channel(c) + std::size_t(y) * out.w;
      for (int x = 0; x < out.w; ++x) dst[x] = src[x / 2];
    }
  }
}

template <class T>
void upsample2_backward(const Tensor<T>& grad, Tensor<T>& out) {
  out.reshape(grad.c, grad.h / 2, grad.w / 2);
  std::fill(out.data.begin(), out.data.end(), T(0));
  for (int c = 0; c < grad.c; ++c) {
    for (int y = 0; y < grad.h; ++y) {
      const T* src = grad.channel(c) + std::size_t(y) * grad.w;
      T* dst = out.channel(c) + std::size_t(y / 2) * out.w;
      for (int x = 0; x < grad.w; ++x) dst[x / 2] += src[x];
    }
  }
}

template <class T>
void concat(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  out.reshape(a.c + b.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + std::ptrdiff_t(a.size()));
}

}  // namespace

std::size_t unet_parameter_count(const ModelConfig& config) {
  config.validate();
  std::size_t n = 0;
  for (const auto& l : layer_table(config)) n += std::size_t(l.out) * l.in * l.k * l.k + l.out;
  return n;
}

// ---------------------------------------------------------------------------
// UNet

template <class T>
UNet<T> UNet<T>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  UNet net;
  net.config_ = config;
  std::size_t offset = 0;
  for (const auto& l : layer_table(config)) {
    detail::ConvSpec s;
    s.in = l.in;
    s.out = l.out;
    s.k = l.k;
    const std::size_t wsize = std::size_t(l.out) * l.in * l.k * l.k;
    s.weight = offset;
    net.blocks_.push_back({l.name + ".weight", {l.out, l.in, l.k, l.k}, offset, wsize});
    offset += wsize;
    s.bias = offset;
    net.blocks_.push_back({l.name + ".bias", {l.out}, offset, std::size_t(l.out)});
    offset += std::size_t(l.out);
    net.convs_.push_back(s);
  }
  net.params_.assign(offset, T(0));
  Rng rng = make_rng(seed, 0x1417);
  const std::size_t heads_begin = net.convs_.size() - 2;
  for (std::size_t i = 0; i < net.convs_.size(); ++i) {
    const auto& s = net.convs_[i];
    const double fan_in = double(s.in) * s.k * s.k;
    const double stddev = i >= heads_begin ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    std::normal_distribution<double> dist(0.0, stddev);
    const std::size_t wsize = std::size_t(s.out) * s.in * s.k * s.k;
    for (std::size_t j = 0; j < wsize; ++j) net.params_[s.weight + j] = T(dist(rng));
  }
  return net;
}

template <class T>
const ParamBlock& UNet<T>::block_of(std::size_t index) const {
  for (const auto& b : blocks_) {
    if (index >= b.offset && index < b.offset + b.size) return b;
  }
  throw ConfigError("parameter index out of range");
}

template <class T>
HeadOutputs<T> UNet<T>::forward(const Tensor<T>& patch, Rng* dropout,
                                ForwardCache<T>* cache) const {
  const int d = config_.depth;
  if (patch.c != config_.in_channels) {
    throw ConfigError("patch has " + std::to_string(patch.c) + " channels, model expects " +
                      std::to_string(config_.in_channels));
  }
  const int mult = config_.size_multiple();
  if (patch.h % mult != 0 || patch.w % mult != 0 || patch.h == 0 || patch.w == 0) {
    throw ConfigError("padding required: patch " + std::to_string(patch.h) + "x" +
                      std::to_string(patch.w) + " is not a multiple of " + std::to_string(mult));
  }
  thread_local ForwardCache<T> workspace;
  ForwardCache<T>& fc = cache ? *cache : workspace;
  fc.convs.resize(convs_.size());
  fc.pool_argmax.resize(std::size_t(d));
  fc.dropout_masks.resize(std::size_t(d));
  auto& ws = fc.scratch;

  const T* p = params_.data();
  std::size_t ci = 0;
  auto run = [&](const Tensor<T>& in, bool relu) -> Tensor<T>& {
    auto& slot = fc.convs[ci++];
    conv_forward<T>(convs_[ci - 1], p, in, slot, relu);
    return slot.out;
  };

  const Tensor<T>* x = &patch;
  for (int l = 0; l < d; ++l) {
    const Tensor<T>& a = run(*x, true);
    const Tensor<T>& skip = run(a, true);
    maxpool(skip, fc.pool_argmax[std::size_t(l)], ws.pooled);
    x = &ws.pooled;
  }
  x = &run(run(*x, true), true);

  const T keep = T(1.0 - config_.dropout_rate);
  for (int l = d - 1; l >= 0; --l) {
    upsample2(*x, ws.upsampled);
    const Tensor<T>& up = run(ws.upsampled, true);
    concat(up, fc.convs[std::size_t(2 * l + 1)].out, ws.concat);
    Tensor<T>& out = run(run(ws.concat, true), true);
    auto& mask = fc.dropout_masks[std::size_t(l)];
    mask.clear();
    if (dropout != nullptr && config_.dropout_rate > 0.0) {
      // Applied in place; the relu mask in backward() stays valid because
      // dropped units become exactly zero.
      mask.resize(out.size());
      std::bernoulli_distribution bern(static_cast<double>(keep));
      for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = bern(*dropout) ? T(1) / keep : T(0);
        out.data[i] *= mask[i];
      }
    }
    x = &out;
  }

  HeadOutputs<T> heads;
  heads.rho = run(*x, false);
  heads.tau = run(*x, false);
  const std::size_t hw = heads.rho.plane();
  const int M = heads.rho.c;
  for (std::size_t i = 0; i < hw; ++i) {
    T mx = heads.rho.data[i];
    for (int m = 1; m < M; ++m) mx = std::max(mx, heads.rho.data[m * hw + i]);
    T sum = T(0);
    for (int m = 0; m < M; ++m) {
      T& v = heads.rho.data[m * hw + i];
      v = std::exp(v - mx);
      sum += v;
    }
    for (int m = 0; m < M; ++m) heads.rho.data[m * hw + i] /= sum;
  }
  for (auto& v : heads.tau.data) v = T(1) / (T(1) + std::exp(-v));
  fc.filled = cache != nullptr;
  if (cache) cache->heads = heads;
  return heads;
}

template <class T>
void UNet<T>::backward(const ForwardCache<T>& fc, const HeadOutputs<T>& head_grad,
                       std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ConfigError("gradient buffer has the wrong size");
  if (!fc.filled) throw ConfigError("backward() needs a cache filled by forward()");
  const int d = config_.depth;
  const T* p = params_.data();
  double* g = grad.data();
  const std::size_t nconv = convs_.size();
  auto& ws = fc.scratch;
  const auto& rho = fc.heads.rho;
  const auto& tau = fc.heads.tau;
  const std::size_t hw = rho.plane();
  const int M = rho.c;

  // Softmax backward: dz_m = ρ_m (dρ_m − Σ_j ρ_j dρ_j).
  ws.drho.reshape(M, rho.h, rho.w);
  for (std::size_t i = 0; i < hw; ++i) {
    T dot = T(0);
    for (int m = 0; m < M; ++m) dot += rho.data[m * hw + i] * head_grad.rho.data[m * hw + i];
    for (int m = 0; m < M; ++m) {
      ws.drho.data[m * hw + i] = rho.data[m * hw + i] * (head_grad.rho.data[m * hw + i] - dot);
    }
  }
  ws.dtau.reshape(tau.c, tau.h, tau.w);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    ws.dtau.data[i] = head_grad.tau.data[i] * tau.data[i] * (T(1) - tau.data[i]);
  }
  auto& dx = ws.dx;
  auto& tmp = ws.tmp;
  conv_backward<T>(convs_[nconv - 2], p, fc.convs[nconv - 2].col, ws.drho, &dx, g, ws);
  conv_backward<T>(convs_[nconv - 1], p, fc.convs[nconv - 1].col, ws.dtau, &tmp, g, ws);
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += tmp.data[i];

  // Decoder, in reverse of forward order (level 0 first).
  ws.skip_grad.resize(std::size_t(d));
  for (int l = 0; l < d; ++l) {
    const std::size_t base = std::size_t(2 * d + 2 + 3 * (d - 1 - l));
    const auto& mask = fc.dropout_masks[std::size_t(l)];
    if (!mask.empty()) {
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask[i];
    }
    relu_backward(fc.convs[base + 2].out, dx);
    conv_backward<T>(convs_[base + 2], p, fc.convs[base + 2].col, dx, &tmp, g, ws);
    relu_backward(fc.convs[base + 1].out, tmp);
    conv_backward<T>(convs_[base + 1], p, fc.convs[base + 1].col, tmp, &ws.dcat, g, ws);
    const int half = ws.dcat.c / 2;
    const auto split = std::ptrdiff_t(std::size_t(half) * ws.dcat.plane());
    ws.dup.reshape(half, ws.dcat.h, ws.dcat.w);
    std::copy(ws.dcat.data.begin(), ws.dcat.data.begin() + split, ws.dup.data.begin());
    Tensor<T>& ds = ws.skip_grad[std::size_t(l)];
    ds.reshape(half, ws.dcat.h, ws.dcat.w);
    std::copy(ws.dcat.data.begin() + split, ws.dcat.data.end(), ds.data.begin());
    relu_backward(fc.convs[base].out, ws.dup);
    conv_backward<T>(convs_[base], p, fc.convs[base].col, ws.dup, &tmp, g, ws);
    upsample2_backward(tmp, dx);
  }

  // Bottleneck.
  const std::size_t b = std::size_t(2 * d);
  relu_backward(fc.convs[b + 1].out, dx);
  conv_backward<T>(convs_[b + 1], p, fc.convs[b + 1].col, dx, &tmp, g, ws);
  relu_backward(fc.convs[b].out, tmp);
  conv_backward<T>(convs_[b], p, fc.convs[b].col, tmp, &dx, g, ws);

  // Encoder.
  for (int l = d - 1; l >= 0; --l) {
    const std::size_t e = std::size_t(2 * l);
    Tensor<T>& da = ws.skip_grad[std::size_t(l)];
    const auto& argmax = fc.pool_argmax[std::size_t(l)];
    for (std::size_t i = 0; i < dx.size(); ++i) da.data[std::size_t(argmax[i])] += dx.data[i];
    relu_backward(fc.convs[e + 1].out, da);
    conv_backward<T>(convs_[e + 1], p, fc.convs[e + 1].col, da, &tmp, g, ws);
    relu_backward(fc.convs[e].out, tmp);
    conv_backward<T>(convs_[e], p, fc.convs[e].col, tmp, l == 0 ? nullptr : &dx, g, ws);
  }
}

template <class T>
void check_finite_gradients(const UNet<T>& model, std::span<const double> grad) {
  for (const auto& blk : model.blocks()) {
    for (std::size_t i = 0; i < blk.size; ++i) {
      if (!std::isfinite(grad[blk.offset + i])) {
        throw NumericalError("non-finite gradient in layer " + blk.name);
      }
    }
  }
}

template <class T>
ParameterGradients gradients(const UNet<T>& model, const Tensor<T>& patch,
                             const LossClosure<T>& loss, Rng* dropout) {
  ForwardCache<T> cache;
  const auto heads = model.forward(patch, dropout, &cache);
  const auto lv = loss(heads);
  ParameterGradients out;
  out.loss = lv.value;
  out.values.assign(model.parameter_count(), 0.0);
  model.backward(cache, lv.grad, out.values);
  check_finite_gradients(model, std::span<const double>(out.values));
  return out;
}

template class UNet<float>;
template class UNet<double>;
template ParameterGradients gradients<float>(const UNet<float>&, const Tensor<float>&,
                                             const LossClosure<float>&, Rng*);
template ParameterGradients gradients<double>(const UNet<double>&, const Tensor<double>&,
                                              const LossClosure<double>&, Rng*);
template void check_finite_gradients<float>(const UNet<float>&, std::span<const double>);
template void check_finite_gradients<double>(const UNet<double>&, std::span<const double>);

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

fs::path blob_path(const fs::path& manifest) {
  fs::path b = manifest;
  b += ".bin";
  return b;
}

}  // namespace

void save_checkpoint(const Model& model, const fs::path& path, const CheckpointInfo& info) {
  const auto& c = model.config();
  std::ostringstream os;
  os.precision(17);
  os << "impartial-checkpoint 1\n"
     << "depth " << c.depth << "\n"
     << "base_features " << c.base_features << "\n"
     << "kernel_size " << c.kernel_size << "\n"
     << "in_channels " << c.in_channels << "\n"
     << "components " << c.components << "\n"
     << "class0_components " << c.class0_components << "\n"
     << "dropout_rate " << c.dropout_rate << "\n"
     << "epoch " << info.epoch << "\n"
     << "seed " << info.seed << "\n"
     << "parameters " << model.parameter_count() << "\n";
  for (const auto& b : model.blocks()) {
    os << "layer " << b.name;
    for (int s : b.shape) os << " " << s;
    os << "\n";
  }
  const auto params = model.parameters();
  // Blob first so a present manifest implies a complete blob.
  write_file_atomic(blob_path(path),
                    std::string_view(reinterpret_cast<const char*>(params.data()),
                                     params.size() * sizeof(float)));
  write_file_atomic(path, os.str());
}

Model load_checkpoint(const fs::path& path, CheckpointInfo* info) {
  if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string());
  std::istringstream in(read_file(path));
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "impartial-checkpoint" || version != 1) {
    throw DataError("not a checkpoint manifest: " + path.string());
  }
  ModelConfig c;
  CheckpointInfo ci;
  std::size_t declared = 0;
  std::vector<std::pair<std::string, std::vector<int>>> layers;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "depth") ls >> c.depth;
    else if (key == "base_features") ls >> c.base_features;
    else if (key == "kernel_size") ls >> c.kernel_size;
    else if (key == "in_channels") ls >> c.in_channels;
    else if (key == "components") ls >> c.components;
    else if (key == "class0_components") ls >> c.class0_components;
    else if (key == "dropout_rate") ls >> c.dropout_rate;
    else if (key == "epoch") ls >> ci.epoch;
    else if (key == "seed") ls >> ci.seed;
    else if (key == "parameters") ls >> declared;
    else if (key == "layer") {
      std::string name;
      ls >> name;
      std::vector<int> shape;
      int v;
      while (ls >> v) shape.push_back(v);
      layers.emplace_back(name, shape);
      continue;
    } else {
      throw DataError("unknown checkpoint key '" + key + "'");
    }
    if (!ls) throw DataError("malformed checkpoint line '" + line + "'");
  }
  Model model = Model::build(c, 0);
  if (declared != model.parameter_count() || layers.size() != model.blocks().size()) {
    throw DataError("checkpoint shape mismatch: manifest does not match its config");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].first != model.blocks()[i].name || layers[i].second != model.blocks()[i].shape) {
      throw DataError("checkpoint shape mismatch at layer " + layers[i].first);
    }
  }
  const std::string blob = read_file(blob_path(path));
  if (blob.size() != model.parameter_count() * sizeof(float)) {
    throw DataError("checkpoint shape mismatch: blob has " + std::to_string(blob.size()) +
                    " bytes, manifest needs " +
                    std::to_string(model.parameter_count() * sizeof(float)));
  }
  std::memcpy(model.parameters().data(), blob.data(), blob.size());
  if (info) *info = ci;
  return model;
}

}  // namespace impartial
