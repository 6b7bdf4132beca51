#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace impartial {

/// Dense (channel, row, col) tensor used for patches and activations.
template <class T>
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : c(channels), h(height), w(width), data(std::size_t(channels) * height * width, fill) {}

  /// Changes the shape, reusing the existing allocation when possible.
  /// Contents are unspecified afterwards.
  void reshape(int channels, int height, int width) {
    c = channels;
    h = height;
    w = width;
    data.resize(std::size_t(channels) * height * width);
  }

  std::size_t plane() const { return std::size_t(h) * w; }
  std::size_t size() const { return data.size(); }

  T& operator()(int ch, int y, int x) { return data[(std::size_t(ch) * h + y) * w + x]; }
  T operator()(int ch, int y, int x) const { return data[(std::size_t(ch) * h + y) * w + x]; }

  T* channel(int ch) { return data.data() + std::size_t(ch) * plane(); }
  const T* channel(int ch) const { return data.data() + std::size_t(ch) * plane(); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(c, h, w);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace impartial
