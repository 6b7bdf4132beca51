#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "impartial/data.hpp"
#include "impartial/rng.hpp"
#include "impartial/tensor.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("impartial-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline impartial::MultiChannelImage random_image(int w, int h, int c, std::uint64_t seed,
                                                 float lo = 0.0f, float hi = 1.0f,
                                                 bool normalized = false) {
  auto rng = impartial::make_rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(std::size_t(w) * h * c);
  for (auto& x : v) x = u(rng);
  return impartial::MultiChannelImage(w, h, c, std::move(v), normalized);
}

template <class T>
impartial::Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                                   double hi = 1.0) {
  auto rng = impartial::make_rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  impartial::Tensor<T> t(c, h, w);
  for (auto& x : t.data) x = T(u(rng));
  return t;
}

}  // namespace testing
