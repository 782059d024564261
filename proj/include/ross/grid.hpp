#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ross/error.hpp"

namespace ross {

/// Row-major 2D grid. Used for saliency planes (double) and binary masks (uint8).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{}) : h_(height), w_(width) {
    require(height >= 1 && width >= 1, "grid dimensions must be >= 1");
    v_.assign(static_cast<std::size_t>(height) * width, fill);
  }
  Grid(int height, int width, std::vector<T> values) : h_(height), w_(width), v_(std::move(values)) {
    require(height >= 1 && width >= 1, "grid dimensions must be >= 1");
    require(v_.size() == static_cast<std::size_t>(height) * width, "grid value count does not match dimensions");
  }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t size() const noexcept { return v_.size(); }
  bool empty() const noexcept { return v_.empty(); }

  T& operator()(int r, int c) noexcept { return v_[static_cast<std::size_t>(r) * w_ + c]; }
  const T& operator()(int r, int c) const noexcept { return v_[static_cast<std::size_t>(r) * w_ + c]; }
  T& operator[](std::size_t i) noexcept { return v_[i]; }
  const T& operator[](std::size_t i) const noexcept { return v_[i]; }

  std::span<T> values() noexcept { return v_; }
  std::span<const T> values() const noexcept { return v_; }
  std::vector<T>& storage() noexcept { return v_; }
  const std::vector<T>& storage() const noexcept { return v_; }

  bool same_shape(const Grid<auto>& o) const noexcept { return h_ == o.height() && w_ == o.width(); }

  friend bool operator==(const Grid& a, const Grid& b) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<T> v_;
};

/// Real grid with values in [0,1]: teacher/student saliency, boundary responses, noise.
using SaliencyMap = Grid<double>;
/// Grid with values in {0,1}.
using BinaryMap = Grid<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const std::string& what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw InvalidArgument(what + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                          std::to_string(b.width()) + ")");
}

inline SaliencyMap to_real(const BinaryMap& b) {
  SaliencyMap m(b.height(), b.width());
  for (std::size_t i = 0; i < b.size(); ++i) m[i] = b[i] ? 1.0 : 0.0;
  return m;
}

/// Channel-major block of C planes, each h x w. Holds images (C=3) and stage features.
struct FeatureBlock {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureBlock() = default;
  FeatureBlock(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
    require(c >= 1 && h >= 1 && w >= 1, "feature block dimensions must be >= 1");
  }

  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const noexcept { return data.size(); }

  double& operator()(int c, int r, int col) noexcept { return data[c * plane_size() + static_cast<std::size_t>(r) * width + col]; }
  double operator()(int c, int r, int col) const noexcept { return data[c * plane_size() + static_cast<std::size_t>(r) * width + col]; }

  std::span<double> plane(int c) noexcept { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const noexcept { return {data.data() + c * plane_size(), plane_size()}; }

  bool same_shape(const FeatureBlock& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const FeatureBlock&, const FeatureBlock&) = default;
};

}  // namespace ross
