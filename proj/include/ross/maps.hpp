#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "ross/grid.hpp"

namespace ross {

/// Absolute response of the 4-neighbour Laplacian [[0,1,0],[1,-4,1],[0,1,0]]
/// with edge-replicate padding, rescaled so the maximum response is 1.
/// A flat input gives the all-zero map.
inline SaliencyMap laplacian_boundary(const SaliencyMap& sal) {
  const int h = sal.height(), w = sal.width();
  SaliencyMap out(h, w);
  double peak = 0.0;
  for (int r = 0; r < h; ++r) {
    const int up = std::max(r - 1, 0), down = std::min(r + 1, h - 1);
    for (int c = 0; c < w; ++c) {
      const int left = std::max(c - 1, 0), right = std::min(c + 1, w - 1);
      const double v = sal(up, c) + sal(down, c) + sal(r, left) + sal(r, right) - 4.0 * sal(r, c);
      out(r, c) = std::abs(v);
      peak = std::max(peak, out(r, c));
    }
  }
  if (peak > 0.0)
    for (auto& v : out.values()) v /= peak;
  return out;
}

/// 1 where value >= threshold.
inline BinaryMap binarize(const SaliencyMap& map, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, "binarize: threshold must lie in (0,1)");
  BinaryMap out(map.height(), map.width());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] >= threshold ? 1 : 0;
  return out;
}

/// Offsets (dr, dc) of the Euclidean disk of the given radius.
inline std::vector<std::pair<int, int>> disk_offsets(int radius_px) {
  std::vector<std::pair<int, int>> offs;
  const long r2 = static_cast<long>(radius_px) * radius_px;
  for (int dr = -radius_px; dr <= radius_px; ++dr)
    for (int dc = -radius_px; dc <= radius_px; ++dc)
      if (static_cast<long>(dr) * dr + static_cast<long>(dc) * dc <= r2) offs.emplace_back(dr, dc);
  return offs;
}

/// Morphological dilation with a Euclidean disk structuring element.
inline BinaryMap dilate(const BinaryMap& map, int radius_px) {
  require(radius_px >= 0, "dilate: radius must be >= 0");
  if (radius_px == 0) return map;
  const int h = map.height(), w = map.width();
  const auto offs = disk_offsets(radius_px);
  BinaryMap out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!map(r, c)) continue;
      for (auto [dr, dc] : offs) {
        const int rr = r + dr, cc = c + dc;
        if (rr >= 0 && rr < h && cc >= 0 && cc < w) out(rr, cc) = 1;
      }
    }
  return out;
}

/// Dilation radius for a fraction of the shorter image side; at least 1 px when fraction > 0.
inline int fraction_to_radius(double fraction, int height, int width) {
  require(fraction >= 0.0 && fraction <= 1.0, "fraction_to_radius: fraction must lie in [0,1]");
  require(height >= 1 && width >= 1, "fraction_to_radius: dimensions must be >= 1");
  if (fraction == 0.0) return 0;
  const auto r = static_cast<int>(std::lround(fraction * std::min(height, width)));
  return std::max(1, r);
}

namespace detail {
/// [begin, end) of block i when n items are split into k proportional blocks.
inline std::pair<int, int> block_range(int i, int n, int k) {
  const auto begin = static_cast<int>(static_cast<long>(i) * n / k);
  const auto end = static_cast<int>(static_cast<long>(i + 1) * n / k);
  return {begin, std::max(end, begin + 1)};
}
}  // namespace detail

/// Block max-pooling to a smaller grid: an output cell is set iff any input
/// pixel of its block is set.
inline BinaryMap downsample_binary(const BinaryMap& map, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "downsample_binary: output dimensions must be >= 1");
  require(out_h <= map.height() && out_w <= map.width(), "downsample_binary: upsampling is not supported");
  BinaryMap out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    const auto [r0, r1] = detail::block_range(i, map.height(), out_h);
    for (int j = 0; j < out_w; ++j) {
      const auto [c0, c1] = detail::block_range(j, map.width(), out_w);
      std::uint8_t any = 0;
      for (int r = r0; r < r1 && !any; ++r)
        for (int c = c0; c < c1; ++c)
          if (map(r, c)) {
            any = 1;
            break;
          }
      out(i, j) = any;
    }
  }
  return out;
}

namespace detail {
/// Corner-aligned source coordinate of output index i.
inline double aligned_coord(int i, int in, int out) {
  if (out == 1) return 0.5 * (in - 1);
  return static_cast<double>(i) * (in - 1) / (out - 1);
}

/// Interpolation taps for one axis: out[i] = (1-t)*in[lo] + t*in[hi].
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> t;
};

inline Taps bilinear_taps(int in, int out) {
  Taps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.t.resize(out);
  for (int i = 0; i < out; ++i) {
    const double x = aligned_coord(i, in, out);
    int lo = static_cast<int>(std::floor(x));
    lo = std::clamp(lo, 0, in - 1);
    const int hi = std::min(lo + 1, in - 1);
    taps.lo[i] = lo;
    taps.hi[i] = hi;
    taps.t[i] = x - lo;
  }
  return taps;
}
}  // namespace detail

/// Bilinear resize of one plane (corner-aligned). Works on any real plane;
/// values are not clamped.
inline void resize_plane(std::span<const double> in, int in_h, int in_w, std::span<double> out, int out_h, int out_w) {
  const auto ty = detail::bilinear_taps(in_h, out_h);
  const auto tx = detail::bilinear_taps(in_w, out_w);
  for (int i = 0; i < out_h; ++i) {
    const double* r0 = in.data() + static_cast<std::size_t>(ty.lo[i]) * in_w;
    const double* r1 = in.data() + static_cast<std::size_t>(ty.hi[i]) * in_w;
    const double a = ty.t[i];
    for (int j = 0; j < out_w; ++j) {
      const double b = tx.t[j];
      const double top = (1 - b) * r0[tx.lo[j]] + b * r0[tx.hi[j]];
      const double bot = (1 - b) * r1[tx.lo[j]] + b * r1[tx.hi[j]];
      out[static_cast<std::size_t>(i) * out_w + j] = (1 - a) * top + a * bot;
    }
  }
}

/// Transpose of resize_plane: scatters output gradients back onto the input plane (accumulating).
inline void resize_plane_backward(std::span<const double> grad_out, int out_h, int out_w, std::span<double> grad_in, int in_h, int in_w) {
  const auto ty = detail::bilinear_taps(in_h, out_h);
  const auto tx = detail::bilinear_taps(in_w, out_w);
  for (int i = 0; i < out_h; ++i) {
    double* r0 = grad_in.data() + static_cast<std::size_t>(ty.lo[i]) * in_w;
    double* r1 = grad_in.data() + static_cast<std::size_t>(ty.hi[i]) * in_w;
    const double a = ty.t[i];
    for (int j = 0; j < out_w; ++j) {
      const double g = grad_out[static_cast<std::size_t>(i) * out_w + j];
      const double b = tx.t[j];
      r0[tx.lo[j]] += (1 - a) * (1 - b) * g;
      r0[tx.hi[j]] += (1 - a) * b * g;
      r1[tx.lo[j]] += a * (1 - b) * g;
      r1[tx.hi[j]] += a * b * g;
    }
  }
}

/// Bilinear, corner-aligned resize. Output stays within the input's value range.
inline SaliencyMap resize_map(const SaliencyMap& map, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize_map: output dimensions must be >= 1");
  if (out_h == map.height() && out_w == map.width()) return map;
  SaliencyMap out(out_h, out_w);
  resize_plane(map.values(), map.height(), map.width(), out.values(), out_h, out_w);
  for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

/// (v - min)/(max - min) clamped to [0, 1 - epsilon]; a flat map becomes all zero.
inline SaliencyMap minmax_normalize(const SaliencyMap& map, double epsilon) {
  require(epsilon > 0.0 && epsilon <= 0.01, "minmax_normalize: epsilon must lie in (0, 0.01]");
  const auto [lo_it, hi_it] = std::minmax_element(map.values().begin(), map.values().end());
  const double lo = *lo_it, hi = *hi_it;
  SaliencyMap out(map.height(), map.width());
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = std::clamp((map[i] - lo) / range, 0.0, 1.0 - epsilon);
  return out;
}

}  // namespace ross
