#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ross/grid.hpp"
#include "ross/maps.hpp"

// Stateless layer kernels on channel-major FeatureBlocks. Every forward has a
// matching backward that accumulates into caller-owned gradient buffers.
namespace ross::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// 3x3, stride 1, zero padding 1: (C*9) x (H*W) patch matrix.
inline RowMatrix im2col3x3(const FeatureBlock& in) {
  const int C = in.channels, H = in.height, W = in.width;
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(C) * 9, static_cast<Eigen::Index>(H) * W);
  for (int c = 0; c < C; ++c) {
    const double* src = in.data.data() + c * in.plane_size();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * H * W;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          for (int x = x0; x < x1; ++x) dst[y * W + x] = src[sy * W + x + kx - 1];
        }
      }
  }
  return col;
}

inline void col2im3x3(const RowMatrix& col, FeatureBlock& grad_in) {
  const int C = grad_in.channels, H = grad_in.height, W = grad_in.width;
  for (int c = 0; c < C; ++c) {
    double* dst = grad_in.data.data() + c * grad_in.plane_size();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * H * W;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          for (int x = x0; x < x1; ++x) dst[sy * W + x + kx - 1] += src[y * W + x];
        }
      }
  }
}

/// weight: out x (in*9) row-major, bias: out.
inline FeatureBlock conv3x3(const FeatureBlock& in, std::span<const double> weight, std::span<const double> bias) {
  const int out_c = static_cast<int>(bias.size());
  const Eigen::Index k = static_cast<Eigen::Index>(in.channels) * 9;
  require(weight.size() == static_cast<std::size_t>(out_c * k), "conv3x3: weight shape mismatch");
  FeatureBlock out(out_c, in.height, in.width);
  const auto col = im2col3x3(in);
  const RowMatrix w = ConstMatrixMap(weight.data(), out_c, k);
  const RowMatrix o = w * col;
  const std::size_t hw = in.plane_size();
  for (int c = 0; c < out_c; ++c)
    for (std::size_t i = 0; i < hw; ++i) out.data[c * hw + i] = o(c, static_cast<Eigen::Index>(i)) + bias[c];
  return out;
}

/// Returns dL/d(in) when want_input; accumulates weight/bias grads when the spans are non-empty.
inline FeatureBlock conv3x3_backward(const FeatureBlock& in, std::span<const double> weight, const FeatureBlock& grad_out,
                                     std::span<double> grad_weight, std::span<double> grad_bias, bool want_input) {
  const int out_c = grad_out.channels;
  const Eigen::Index k = static_cast<Eigen::Index>(in.channels) * 9;
  const Eigen::Index hw = static_cast<Eigen::Index>(in.plane_size());
  FeatureBlock grad_in;
  const bool want_params = !grad_weight.empty();
  if (!want_params && !want_input) return grad_in;
  const RowMatrix go = ConstMatrixMap(grad_out.data.data(), out_c, hw);
  if (want_params) {
    const auto col = im2col3x3(in);
    const RowMatrix gw = go * col.transpose();
    for (Eigen::Index r = 0; r < out_c; ++r) {
      for (Eigen::Index c = 0; c < k; ++c) grad_weight[r * k + c] += gw(r, c);
      double sum = 0;
      for (Eigen::Index i = 0; i < hw; ++i) sum += go(r, i);
      grad_bias[r] += sum;
    }
  }
  if (want_input) {
    const RowMatrix w = ConstMatrixMap(weight.data(), out_c, k);
    RowMatrix dcol = w.transpose() * go;
    grad_in = FeatureBlock(in.channels, in.height, in.width);
    col2im3x3(dcol, grad_in);
  }
  return grad_in;
}

inline void relu_inplace(FeatureBlock& x) {
  for (auto& v : x.data) v = std::max(v, 0.0);
}

/// Masks grad by (activated output > 0).
inline void relu_backward_inplace(const FeatureBlock& activated, FeatureBlock& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activated.data[i] > 0.0)) grad.data[i] = 0.0;
}

struct PoolResult {
  FeatureBlock out;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 max pooling, stride 2 (dimensions must be even).
inline PoolResult maxpool2(const FeatureBlock& in) {
  require(in.height % 2 == 0 && in.width % 2 == 0, "maxpool2: spatial dims must be even");
  PoolResult r{FeatureBlock(in.channels, in.height / 2, in.width / 2), {}};
  r.argmax.resize(r.out.size());
  std::size_t o = 0;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < r.out.height; ++y)
      for (int x = 0; x < r.out.width; ++x, ++o) {
        std::size_t best = c * in.plane_size() + static_cast<std::size_t>(2 * y) * in.width + 2 * x;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = c * in.plane_size() + static_cast<std::size_t>(2 * y + dy) * in.width + 2 * x + dx;
            if (in.data[idx] > in.data[best]) best = idx;
          }
        r.out.data[o] = in.data[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  return r;
}

inline FeatureBlock maxpool2_backward(const PoolResult& pool, const FeatureBlock& grad_out, int in_h, int in_w) {
  FeatureBlock g(grad_out.channels, in_h, in_w);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g.data[pool.argmax[o]] += grad_out.data[o];
  return g;
}

inline std::vector<double> global_avg_pool(const FeatureBlock& in) {
  std::vector<double> z(in.channels);
  const double inv = 1.0 / static_cast<double>(in.plane_size());
  for (int c = 0; c < in.channels; ++c) {
    double s = 0;
    for (double v : in.plane(c)) s += v;
    z[c] = s * inv;
  }
  return z;
}

inline FeatureBlock global_avg_pool_backward(std::span<const double> grad_z, int h, int w) {
  FeatureBlock g(static_cast<int>(grad_z.size()), h, w);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (int c = 0; c < g.channels; ++c)
    for (auto& v : g.plane(c)) v = grad_z[c] * inv;
  return g;
}

/// logits = W z + b with W: K x d.
inline std::vector<double> linear(std::span<const double> z, std::span<const double> weight, std::span<const double> bias) {
  const std::size_t K = bias.size(), d = z.size();
  std::vector<double> y(bias.begin(), bias.end());
  for (std::size_t r = 0; r < K; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) s += weight[r * d + c] * z[c];
    y[r] += s;
  }
  return y;
}

inline std::vector<double> linear_backward(std::span<const double> z, std::span<const double> weight, std::span<const double> grad_y,
                                           std::span<double> grad_weight, std::span<double> grad_bias) {
  const std::size_t K = grad_y.size(), d = z.size();
  std::vector<double> gz(d, 0.0);
  for (std::size_t r = 0; r < K; ++r) {
    if (!grad_weight.empty()) {
      for (std::size_t c = 0; c < d; ++c) grad_weight[r * d + c] += grad_y[r] * z[c];
      grad_bias[r] += grad_y[r];
    }
    for (std::size_t c = 0; c < d; ++c) gz[c] += weight[r * d + c] * grad_y[r];
  }
  return gz;
}

inline FeatureBlock upsample_bilinear(const FeatureBlock& in, int out_h, int out_w) {
  FeatureBlock out(in.channels, out_h, out_w);
  for (int c = 0; c < in.channels; ++c) resize_plane(in.plane(c), in.height, in.width, out.plane(c), out_h, out_w);
  return out;
}

inline FeatureBlock upsample_bilinear_backward(const FeatureBlock& grad_out, int in_h, int in_w) {
  FeatureBlock g(grad_out.channels, in_h, in_w);
  for (int c = 0; c < g.channels; ++c)
    resize_plane_backward(grad_out.plane(c), grad_out.height, grad_out.width, g.plane(c), in_h, in_w);
  return g;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace ross::nn
