#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "ross/grid.hpp"
#include "ross/maps.hpp"
#include "ross/rng.hpp"

namespace ross {

/// One elliptical saliency blob. The center is (row, column): center_x runs
/// along the height axis and center_y along the width axis.
struct EllipseParams {
  double center_x = 0;
  double center_y = 0;
  double major_a = 0;
  double minor_b = 0;
  double angle_alpha = 0;
  double weight_w = 0;
};

struct NoiseMap {
  SaliencyMap map;
  std::uint64_t seed = 0;
  std::vector<EllipseParams> ellipses;
  int crop_side = 0;
  int crop_top = 0;
  int crop_left = 0;
  int blur_kernel = 1;
};

enum class NoiseMode { Multiply, Add, Blend };

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "multiply") return NoiseMode::Multiply;
  if (s == "add") return NoiseMode::Add;
  if (s == "blend") return NoiseMode::Blend;
  throw InvalidArgument("unknown noise mode '" + s + "'");
}

inline std::string to_string(NoiseMode m) {
  switch (m) {
    case NoiseMode::Multiply: return "multiply";
    case NoiseMode::Add: return "add";
    case NoiseMode::Blend: return "blend";
  }
  return "multiply";
}

/// Draw order: center_x, center_y, angle, weight, a, b.
inline EllipseParams sample_ellipse(Rng& rng, int h, int w) {
  require(h >= 2 && w >= 2, "sample_ellipse: dimensions must be >= 2");
  const double big = std::max(h, w), small = std::min(h, w);
  EllipseParams p;
  p.center_x = rng.uniform(0.0, h);
  p.center_y = rng.uniform(0.0, w);
  p.angle_alpha = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.weight_w = rng.uniform();
  p.major_a = std::clamp(rng.normal(big / 2.0, big / 6.0), 0.0, big / 2.0);
  p.minor_b = std::clamp(rng.normal(small / 2.0, small / 6.0), 0.0, small / 2.0);
  return p;
}

inline SaliencyMap render_ellipse(const EllipseParams& p, int h, int w) {
  SaliencyMap out(h, w);
  if (p.major_a <= 0.0 || p.minor_b <= 0.0 || p.weight_w <= 0.0) return out;
  const double cs = std::cos(p.angle_alpha), sn = std::sin(p.angle_alpha);
  const double ia2 = 1.0 / (p.major_a * p.major_a), ib2 = 1.0 / (p.minor_b * p.minor_b);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      const double du = u - p.center_x, dv = v - p.center_y;
      const double ur = du * cs + dv * sn;
      const double vr = -du * sn + dv * cs;
      if (ur * ur * ia2 + vr * vr * ib2 <= 1.0) out(u, v) = p.weight_w;
    }
  return out;
}

/// Closest odd integer to min(h,w)/20, at least 1.
inline int noise_blur_kernel(int h, int w) {
  const double x = std::min(h, w) / 20.0;
  const int k = 2 * static_cast<int>(std::lround((x - 1.0) / 2.0)) + 1;
  return std::max(1, k);
}

/// Separable Gaussian blur with replicate borders; kernel size 1 is a no-op.
inline SaliencyMap gaussian_blur(const SaliencyMap& map, int kernel, double sigma) {
  require(kernel >= 1 && kernel % 2 == 1, "gaussian_blur: kernel size must be odd and >= 1");
  if (kernel == 1 || sigma <= 0.0) return map;
  const int rad = kernel / 2;
  std::vector<double> taps(kernel);
  for (int i = 0; i < kernel; ++i) taps[i] = std::exp(-0.5 * (i - rad) * (i - rad) / (sigma * sigma));
  const double norm = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= norm;

  const int h = map.height(), w = map.width();
  SaliencyMap tmp(h, w), out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0;
      for (int k = 0; k < kernel; ++k) s += taps[k] * map(r, std::clamp(c + k - rad, 0, w - 1));
      tmp(r, c) = s;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0;
      for (int k = 0; k < kernel; ++k) s += taps[k] * tmp(std::clamp(r + k - rad, 0, h - 1), c);
      out(r, c) = s;
    }
  return out;
}

/// Elliptical saliency noise: 3-5 ellipses combined by element-wise max,
/// random square crop resized back to (h,w), then Gaussian blur.
inline NoiseMap generate_noise_map(Rng& rng, int h, int w) {
  require(h >= 8 && w >= 8, "generate_noise_map: dimensions must be >= 8");
  NoiseMap nm;
  nm.seed = rng.seed();
  const int count = static_cast<int>(rng.uniform_int(3, 5));
  SaliencyMap combined(h, w);
  for (int i = 0; i < count; ++i) {
    const auto p = sample_ellipse(rng, h, w);
    nm.ellipses.push_back(p);
    const auto s = render_ellipse(p, h, w);
    for (std::size_t j = 0; j < combined.size(); ++j) combined[j] = std::max(combined[j], s[j]);
  }

  const int side_max = std::min(h, w);
  const int side_min = (side_max + 1) / 2;
  nm.crop_side = static_cast<int>(rng.uniform_int(side_min, side_max));
  nm.crop_top = static_cast<int>(rng.uniform_int(0, h - nm.crop_side));
  nm.crop_left = static_cast<int>(rng.uniform_int(0, w - nm.crop_side));
  SaliencyMap crop(nm.crop_side, nm.crop_side);
  for (int r = 0; r < nm.crop_side; ++r)
    for (int c = 0; c < nm.crop_side; ++c) crop(r, c) = combined(nm.crop_top + r, nm.crop_left + c);
  auto resized = resize_map(crop, h, w);

  nm.blur_kernel = noise_blur_kernel(h, w);
  nm.map = gaussian_blur(resized, nm.blur_kernel, nm.blur_kernel / 6.0);
  for (auto& v : nm.map.values()) v = std::clamp(v, 0.0, 1.0);
  return nm;
}

/// What inject_noise did to a block; enough to replay its backward pass.
struct InjectionRecord {
  NoiseMode mode = NoiseMode::Multiply;
  std::vector<int> channels;
  std::vector<SaliencyMap> masks;  // at feature resolution, one per selected channel
  std::vector<NoiseMap> noise;     // as generated, at generation resolution
  std::vector<std::size_t> blend_argmax;  // per selected channel, index of max(f_c) in its plane
};

struct InjectionResult {
  FeatureBlock features;
  InjectionRecord record;
};

inline int injected_channel_count(double channel_fraction, int channels) {
  require(channel_fraction > 0.0 && channel_fraction <= 1.0, "inject_noise: channel_fraction must lie in (0,1]");
  const double raw = channel_fraction * channels;
  // guard against 0.1*10 = 1.0000000000000002 rounding up to 2
  const int n = static_cast<int>(std::ceil(raw - 1e-9));
  return std::clamp(n, 1, channels);
}

/// Applies one noise mask to a feature plane in place. Returns the index of
/// the plane maximum used by blend (0 for the other modes).
inline std::size_t apply_mask(std::span<double> plane, const SaliencyMap& mask, NoiseMode mode) {
  require(plane.size() == mask.size(), "apply_mask: mask size does not match the plane");
  std::size_t arg = 0;
  switch (mode) {
    case NoiseMode::Multiply:
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] *= mask[i];
      break;
    case NoiseMode::Add:
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] += mask[i];
      break;
    case NoiseMode::Blend: {
      arg = static_cast<std::size_t>(std::max_element(plane.begin(), plane.end()) - plane.begin());
      const double peak = plane[arg];
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = (1.0 - mask[i]) * plane[i] + mask[i] * peak;
      break;
    }
  }
  return arg;
}

/// Masks ceil(fraction*C) random channels, each with its own noise map.
/// Noise is generated at (gen_h, gen_w) (the input image size) and resized
/// to the block's spatial size; pass 0 to generate at feature resolution.
inline InjectionResult inject_noise(const FeatureBlock& features, Rng& rng, double channel_fraction,
                                    NoiseMode mode = NoiseMode::Multiply, int gen_h = 0, int gen_w = 0) {
  const int n = injected_channel_count(channel_fraction, features.channels);
  if (gen_h <= 0 || gen_w <= 0) {
    gen_h = features.height;
    gen_w = features.width;
  }
  InjectionResult res{features, {}};
  res.record.mode = mode;

  std::vector<int> order(features.channels);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n; ++i) {
    const auto j = static_cast<int>(rng.uniform_int(i, features.channels - 1));
    std::swap(order[i], order[j]);
  }
  res.record.channels.assign(order.begin(), order.begin() + n);

  for (int ch : res.record.channels) {
    auto nm = generate_noise_map(rng, gen_h, gen_w);
    auto mask = resize_map(nm.map, features.height, features.width);
    const auto arg = apply_mask(res.features.plane(ch), mask, mode);
    res.record.blend_argmax.push_back(arg);
    res.record.masks.push_back(std::move(mask));
    res.record.noise.push_back(std::move(nm));
  }
  return res;
}

/// Gradient of an injected block w.r.t. its clean input, given the gradient
/// w.r.t. the injected output. Unselected channels pass straight through.
inline void inject_noise_backward(const InjectionRecord& rec, FeatureBlock& grad) {
  for (std::size_t k = 0; k < rec.channels.size(); ++k) {
    auto g = grad.plane(rec.channels[k]);
    const auto& mask = rec.masks[k];
    switch (rec.mode) {
      case NoiseMode::Multiply:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
        break;
      case NoiseMode::Add:
        break;
      case NoiseMode::Blend: {
        double to_peak = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          to_peak += mask[i] * g[i];
          g[i] *= 1.0 - mask[i];
        }
        g[rec.blend_argmax[k]] += to_peak;
        break;
      }
    }
  }
}

}  // namespace ross
