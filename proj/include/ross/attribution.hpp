#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ross/grid.hpp"
#include "ross/maps.hpp"
#include "ross/rng.hpp"

namespace ross {

inline constexpr double kSaliencyEpsilon = 1e-6;

enum class SaliencyMethod { GradCam, Cam, SmoothGrad };

inline SaliencyMethod parse_saliency_method(const std::string& s) {
  if (s == "gradcam") return SaliencyMethod::GradCam;
  if (s == "cam") return SaliencyMethod::Cam;
  if (s == "smoothgrad") return SaliencyMethod::SmoothGrad;
  throw InvalidArgument("unknown student saliency method '" + s + "'");
}

inline std::string to_string(SaliencyMethod m) {
  switch (m) {
    case SaliencyMethod::GradCam: return "gradcam";
    case SaliencyMethod::Cam: return "cam";
    case SaliencyMethod::SmoothGrad: return "smoothgrad";
  }
  return "gradcam";
}

struct AttributionRequest {
  const FeatureBlock& features;
  const FeatureBlock& gradients;  // d(target score)/d(features)
  int target_class = 0;
};

namespace detail {

inline SaliencyMap weighted_relu_sum(const FeatureBlock& f, std::span<const double> weights) {
  SaliencyMap raw(f.height, f.width);
  for (int c = 0; c < f.channels; ++c) {
    const double wc = weights[c];
    if (wc == 0.0) continue;
    const auto p = f.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) raw[i] += wc * p[i];
  }
  for (auto& v : raw.values()) v = std::max(v, 0.0);
  return raw;
}

/// Gradient of minmax_normalize(raw, eps) w.r.t. raw, min and max included.
inline SaliencyMap minmax_normalize_backward(const SaliencyMap& raw, const SaliencyMap& grad_out, double eps) {
  SaliencyMap g(raw.height(), raw.width());
  const auto [lo_it, hi_it] = std::minmax_element(raw.values().begin(), raw.values().end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return g;
  const std::size_t arg_lo = lo_it - raw.values().begin(), arg_hi = hi_it - raw.values().begin();
  const double range = hi - lo;
  double to_lo = 0, to_hi = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double s = (raw[i] - lo) / range;
    if (s <= 0.0 || s >= 1.0 - eps) continue;  // clamped
    g[i] += grad_out[i] / range;
    to_lo += grad_out[i] * (raw[i] - hi) / (range * range);
    to_hi += -grad_out[i] * (raw[i] - lo) / (range * range);
  }
  g[arg_lo] += to_lo;
  g[arg_hi] += to_hi;
  return g;
}

}  // namespace detail

/// Per-channel Grad-CAM weights: spatial mean of each gradient channel.
inline std::vector<double> grad_cam_weights(const FeatureBlock& gradients) {
  std::vector<double> alpha(gradients.channels);
  const double inv = 1.0 / static_cast<double>(gradients.plane_size());
  for (int c = 0; c < gradients.channels; ++c) {
    double s = 0;
    for (double v : gradients.plane(c)) s += v;
    alpha[c] = s * inv;
  }
  return alpha;
}

inline SaliencyMap grad_cam(const AttributionRequest& req, double eps = kSaliencyEpsilon) {
  require(req.features.same_shape(req.gradients), "grad_cam: features and gradients differ in shape");
  const auto alpha = grad_cam_weights(req.gradients);
  return minmax_normalize(detail::weighted_relu_sum(req.features, alpha), eps);
}

/// Gradient of a loss on the Grad-CAM map w.r.t. the features, holding the
/// gradient input (and hence the channel weights) fixed.
inline FeatureBlock grad_cam_backward(const AttributionRequest& req, const SaliencyMap& grad_map, double eps = kSaliencyEpsilon) {
  require(req.features.same_shape(req.gradients), "grad_cam: features and gradients differ in shape");
  const auto alpha = grad_cam_weights(req.gradients);
  const auto raw = detail::weighted_relu_sum(req.features, alpha);
  auto g_raw = detail::minmax_normalize_backward(raw, grad_map, eps);
  // raw == 0 means the ReLU was inactive (or exactly at zero); no gradient either way
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i] <= 0.0) g_raw[i] = 0.0;
  FeatureBlock g(req.features.channels, req.features.height, req.features.width);
  for (int c = 0; c < g.channels; ++c) {
    auto p = g.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = alpha[c] * g_raw[i];
  }
  return g;
}

inline SaliencyMap cam(const FeatureBlock& features, std::span<const double> class_weights, double eps = kSaliencyEpsilon) {
  require(static_cast<int>(class_weights.size()) == features.channels, "cam: need one weight per channel");
  return minmax_normalize(detail::weighted_relu_sum(features, class_weights), eps);
}

struct CamGradients {
  FeatureBlock features;
  std::vector<double> weights;
};

inline CamGradients cam_backward(const FeatureBlock& features, std::span<const double> class_weights, const SaliencyMap& grad_map,
                                 double eps = kSaliencyEpsilon) {
  require(static_cast<int>(class_weights.size()) == features.channels, "cam: need one weight per channel");
  const auto raw = detail::weighted_relu_sum(features, class_weights);
  auto g_raw = detail::minmax_normalize_backward(raw, grad_map, eps);
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i] <= 0.0) g_raw[i] = 0.0;
  CamGradients out{FeatureBlock(features.channels, features.height, features.width), std::vector<double>(features.channels, 0.0)};
  for (int c = 0; c < features.channels; ++c) {
    auto gp = out.features.plane(c);
    const auto fp = features.plane(c);
    double gw = 0;
    for (std::size_t i = 0; i < gp.size(); ++i) {
      gp[i] = class_weights[c] * g_raw[i];
      gw += fp[i] * g_raw[i];
    }
    out.weights[c] = gw;
  }
  return out;
}

/// Class score and its gradient w.r.t. the input image.
struct ScoreGradient {
  double score = 0;
  FeatureBlock gradient;
};
using ScoreFn = std::function<ScoreGradient(const FeatureBlock& image, int target_class)>;

/// Mean |input gradient| over n_samples Gaussian-perturbed copies, max over
/// channels, min-max normalized. sigma = 0 evaluates the clean image once.
inline SaliencyMap smooth_grad(const ScoreFn& forward_fn, const FeatureBlock& image, int target_class, int n_samples, double sigma, Rng& rng,
                               double eps = kSaliencyEpsilon) {
  require(n_samples >= 1, "smooth_grad: n_samples must be >= 1");
  require(sigma >= 0.0, "smooth_grad: sigma must be >= 0");
  const int runs = sigma == 0.0 ? 1 : n_samples;
  FeatureBlock acc(image.channels, image.height, image.width);
  FeatureBlock noisy = image;
  for (int s = 0; s < runs; ++s) {
    if (sigma > 0.0)
      for (std::size_t i = 0; i < image.size(); ++i) noisy.data[i] = image.data[i] + rng.normal(0.0, sigma);
    const auto sg = forward_fn(noisy, target_class);
    require(sg.gradient.same_shape(image), "smooth_grad: gradient shape differs from image");
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += std::abs(sg.gradient.data[i]);
  }
  SaliencyMap plane(image.height, image.width);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    double m = 0;
    for (int c = 0; c < image.channels; ++c) m = std::max(m, acc.plane(c)[i] / runs);
    plane[i] = m;
  }
  return minmax_normalize(plane, eps);
}

}  // namespace ross
