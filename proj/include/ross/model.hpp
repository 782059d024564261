#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ross/losses.hpp"
#include "ross/nn.hpp"
#include "ross/noise.hpp"
#include "ross/rng.hpp"

namespace ross {

inline constexpr int kStageCount = 3;

/// Reference backbone: four conv blocks, blocks 2-4 exposed as the three
/// stages (H/2, H/4, H/8), global average pooled into the embedding.
struct ModelConfig {
  int image_h = 32;
  int image_w = 32;
  std::array<int, 4> widths{16, 32, 64, 64};
  int decoder_width = 16;

  int embedding_dim() const { return widths[3]; }
  std::array<std::pair<int, int>, kStageCount> stage_dims() const {
    return {{{image_h / 2, image_w / 2}, {image_h / 4, image_w / 4}, {image_h / 8, image_w / 8}}};
  }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
};

/// Flat gradient storage parallel to Model::params().
struct Gradients {
  std::vector<std::vector<double>> g;

  void add(const Gradients& o) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] += o.g[i][j];
  }
  void scale(double s) {
    for (auto& v : g)
      for (auto& x : v) x *= s;
  }
  void zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
  }
};

struct NoiseDirective {
  double channel_fraction = 0.10;
  NoiseMode mode = NoiseMode::Multiply;
};

/// Everything a forward pass produced, kept for the backward pass.
struct Trace {
  FeatureBlock image;
  FeatureBlock act1;                 // relu(conv1(image))
  nn::PoolResult pool1;
  std::array<FeatureBlock, kStageCount> stages;     // clean stage outputs
  std::array<FeatureBlock, kStageCount> consumed;   // after optional injection
  std::array<std::optional<InjectionRecord>, kStageCount> injections;
  std::array<nn::PoolResult, 2> pools;              // pools feeding stages 2 and 3
  std::vector<double> embedding;
  std::vector<double> logits;
  bool decoded = false;
  bool decoder_on_injected = false;
  FeatureBlock dec_hidden;           // relu(conv_d1(stage3))
  FeatureBlock dec_upsampled;
  MapPair planes;
};

struct BackwardSeeds {
  std::vector<double> grad_logits;                               // empty: none
  std::array<std::optional<FeatureBlock>, kStageCount> grad_stages;  // added to dL/d(clean stage output)
  std::optional<MapPair> grad_planes;
};

struct BackwardResult {
  std::array<FeatureBlock, kStageCount> grad_stages;  // dL/d(clean stage output)
  FeatureBlock grad_image;                            // only when requested
};

/// Backbone + growing classifier + low-level decoder, with hand-written backward.
class Model {
 public:
  enum Index : std::size_t {
    kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B, kConv4W, kConv4B,
    kDec1W, kDec1B, kDec2W, kDec2B, kHeadW, kHeadB, kParamCount
  };

  Model() = default;

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    require(cfg.image_h % 8 == 0 && cfg.image_w % 8 == 0 && cfg.image_h >= 8 && cfg.image_w >= 8,
            "model: image dims must be positive multiples of 8");
    Rng rng(seed);
    const auto& w = cfg.widths;
    params_.resize(kParamCount);
    auto conv = [&](Index wi, Index bi, const std::string& name, int in, int out) {
      params_[wi] = {name + ".weight", {out, in, 3, 3}, std::vector<double>(static_cast<std::size_t>(out) * in * 9)};
      params_[bi] = {name + ".bias", {out}, std::vector<double>(out, 0.0)};
      const double sd = std::sqrt(2.0 / (in * 9.0));
      for (auto& v : params_[wi].value) v = rng.normal(0.0, sd);
    };
    conv(kConv1W, kConv1B, "backbone.block1.conv", 3, w[0]);
    conv(kConv2W, kConv2B, "backbone.block2.conv", w[0], w[1]);
    conv(kConv3W, kConv3B, "backbone.block3.conv", w[1], w[2]);
    conv(kConv4W, kConv4B, "backbone.block4.conv", w[2], w[3]);
    conv(kDec1W, kDec1B, "decoder.conv1", w[3], cfg.decoder_width);
    conv(kDec2W, kDec2B, "decoder.conv2", cfg.decoder_width, 2);
    params_[kHeadW] = {"classifier.weight", {0, w[3]}, {}};
    params_[kHeadB] = {"classifier.bias", {0}, {}};
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<Param>& params() noexcept { return params_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  int num_classes() const noexcept { return static_cast<int>(params_[kHeadB].value.size()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& p : params_) g.g.emplace_back(p.value.size(), 0.0);
    return g;
  }

  /// Adds zero-initialised rows for new classes; existing rows stay bit-identical.
  void grow_head(int new_classes) {
    require(new_classes >= 1, "grow_head: new_classes must be >= 1");
    const int d = cfg_.embedding_dim();
    auto& W = params_[kHeadW];
    auto& b = params_[kHeadB];
    W.value.resize(W.value.size() + static_cast<std::size_t>(new_classes) * d, 0.0);
    b.value.resize(b.value.size() + new_classes, 0.0);
    W.shape = {num_classes(), d};
    b.shape = {num_classes()};
  }

  /// Staged forward. With `inject`, every stage passes through inject_noise
  /// before the next consumer. Decoder planes come from the clean stage 3
  /// unless decoder_on_injected.
  Trace forward(const FeatureBlock& image, const std::optional<NoiseDirective>& inject = std::nullopt, Rng* rng = nullptr,
                bool decode = true, bool decoder_on_injected = false) const {
    require(image.channels == 3 && image.height == cfg_.image_h && image.width == cfg_.image_w,
            "forward: image must be 3x" + std::to_string(cfg_.image_h) + "x" + std::to_string(cfg_.image_w));
    require(!inject || rng != nullptr, "forward: noise injection needs an rng");
    Trace t;
    t.image = image;
    t.act1 = nn::conv3x3(image, pv(kConv1W), pv(kConv1B));
    nn::relu_inplace(t.act1);
    t.pool1 = nn::maxpool2(t.act1);

    auto run_stage = [&](int k, const FeatureBlock& input, Index wi, Index bi) {
      t.stages[k] = nn::conv3x3(input, pv(wi), pv(bi));
      nn::relu_inplace(t.stages[k]);
      if (inject) {
        auto res = inject_noise(t.stages[k], *rng, inject->channel_fraction, inject->mode, cfg_.image_h, cfg_.image_w);
        t.consumed[k] = std::move(res.features);
        t.injections[k] = std::move(res.record);
      } else {
        t.consumed[k] = t.stages[k];
      }
    };
    run_stage(0, t.pool1.out, kConv2W, kConv2B);
    t.pools[0] = nn::maxpool2(t.consumed[0]);
    run_stage(1, t.pools[0].out, kConv3W, kConv3B);
    t.pools[1] = nn::maxpool2(t.consumed[1]);
    run_stage(2, t.pools[1].out, kConv4W, kConv4B);

    t.embedding = nn::global_avg_pool(t.consumed[2]);
    t.logits = nn::linear(t.embedding, pv(kHeadW), pv(kHeadB));

    if (decode) {
      t.decoded = true;
      t.decoder_on_injected = decoder_on_injected;
      const FeatureBlock& src = decoder_on_injected ? t.consumed[2] : t.stages[2];
      t.dec_hidden = nn::conv3x3(src, pv(kDec1W), pv(kDec1B));
      nn::relu_inplace(t.dec_hidden);
      t.dec_upsampled = nn::upsample_bilinear(t.dec_hidden, cfg_.image_h, cfg_.image_w);
      const auto out = nn::conv3x3(t.dec_upsampled, pv(kDec2W), pv(kDec2B));
      t.planes.saliency = SaliencyMap(cfg_.image_h, cfg_.image_w);
      t.planes.boundary = SaliencyMap(cfg_.image_h, cfg_.image_w);
      constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
      for (std::size_t i = 0; i < t.planes.saliency.size(); ++i) {
        t.planes.saliency[i] = std::clamp(nn::sigmoid(out.plane(0)[i]), lo, hi);
        t.planes.boundary[i] = std::clamp(nn::sigmoid(out.plane(1)[i]), lo, hi);
      }
    }
    return t;
  }

  /// Backward through a trace. Parameter gradients accumulate into `grads`
  /// when non-null; with grads == nullptr only activation gradients are formed
  /// (used for Grad-CAM probes).
  BackwardResult backward(const Trace& t, const BackwardSeeds& seeds, Gradients* grads, bool want_image_grad = false) const {
    auto gw = [&](Index i) { return grads ? std::span<double>(grads->g[i]) : std::span<double>(); };
    const auto& dims = cfg_.stage_dims();
    BackwardResult res;

    // gradients w.r.t. consumed (post-injection) stage 3
    FeatureBlock g_consumed3(cfg_.widths[3], dims[2].first, dims[2].second);
    if (!seeds.grad_logits.empty()) {
      require(seeds.grad_logits.size() == t.logits.size(), "backward: grad_logits size mismatch");
      const auto gz = nn::linear_backward(t.embedding, pv(kHeadW), seeds.grad_logits, gw(kHeadW), gw(kHeadB));
      g_consumed3 = nn::global_avg_pool_backward(gz, dims[2].first, dims[2].second);
    }

    FeatureBlock g_dec_src;
    if (seeds.grad_planes) {
      require(t.decoded, "backward: plane gradients need a decoded trace");
      FeatureBlock g_out(2, cfg_.image_h, cfg_.image_w);
      for (std::size_t i = 0; i < t.planes.saliency.size(); ++i) {
        const double s = t.planes.saliency[i], b = t.planes.boundary[i];
        g_out.plane(0)[i] = seeds.grad_planes->saliency[i] * s * (1 - s);
        g_out.plane(1)[i] = seeds.grad_planes->boundary[i] * b * (1 - b);
      }
      auto g_up = nn::conv3x3_backward(t.dec_upsampled, pv(kDec2W), g_out, gw(kDec2W), gw(kDec2B), true);
      auto g_hidden = nn::upsample_bilinear_backward(g_up, t.dec_hidden.height, t.dec_hidden.width);
      nn::relu_backward_inplace(t.dec_hidden, g_hidden);
      const FeatureBlock& src = t.decoder_on_injected ? t.consumed[2] : t.stages[2];
      g_dec_src = nn::conv3x3_backward(src, pv(kDec1W), g_hidden, gw(kDec1W), gw(kDec1B), true);
      if (t.decoder_on_injected) add_into(g_consumed3, g_dec_src);
    }

    // stage 3
    FeatureBlock g3 = std::move(g_consumed3);
    if (t.injections[2]) inject_noise_backward(*t.injections[2], g3);
    if (seeds.grad_planes && !t.decoder_on_injected) add_into(g3, g_dec_src);
    if (seeds.grad_stages[2]) add_into(g3, *seeds.grad_stages[2]);
    res.grad_stages[2] = g3;

    auto stage_back = [&](const FeatureBlock& g_stage, int k, Index wi, Index bi, const FeatureBlock& input) {
      FeatureBlock g = g_stage;
      nn::relu_backward_inplace(t.stages[k], g);
      return nn::conv3x3_backward(input, pv(wi), g, gw(wi), gw(bi), true);
    };

    // stage 2
    auto g_pool2 = stage_back(g3, 2, kConv4W, kConv4B, t.pools[1].out);
    FeatureBlock g2 = nn::maxpool2_backward(t.pools[1], g_pool2, dims[1].first, dims[1].second);
    if (t.injections[1]) inject_noise_backward(*t.injections[1], g2);
    if (seeds.grad_stages[1]) add_into(g2, *seeds.grad_stages[1]);
    res.grad_stages[1] = g2;

    // stage 1
    auto g_pool1 = stage_back(g2, 1, kConv3W, kConv3B, t.pools[0].out);
    FeatureBlock g1 = nn::maxpool2_backward(t.pools[0], g_pool1, dims[0].first, dims[0].second);
    if (t.injections[0]) inject_noise_backward(*t.injections[0], g1);
    if (seeds.grad_stages[0]) add_into(g1, *seeds.grad_stages[0]);
    res.grad_stages[0] = g1;

    // block 1 is only needed for parameter or image gradients
    if (grads || want_image_grad) {
      auto g_p1 = stage_back(g1, 0, kConv2W, kConv2B, t.pool1.out);
      FeatureBlock g_act1 = nn::maxpool2_backward(t.pool1, g_p1, cfg_.image_h, cfg_.image_w);
      nn::relu_backward_inplace(t.act1, g_act1);
      res.grad_image = nn::conv3x3_backward(t.image, pv(kConv1W), g_act1, gw(kConv1W), gw(kConv1B), want_image_grad);
    }
    return res;
  }

  /// Immutable copy for method plugins (e.g. the previous-task teacher in LwF).
  Model snapshot() const { return *this; }

  friend bool operator==(const Model& a, const Model& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i)
      if (a.params_[i].value != b.params_[i].value || a.params_[i].shape != b.params_[i].shape) return false;
    return true;
  }

 private:
  std::span<const double> pv(Index i) const { return params_[i].value; }
  static void add_into(FeatureBlock& a, const FeatureBlock& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
  }

  ModelConfig cfg_;
  std::vector<Param> params_;
};

/// Adam with the step-decay schedule configured per task.
class Adam {
 public:
  Adam() = default;
  Adam(const Model& m, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : m.params()) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

  void step(Model& model, const Gradients& g) {
    ++t_;
    if (lr_ == 0.0) return;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    auto& ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& w = ps[i].value;
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g.g[i][j];
        m_[i][j] = b1_ * m_[i][j] + (1 - b1_) * gj;
        v_[i][j] = b2_ * v_[i][j] + (1 - b2_) * gj * gj;
        w[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
      }
    }
  }

  // exposed for checkpointing
  std::vector<std::vector<double>>& first_moment() { return m_; }
  std::vector<std::vector<double>>& second_moment() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace ross
