#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ross/grid.hpp"

namespace ross {

struct LossBreakdown {
  double ce = 0;
  double method = 0;
  double lm = 0;
  double dbs = 0;
  double total = 0;
};

struct LossCoefficients {
  double lm = 1.0;
  double dbs = 1.0;
};

/// Softmax of logits / temperature, max-shifted.
inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp((logits[i] - m) / temperature);
  for (auto& v : p) v /= z;
  return p;
}

inline double log_sum_exp(std::span<const double> x, double temperature = 1.0) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0;
  for (double v : x) z += std::exp((v - m) / temperature);
  return m / temperature + std::log(z);
}

inline double cross_entropy(std::span<const double> logits, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < logits.size(), "cross_entropy: label out of range");
  return log_sum_exp(logits) - logits[label];
}

/// d cross_entropy / d logits = softmax - onehot(label).
inline std::vector<double> cross_entropy_grad(std::span<const double> logits, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < logits.size(), "cross_entropy: label out of range");
  auto g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

/// Saliency and boundary planes, either from the teacher or the decoder.
struct MapPair {
  SaliencyMap saliency;
  SaliencyMap boundary;
};

namespace detail {
inline double plane_rms(const SaliencyMap& a, const SaliencyMap& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}
inline double plane_mae(const SaliencyMap& a, const SaliencyMap& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}
}  // namespace detail

/// Mean over the two planes of ||student - teacher||_2 / sqrt(N).
inline double low_level_loss(const MapPair& student, const MapPair& teacher) {
  require_same_shape(student.saliency, teacher.saliency, "low_level_loss saliency");
  require_same_shape(student.boundary, teacher.boundary, "low_level_loss boundary");
  return 0.5 * (detail::plane_rms(student.saliency, teacher.saliency) + detail::plane_rms(student.boundary, teacher.boundary));
}

/// Mean absolute error over both planes; reported alongside the RMS loss.
inline double low_level_mae(const MapPair& student, const MapPair& teacher) {
  require_same_shape(student.saliency, teacher.saliency, "low_level_mae saliency");
  require_same_shape(student.boundary, teacher.boundary, "low_level_mae boundary");
  return 0.5 * (detail::plane_mae(student.saliency, teacher.saliency) + detail::plane_mae(student.boundary, teacher.boundary));
}

/// Gradient of low_level_loss w.r.t. the student planes. A plane with zero
/// error contributes zero gradient (the subgradient at the kink).
inline MapPair low_level_loss_grad(const MapPair& student, const MapPair& teacher) {
  require_same_shape(student.saliency, teacher.saliency, "low_level_loss saliency");
  require_same_shape(student.boundary, teacher.boundary, "low_level_loss boundary");
  auto plane_grad = [](const SaliencyMap& s, const SaliencyMap& t) {
    SaliencyMap g(s.height(), s.width());
    const double rms = detail::plane_rms(s, t);
    if (rms == 0.0) return g;
    const double scale = 0.5 / (static_cast<double>(s.size()) * rms);
    for (std::size_t i = 0; i < s.size(); ++i) g[i] = scale * (s[i] - t[i]);
    return g;
  };
  return {plane_grad(student.saliency, teacher.saliency), plane_grad(student.boundary, teacher.boundary)};
}

/// Counts dilated-boundary evaluations whose mask was empty.
struct DbsDiagnostics {
  std::atomic<long> empty_regions{0};
  std::atomic<long> evaluations{0};
};

/// Masked mean of -log(1 - S) over pixels where the dilated boundary is set.
/// An empty mask yields 0 and bumps the diagnostic counter.
inline double dbs_loss(const SaliencyMap& student, const BinaryMap& dilated_boundary, DbsDiagnostics* diag = nullptr) {
  require_same_shape(student, dilated_boundary, "dbs_loss");
  if (diag) diag->evaluations.fetch_add(1, std::memory_order_relaxed);
  double sum = 0;
  long count = 0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    if (!dilated_boundary[i]) continue;
    if (!(student[i] < 1.0) || student[i] < 0.0)
      throw InvalidArgument("dbs_loss: student saliency must lie in [0,1) inside the boundary region");
    sum -= std::log1p(-student[i]);
    ++count;
  }
  if (count == 0) {
    if (diag) diag->empty_regions.fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }
  return sum / static_cast<double>(count);
}

inline SaliencyMap dbs_loss_grad(const SaliencyMap& student, const BinaryMap& dilated_boundary) {
  require_same_shape(student, dilated_boundary, "dbs_loss");
  SaliencyMap g(student.height(), student.width());
  long count = 0;
  for (std::size_t i = 0; i < student.size(); ++i) count += dilated_boundary[i] ? 1 : 0;
  if (count == 0) return g;
  for (std::size_t i = 0; i < student.size(); ++i)
    if (dilated_boundary[i]) g[i] = 1.0 / (static_cast<double>(count) * (1.0 - student[i]));
  return g;
}

/// Cross-entropy between temperature-softened old and new distributions over the old classes.
inline double lwf_distill(std::span<const double> old_logits, std::span<const double> new_logits, double temperature) {
  require(old_logits.size() == new_logits.size(), "lwf_distill: logit shapes differ");
  require(temperature > 0.0, "lwf_distill: temperature must be > 0");
  if (old_logits.empty()) return 0.0;
  const auto p = softmax(old_logits, temperature);
  const double lse = log_sum_exp(new_logits, temperature);
  double loss = 0;
  for (std::size_t i = 0; i < p.size(); ++i) loss -= p[i] * (new_logits[i] / temperature - lse);
  return loss;
}

/// d lwf_distill / d new_logits = (q - p) / T.
inline std::vector<double> lwf_distill_grad(std::span<const double> old_logits, std::span<const double> new_logits, double temperature) {
  require(old_logits.size() == new_logits.size(), "lwf_distill: logit shapes differ");
  require(temperature > 0.0, "lwf_distill: temperature must be > 0");
  const auto p = softmax(old_logits, temperature);
  auto q = softmax(new_logits, temperature);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = (q[i] - p[i]) / temperature;
  return q;
}

/// Inputs to total_loss; the dilated-boundary part arrives per stage.
struct LossParts {
  double ce = 0;
  double method = 0;
  double lm = 0;
  std::vector<double> dbs_stages;
};

inline LossBreakdown total_loss(const LossParts& parts, const LossCoefficients& coef = {}) {
  auto finite = [](double v) { return std::isfinite(v); };
  bool ok = finite(parts.ce) && finite(parts.method) && finite(parts.lm) && finite(coef.lm) && finite(coef.dbs);
  for (double d : parts.dbs_stages) ok = ok && finite(d);
  if (!ok) throw NumericalError("total_loss: non-finite loss component");
  LossBreakdown out;
  out.ce = parts.ce;
  out.method = parts.method;
  out.lm = parts.lm;
  if (!parts.dbs_stages.empty()) {
    for (double d : parts.dbs_stages) out.dbs += d;
    out.dbs /= static_cast<double>(parts.dbs_stages.size());
  }
  out.total = out.ce + out.method + coef.lm * out.lm + coef.dbs * out.dbs;
  return out;
}

}  // namespace ross
