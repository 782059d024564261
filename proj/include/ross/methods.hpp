#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "ross/config.hpp"
#include "ross/data.hpp"
#include "ross/losses.hpp"
#include "ross/model.hpp"

namespace ross {

/// Method-specific forgetting loss added to cross-entropy (the L_method term).
/// evaluate() must return a finite, nonnegative value and add its gradient
/// w.r.t. the current logits into grad_logits. Implementations are called
/// concurrently from training workers.
class MethodLoss {
 public:
  virtual ~MethodLoss() = default;
  virtual std::string name() const = 0;
  /// Called before each task with the frozen previous-task model (null for the first task).
  virtual void begin_task(std::shared_ptr<const Model> previous, int old_classes) = 0;
  virtual double evaluate(const SampleRecord& sample, std::span<const double> logits, std::span<double> grad_logits) = 0;
};

class FinetuneLoss final : public MethodLoss {
 public:
  std::string name() const override { return "finetune"; }
  void begin_task(std::shared_ptr<const Model>, int) override {}
  double evaluate(const SampleRecord&, std::span<const double>, std::span<double>) override { return 0.0; }
};

/// Learning-without-forgetting style distillation on the old-class logits,
/// with the previous-task snapshot as teacher. Old logits are computed once
/// per sample per task on the clean image.
class LwfLoss final : public MethodLoss {
 public:
  LwfLoss(double temperature, double weight) : temperature_(temperature), weight_(weight) {}

  std::string name() const override { return "lwf"; }

  void begin_task(std::shared_ptr<const Model> previous, int old_classes) override {
    std::lock_guard lock(mu_);
    previous_ = std::move(previous);
    old_classes_ = previous_ ? old_classes : 0;
    cache_.clear();
  }

  double evaluate(const SampleRecord& sample, std::span<const double> logits, std::span<double> grad_logits) override {
    if (!previous_ || old_classes_ == 0) return 0.0;
    const auto old = old_logits(sample);
    const auto cur = logits.first(old_classes_);
    const double loss = weight_ * lwf_distill(old, cur, temperature_);
    const auto g = lwf_distill_grad(old, cur, temperature_);
    for (int i = 0; i < old_classes_; ++i) grad_logits[i] += weight_ * g[i];
    return loss;
  }

 private:
  std::vector<double> old_logits(const SampleRecord& sample) {
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(&sample); it != cache_.end()) return it->second;
    }
    auto t = previous_->forward(sample.image, std::nullopt, nullptr, false);
    t.logits.resize(old_classes_);
    std::lock_guard lock(mu_);
    cache_.emplace(&sample, t.logits);
    return t.logits;
  }

  double temperature_;
  double weight_;
  std::shared_ptr<const Model> previous_;
  int old_classes_ = 0;
  std::mutex mu_;
  std::map<const SampleRecord*, std::vector<double>> cache_;
};

inline std::unique_ptr<MethodLoss> make_method(const MethodConfig& m) {
  if (m.name == "finetune") return std::make_unique<FinetuneLoss>();
  if (m.name == "lwf") return std::make_unique<LwfLoss>(m.temperature, m.weight);
  throw InvalidArgument("unknown method '" + m.name + "'");
}

}  // namespace ross
