#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "ross/attribution.hpp"
#include "ross/config.hpp"
#include "ross/data.hpp"
#include "ross/losses.hpp"
#include "ross/methods.hpp"
#include "ross/metrics.hpp"
#include "ross/model.hpp"
#include "ross/parallel.hpp"
#include "ross/teacher.hpp"

namespace ross {

/// F + C x T class partition. Task 0 holds the first F ids of a seeded
/// shuffle, each later task the next C.
struct TaskSchedule {
  int first = 0;
  int increment = 0;
  int tasks = 0;
  std::uint64_t seed = 0;
  std::vector<int> order;  // class ids; logit slot i belongs to order[i]

  int task_count() const noexcept { return tasks + 1; }
  int classes_through(int task) const noexcept { return first + increment * task; }

  std::vector<int> task_sizes() const {
    std::vector<int> s{first};
    for (int t = 0; t < tasks; ++t) s.push_back(increment);
    return s;
  }

  std::set<int> task_classes(int task) const {
    require(task >= 0 && task < task_count(), "task index out of range");
    const int begin = task == 0 ? 0 : classes_through(task - 1);
    return {order.begin() + begin, order.begin() + classes_through(task)};
  }

  int slot_of(int class_id) const {
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] == class_id) return static_cast<int>(i);
    throw InvalidArgument("class " + std::to_string(class_id) + " is not in the schedule");
  }
};

inline TaskSchedule build_schedule(int total_classes, int first, int increment, int tasks, std::uint64_t seed) {
  require(first >= 1 && increment >= 1 && tasks >= 0, "build_schedule: first and increment must be >= 1, tasks >= 0");
  require(first + increment * tasks == total_classes, "build_schedule: first + increment * tasks != total_classes");
  TaskSchedule s{first, increment, tasks, seed, std::vector<int>(total_classes)};
  std::iota(s.order.begin(), s.order.end(), 0);
  Rng rng = Rng::derive(seed, {0x5C4ED});
  for (int i = total_classes - 1; i > 0; --i) std::swap(s.order[i], s.order[rng.uniform_int(0, i)]);
  return s;
}

/// Teacher maps plus the per-stage dilated boundary targets of one sample.
struct SampleTargets {
  TeacherMaps teacher;
  StageTargets stages;
};

/// Teacher lookup with a per-path cache; targets never change once computed.
class TeacherProvider {
 public:
  TeacherProvider(TeacherSource source, std::filesystem::path root, std::vector<double> fractions,
                  std::array<std::pair<int, int>, kStageCount> stage_dims, double threshold)
      : source_(source), root_(std::move(root)), fractions_(std::move(fractions)), dims_(stage_dims), threshold_(threshold) {}

  std::shared_ptr<const SampleTargets> get(const SampleRecord& s) {
    {
      std::shared_lock lock(mu_);
      if (auto it = cache_.find(s.path); it != cache_.end()) return it->second;
    }
    auto t = std::make_shared<SampleTargets>();
    if (source_ == TeacherSource::Synthetic) {
      if (s.mask.empty()) throw InvalidArgument("synthetic teacher: sample " + s.path + " has no mask");
      if (s.mask.height() != s.image.height || s.mask.width() != s.image.width) throw InvalidArgument("synthetic teacher: mask size mismatch for " + s.path);
      t->teacher = synthetic_teacher(s.mask);
    } else {
      t->teacher = load_precomputed(root_ / s.path, s.image.height, s.image.width);
    }
    t->stages = stage_boundary_targets(t->teacher, fractions_, dims_, threshold_);
    std::unique_lock lock(mu_);
    return cache_.emplace(s.path, std::move(t)).first->second;
  }

 private:
  TeacherSource source_;
  std::filesystem::path root_;
  std::vector<double> fractions_;
  std::array<std::pair<int, int>, kStageCount> dims_;
  double threshold_;
  std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const SampleTargets>> cache_;
};

struct EpochLoss {
  int task = 0;
  int epoch = 0;
  double learning_rate = 0;
  LossBreakdown mean;
  double lm_mae = 0;
  long dbs_empty = 0;
};

struct ProbeRecord {
  int task = 0;
  int probe = 0;
  std::string path;
  std::string teacher_hash;
  double lm_loss = 0;
  double lm_mae = 0;
};

/// Mutable state of an incremental run.
struct RunState {
  int next_task = 0;
  Model model;
  std::shared_ptr<const Model> previous;  // snapshot at the end of the previous task
  AccuracyMatrix accuracy;
  std::vector<EpochLoss> curve;
  std::vector<ProbeRecord> probes;
  std::string rng_state;
};

struct TrainHooks {
  std::function<void(const EpochLoss&)> on_epoch;
  /// Called after each optimizer step with the batch-mean losses.
  std::function<void(int epoch, int batch, const LossBreakdown&)> on_batch;
  /// Called once with the noise records of the first sample of the first step.
  std::function<void(const std::array<std::optional<InjectionRecord>, kStageCount>&)> on_first_injection;
};

/// Per-batch loss assembly and optimisation for one incremental run.
class Engine {
 public:
  Engine(ExperimentConfig cfg, TeacherProvider& teacher, MethodLoss& method)
      : cfg_(std::move(cfg)),
        teacher_(teacher),
        method_(method),
        saliency_(parse_saliency_method(cfg_.ross.student_saliency)),
        noise_mode_(parse_noise_mode(cfg_.noise.mode)) {}

  const ExperimentConfig& config() const noexcept { return cfg_; }
  DbsDiagnostics& diagnostics() noexcept { return diag_; }

  static double learning_rate_at(const OptimizerConfig& o, int epoch) {
    double lr = o.learning_rate;
    for (int d : o.decay_epochs)
      if (epoch >= d) lr /= o.decay_factor;
    return lr;
  }

  /// One optimizer step on the batch mean of the combined objective.
  /// `key` seeds the per-sample noise streams.
  LossBreakdown train_step(Model& model, Adam& opt, std::span<const SampleRecord* const> batch, const TaskSchedule& sched,
                           std::array<std::uint64_t, 3> key, double* lm_mae = nullptr, long* dbs_empty = nullptr,
                           std::array<std::optional<InjectionRecord>, kStageCount>* first_injection = nullptr) {
    require(!batch.empty(), "train_step: empty batch");
    const std::size_t n = batch.size();
    while (grads_.size() < n) grads_.push_back(model.zero_gradients());
    std::vector<Outcome> outcomes(n);
    parallel_for(n, [&](std::size_t i) {
      auto& g = grads_[i];
      if (g.g.size() != model.params().size() || g.g[Model::kHeadW].size() != model.params()[Model::kHeadW].value.size())
        g = model.zero_gradients();
      else
        g.zero();
      Rng rng = Rng::derive(cfg_.seed, {key[0], key[1], key[2], i});
      outcomes[i] = process_sample(model, *batch[i], sched.slot_of(batch[i]->label), rng, g, first_injection && i == 0 ? first_injection : nullptr);
    });

    Gradients total = model.zero_gradients();
    LossBreakdown mean;
    double mae = 0;
    long empty = 0;
    for (std::size_t i = 0; i < n; ++i) {
      total.add(grads_[i]);
      const auto& b = outcomes[i].loss;
      mean.ce += b.ce;
      mean.method += b.method;
      mean.lm += b.lm;
      mean.dbs += b.dbs;
      mean.total += b.total;
      mae += outcomes[i].lm_mae;
      empty += outcomes[i].dbs_empty;
    }
    const double inv = 1.0 / static_cast<double>(n);
    total.scale(inv);
    mean.ce *= inv;
    mean.method *= inv;
    mean.lm *= inv;
    mean.dbs *= inv;
    mean.total *= inv;
    if (lm_mae) *lm_mae = mae * inv;
    if (dbs_empty) *dbs_empty = empty;
    opt.step(model, total);
    return mean;
  }

  /// Trains the current task: grows the head, runs the epoch loop, then
  /// replaces the previous-task snapshot.
  void train_task(RunState& state, const TaskPartition& train, const TaskSchedule& sched, int task, const TrainHooks& hooks = {}) {
    require(!train.empty(), "train_task: task data is empty");
    const auto allowed = sched.task_classes(task);
    std::vector<const SampleRecord*> records;
    records.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto& r = train.at(i);
      if (!allowed.count(r.label))
        throw InvalidArgument("train_task: sample " + r.path + " has class " + std::to_string(r.label) + " outside task " + std::to_string(task));
      records.push_back(&r);
    }

    const int need = sched.classes_through(task);
    if (state.model.num_classes() < need) state.model.grow_head(need - state.model.num_classes());
    method_.begin_task(state.previous, task == 0 ? 0 : sched.classes_through(task - 1));

    const auto& oc = cfg_.optimizer;
    Adam opt(state.model, oc.learning_rate);
    std::vector<std::size_t> order(records.size());
    for (int epoch = 0; epoch < oc.epochs; ++epoch) {
      opt.set_learning_rate(learning_rate_at(oc, epoch));
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle = Rng::derive(cfg_.seed, {0x5EED, static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(epoch)});
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.uniform_int(0, static_cast<std::int64_t>(i))]);

      EpochLoss el{task, epoch, opt.learning_rate(), {}, 0, 0};
      std::size_t seen = 0;
      int batch_index = 0;
      for (std::size_t start = 0; start < order.size(); start += oc.batch_size, ++batch_index) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(oc.batch_size));
        std::vector<const SampleRecord*> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(records[order[i]]);
        double mae = 0;
        long empty = 0;
        std::array<std::optional<InjectionRecord>, kStageCount> first;
        const bool want_first = hooks.on_first_injection && task == 0 && epoch == 0 && batch_index == 0;
        const auto b = train_step(state.model, opt, batch, sched,
                                  {static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch_index)},
                                  &mae, &empty, want_first ? &first : nullptr);
        if (want_first) hooks.on_first_injection(first);
        if (hooks.on_batch) hooks.on_batch(epoch, batch_index, b);
        const double w = static_cast<double>(batch.size());
        el.mean.ce += w * b.ce;
        el.mean.method += w * b.method;
        el.mean.lm += w * b.lm;
        el.mean.dbs += w * b.dbs;
        el.mean.total += w * b.total;
        el.lm_mae += w * mae;
        el.dbs_empty += empty;
        seen += batch.size();
      }
      const double inv = 1.0 / static_cast<double>(seen);
      el.mean.ce *= inv;
      el.mean.method *= inv;
      el.mean.lm *= inv;
      el.mean.dbs *= inv;
      el.mean.total *= inv;
      el.lm_mae *= inv;
      state.curve.push_back(el);
      if (hooks.on_epoch) hooks.on_epoch(el);
    }
    state.previous = std::make_shared<const Model>(state.model.snapshot());
    state.next_task = task + 1;
    state.rng_state = Rng::derive(cfg_.seed, {0x5EED, static_cast<std::uint64_t>(task + 1)}).state();
  }

  /// Top-1 accuracy per seen task; predictions range over every seen class.
  static std::vector<double> evaluate(const Model& model, std::span<const TaskPartition> tests, const TaskSchedule& sched) {
    std::vector<double> acc;
    for (const auto& part : tests) {
      require(!part.empty(), "evaluate: empty test split");
      std::vector<const SampleRecord*> recs(part.size());
      for (std::size_t i = 0; i < part.size(); ++i) recs[i] = &part.at(i);
      std::vector<char> correct(part.size(), 0);
      parallel_for(part.size(), [&](std::size_t i) {
        const auto& s = *recs[i];
        const auto t = model.forward(s.image, std::nullopt, nullptr, false);
        const auto best = std::max_element(t.logits.begin(), t.logits.end()) - t.logits.begin();
        correct[i] = best == sched.slot_of(s.label) ? 1 : 0;
      });
      long hits = 0;
      for (char c : correct) hits += c;
      acc.push_back(static_cast<double>(hits) / static_cast<double>(part.size()));
    }
    return acc;
  }

  /// Student saliency for every stage of a clean trace (no gradients).
  std::array<SaliencyMap, kStageCount> student_saliency(const Model& model, const Trace& clean, int slot, Rng& rng) const {
    std::array<SaliencyMap, kStageCount> out;
    const auto dims = model.config().stage_dims();
    switch (saliency_) {
      case SaliencyMethod::GradCam: {
        const auto probe = class_probe(model, clean, slot);
        for (int k = 0; k < kStageCount; ++k) out[k] = grad_cam({clean.stages[k], probe.grad_stages[k], slot});
        break;
      }
      case SaliencyMethod::Cam: {
        const auto s3 = cam(clean.stages[2], head_row(model, slot));
        for (int k = 0; k < kStageCount; ++k) out[k] = resize_map(s3, dims[k].first, dims[k].second);
        break;
      }
      case SaliencyMethod::SmoothGrad: {
        const auto s = smooth_grad_map(model, clean.image, slot, rng);
        for (int k = 0; k < kStageCount; ++k) out[k] = resize_map(s, dims[k].first, dims[k].second);
        break;
      }
    }
    return out;
  }

 private:
  struct Outcome {
    LossBreakdown loss;
    double lm_mae = 0;
    long dbs_empty = 0;
  };

  static BackwardResult class_probe(const Model& model, const Trace& t, int slot) {
    BackwardSeeds probe;
    probe.grad_logits.assign(t.logits.size(), 0.0);
    probe.grad_logits[slot] = 1.0;
    return model.backward(t, probe, nullptr);
  }

  static std::span<const double> head_row(const Model& model, int slot) {
    const int d = model.config().embedding_dim();
    return std::span<const double>(model.params()[Model::kHeadW].value).subspan(static_cast<std::size_t>(slot) * d, d);
  }

  SaliencyMap smooth_grad_map(const Model& model, const FeatureBlock& image, int slot, Rng& rng) const {
    const auto [lo, hi] = std::minmax_element(image.data.begin(), image.data.end());
    const double sigma = cfg_.ross.smoothgrad_sigma * (*hi - *lo);
    ScoreFn fn = [&](const FeatureBlock& img, int target) {
      const auto t = model.forward(img, std::nullopt, nullptr, false);
      BackwardSeeds seeds;
      seeds.grad_logits.assign(t.logits.size(), 0.0);
      seeds.grad_logits[target] = 1.0;
      auto res = model.backward(t, seeds, nullptr, true);
      return ScoreGradient{t.logits[target], std::move(res.grad_image)};
    };
    return smooth_grad(fn, image, slot, cfg_.ross.smoothgrad_samples, sigma, rng);
  }

  Outcome process_sample(const Model& model, const SampleRecord& s, int slot, Rng& rng, Gradients& g,
                         std::array<std::optional<InjectionRecord>, kStageCount>* first_injection) {
    const auto& rc = cfg_.ross;
    const bool lm = rc.enable_lm, dbs = rc.enable_dbs, sni = rc.enable_sni;
    const bool decode_on_cls = lm && (!sni || rc.decoder_sees_injected);
    Outcome out;
    LossParts parts;

    std::optional<NoiseDirective> directive;
    if (sni) directive = NoiseDirective{cfg_.noise.channel_fraction, noise_mode_};
    Trace cls = model.forward(s.image, directive, &rng, decode_on_cls, sni && rc.decoder_sees_injected);
    if (first_injection) *first_injection = cls.injections;

    BackwardSeeds cls_seeds;
    parts.ce = cross_entropy(cls.logits, slot);
    cls_seeds.grad_logits = cross_entropy_grad(cls.logits, slot);
    parts.method = method_.evaluate(s, cls.logits, cls_seeds.grad_logits);

    Trace clean_trace;
    const Trace* clean = nullptr;
    if ((lm && !decode_on_cls) || dbs) {
      if (sni) {
        clean_trace = model.forward(s.image, std::nullopt, nullptr, lm && !decode_on_cls);
        clean = &clean_trace;
      } else {
        clean = &cls;
      }
    }
    BackwardSeeds clean_seeds;
    BackwardSeeds& cs = clean == &cls ? cls_seeds : clean_seeds;

    std::shared_ptr<const SampleTargets> tgt;
    if (lm || dbs) tgt = teacher_.get(s);

    if (lm) {
      const Trace& dt = decode_on_cls ? cls : *clean;
      const auto teacher = tgt->teacher.pair();
      parts.lm = low_level_loss(dt.planes, teacher);
      out.lm_mae = low_level_mae(dt.planes, teacher);
      if (cfg_.loss.lm != 0.0) {
        auto gp = low_level_loss_grad(dt.planes, teacher);
        for (auto& v : gp.saliency.values()) v *= cfg_.loss.lm;
        for (auto& v : gp.boundary.values()) v *= cfg_.loss.lm;
        (decode_on_cls ? cls_seeds : cs).grad_planes = std::move(gp);
      }
    }

    if (dbs) add_dbs(model, *clean, slot, tgt->stages, rng, parts, out, cs, g);

    const auto total = total_loss(parts, cfg_.loss);
    out.loss = total;

    model.backward(cls, cls_seeds, &g);
    if (clean && clean != &cls && (clean_seeds.grad_planes || clean_seeds.grad_stages[0] || clean_seeds.grad_stages[1] || clean_seeds.grad_stages[2]))
      model.backward(*clean, clean_seeds, &g);
    return out;
  }

  void add_dbs(const Model& model, const Trace& clean, int slot, const StageTargets& targets, Rng& rng, LossParts& parts, Outcome& out,
               BackwardSeeds& seeds, Gradients& g) {
    const double scale = cfg_.loss.dbs / kStageCount;
    const bool want_grad = scale != 0.0;
    const auto dims = model.config().stage_dims();
    auto count_empty = [&](const BinaryMap& b) {
      for (auto v : b.values())
        if (v) return;
      ++out.dbs_empty;
    };
    switch (saliency_) {
      case SaliencyMethod::GradCam: {
        const auto probe = class_probe(model, clean, slot);
        for (int k = 0; k < kStageCount; ++k) {
          const AttributionRequest req{clean.stages[k], probe.grad_stages[k], slot};
          const auto S = grad_cam(req);
          parts.dbs_stages.push_back(dbs_loss(S, targets.dilated[k], &diag_));
          count_empty(targets.dilated[k]);
          if (!want_grad) continue;
          auto gS = dbs_loss_grad(S, targets.dilated[k]);
          for (auto& v : gS.values()) v *= scale;
          seeds.grad_stages[k] = grad_cam_backward(req, gS);
        }
        break;
      }
      case SaliencyMethod::Cam: {
        const auto w = head_row(model, slot);
        const auto& F3 = clean.stages[2];
        const auto S3 = cam(F3, w);
        SaliencyMap g3(S3.height(), S3.width());
        for (int k = 0; k < kStageCount; ++k) {
          const auto S = resize_map(S3, dims[k].first, dims[k].second);
          parts.dbs_stages.push_back(dbs_loss(S, targets.dilated[k], &diag_));
          count_empty(targets.dilated[k]);
          if (!want_grad) continue;
          auto gS = dbs_loss_grad(S, targets.dilated[k]);
          for (auto& v : gS.values()) v *= scale;
          if (k == 2) {
            for (std::size_t i = 0; i < g3.size(); ++i) g3[i] += gS[i];
          } else {
            resize_plane_backward(gS.values(), S.height(), S.width(), g3.values(), S3.height(), S3.width());
          }
        }
        if (want_grad) {
          auto cg = cam_backward(F3, w, g3);
          seeds.grad_stages[2] = std::move(cg.features);
          const int d = model.config().embedding_dim();
          for (int c = 0; c < d; ++c) g.g[Model::kHeadW][static_cast<std::size_t>(slot) * d + c] += cg.weights[c];
        }
        break;
      }
      case SaliencyMethod::SmoothGrad: {
        // reported only; no gradient flows from this term
        const auto S = smooth_grad_map(model, clean.image, slot, rng);
        for (int k = 0; k < kStageCount; ++k) {
          const auto Sk = resize_map(S, dims[k].first, dims[k].second);
          parts.dbs_stages.push_back(dbs_loss(Sk, targets.dilated[k], &diag_));
          count_empty(targets.dilated[k]);
        }
        break;
      }
    }
  }

  ExperimentConfig cfg_;
  TeacherProvider& teacher_;
  MethodLoss& method_;
  SaliencyMethod saliency_;
  NoiseMode noise_mode_;
  DbsDiagnostics diag_;
  std::vector<Gradients> grads_;
};

}  // namespace ross
