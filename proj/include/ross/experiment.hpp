#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ross/checkpoint.hpp"
#include "ross/cil.hpp"
#include "ross/hash.hpp"
#include "ross/image_io.hpp"

namespace ross {

namespace fs = std::filesystem;

struct RunOptions {
  fs::path out;
  /// Verbatim input config; written as config.json. Defaults to the resolved config.
  std::optional<std::string> config_text;
  bool resume = false;
  std::optional<fs::path> dump_noise;
  std::ostream* console = nullptr;
};

inline fs::path resolve_manifest(const std::string& dataset) {
  require(!dataset.empty(), "config: dataset path is empty");
  fs::path p(dataset);
  if (fs::is_directory(p)) p /= "manifest.csv";
  return p;
}

/// Eight (by default) test images chosen by seed, in a fixed order.
inline std::vector<const SampleRecord*> choose_probes(const std::vector<SampleRecord>& all, int count, std::uint64_t seed) {
  std::vector<const SampleRecord*> test;
  for (const auto& r : all)
    if (r.split == Split::Test) test.push_back(&r);
  std::sort(test.begin(), test.end(), [](auto* a, auto* b) { return a->path < b->path; });
  Rng rng = Rng::derive(seed, {0x960BE});
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(count, 0)), test.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(test[i], test[i + rng.uniform_int(0, static_cast<std::int64_t>(test.size() - i - 1))]);
  test.resize(k);
  return test;
}

inline std::string teacher_hash(const TeacherMaps& t) {
  Fnv1a h;
  h.update(t.saliency.storage().data(), t.saliency.size() * sizeof(double));
  h.update(t.boundary.storage().data(), t.boundary.size() * sizeof(double));
  return h.hex();
}

/// Writes run artifacts into one directory; every file is hashed into
/// outputs.json whenever the listing is refreshed.
class RunWriter {
 public:
  explicit RunWriter(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const noexcept { return dir_; }

  void text(const fs::path& rel, const std::string& content) const {
    const auto p = dir_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os << content;
    if (!os) throw Error("failed writing " + p.string());
  }

  void log(const std::string& line) const {
    std::ofstream os(dir_ / "log.txt", std::ios::app);
    os << line << '\n';
  }

  void refresh_outputs() const {
    nlohmann::json files = nlohmann::json::array();
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(dir_))
      if (e.is_regular_file() && e.path().filename() != "outputs.json" && e.path().extension() != ".tmp") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths)
      files.push_back({{"path", fs::relative(p, dir_).generic_string()}, {"fnv1a64", hash_file(p)}, {"bytes", fs::file_size(p)}});
    text("outputs.json", nlohmann::json{{"files", files}}.dump(2) + "\n");
  }

 private:
  fs::path dir_;
};

inline std::string losses_csv(const std::vector<EpochLoss>& curve) {
  std::ostringstream os;
  os << "task,epoch,learning_rate,ce,method,lm,dbs,total,lm_mae,dbs_empty\n";
  for (const auto& e : curve)
    os << e.task << ',' << e.epoch << ',' << format_real(e.learning_rate) << ',' << format_real(e.mean.ce) << ','
       << format_real(e.mean.method) << ',' << format_real(e.mean.lm) << ',' << format_real(e.mean.dbs) << ','
       << format_real(e.mean.total) << ',' << format_real(e.lm_mae) << ',' << e.dbs_empty << '\n';
  return os.str();
}

inline std::string probes_csv(const std::vector<ProbeRecord>& probes) {
  std::ostringstream os;
  os << "task,probe,path,teacher_hash,lm_loss,lm_mae\n";
  for (const auto& p : probes)
    os << p.task << ',' << p.probe << ',' << p.path << ',' << p.teacher_hash << ',' << format_real(p.lm_loss) << ','
       << format_real(p.lm_mae) << '\n';
  return os.str();
}

inline std::string metrics_text(const AccuracyMatrix& m, int total_tasks) {
  std::ostringstream os;
  write_metrics_csv(os, m, total_tasks);
  return os.str();
}

inline void dump_injection(const fs::path& dir, const std::array<std::optional<InjectionRecord>, kStageCount>& recs) {
  fs::create_directories(dir);
  for (int k = 0; k < kStageCount; ++k) {
    if (!recs[k]) continue;
    const auto& r = *recs[k];
    for (std::size_t i = 0; i < r.noise.size(); ++i) {
      const auto& n = r.noise[i];
      const std::string stem = "stage" + std::to_string(k + 1) + "_ch" + std::to_string(r.channels[i]);
      io::write_map(dir / (stem + ".png"), n.map);
      std::ofstream os(dir / (stem + ".txt"));
      os << std::setprecision(17);
      os << "seed " << n.seed << "\nmode " << to_string(r.mode) << "\ncrop " << n.crop_side << ' ' << n.crop_top << ' ' << n.crop_left
         << "\nblur_kernel " << n.blur_kernel << "\n";
      for (const auto& e : n.ellipses)
        os << "ellipse cx " << e.center_x << " cy " << e.center_y << " a " << e.major_a << " b " << e.minor_b << " alpha " << e.angle_alpha
           << " w " << e.weight_w << '\n';
    }
  }
}

inline int latest_checkpoint(const fs::path& dir) {
  int best = -1;
  if (!fs::exists(dir / "checkpoints")) return best;
  const std::regex re("task_([0-9]+)\\.ckpt");
  for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, re)) best = std::max(best, std::stoi(m[1]));
  }
  return best;
}

/// Full incremental run: schedule, per-task training and evaluation, probe
/// dumps, checkpoints. Artifacts are rewritten after every task.
inline RunState run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  require(!opt.out.empty(), "run: output directory required");
  fs::create_directories(opt.out);
  RunWriter w(opt.out);
  auto say = [&](const std::string& line) {
    w.log(line);
    if (opt.console) *opt.console << line << '\n';
  };

  const auto resolved = to_json(cfg).dump(2) + "\n";
  if (!opt.resume || !fs::exists(opt.out / "config.json")) w.text("config.json", opt.config_text.value_or(resolved));
  w.text("config.resolved.json", resolved);

  const auto manifest = load_manifest(resolve_manifest(cfg.dataset));
  const auto records = load_records(manifest);
  require(!records.empty(), "run: dataset has no records");
  const int total = static_cast<int>(manifest.class_names.size());
  const auto& sc = cfg.schedule;
  require(total == sc.total_classes, "run: dataset has " + std::to_string(total) + " classes, schedule expects " + std::to_string(sc.total_classes));
  const auto sched = build_schedule(total, sc.first, sc.increment, sc.tasks, cfg.seed);

  ModelConfig mc;
  mc.image_h = records.front().image.height;
  mc.image_w = records.front().image.width;
  mc.widths = cfg.model.widths;
  mc.decoder_width = cfg.model.decoder_width;

  TeacherProvider teacher(cfg.teacher == "precomputed" ? TeacherSource::Precomputed : TeacherSource::Synthetic, manifest.root,
                          cfg.ross.dilation_fractions, mc.stage_dims(), cfg.ross.boundary_threshold);
  auto method = make_method(cfg.method);
  Engine engine(cfg, teacher, *method);
  const auto probes = choose_probes(records, cfg.probe_count, cfg.seed);

  RunState state;
  const int resume_from = opt.resume ? latest_checkpoint(opt.out) : -1;
  if (resume_from >= 0) {
    state = load_checkpoint(opt.out / "checkpoints" / ("task_" + std::to_string(resume_from) + ".ckpt"));
    require(state.model.config().image_h == mc.image_h && state.model.config().widths == mc.widths, "resume: checkpoint does not match config");
    say("resumed from task " + std::to_string(resume_from) + " checkpoint");
  } else {
    if (!opt.resume) fs::remove(opt.out / "log.txt");
    state.model = Model(mc, Rng::derive(cfg.seed, {0x30DE1}).next_u64());
    say("run seed " + std::to_string(cfg.seed) + ", schedule " + std::to_string(sc.first) + "+" + std::to_string(sc.increment) + "x" +
        std::to_string(sc.tasks) + ", " + std::to_string(mc.image_h) + "x" + std::to_string(mc.image_w) + ", " +
        std::to_string(state.model.parameter_count()) + " parameters");
  }

  std::vector<TaskPartition> tests;
  for (int t = 0; t < sched.task_count(); ++t) tests.push_back(make_partition(records, sched.task_classes(t), Split::Test));

  for (int task = state.next_task; task < sched.task_count(); ++task) {
    const auto started = std::chrono::steady_clock::now();
    const auto train = make_partition(records, sched.task_classes(task), Split::Train);
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLoss& e) {
      std::ostringstream os;
      os << "task " << e.task << " epoch " << e.epoch << " lr " << e.learning_rate << " ce " << e.mean.ce << " method " << e.mean.method
         << " lm " << e.mean.lm << " dbs " << e.mean.dbs << " total " << e.mean.total;
      say(os.str());
    };
    if (opt.dump_noise) hooks.on_first_injection = [&](const auto& recs) { dump_injection(*opt.dump_noise, recs); };
    engine.train_task(state, train, sched, task, hooks);

    const auto acc = Engine::evaluate(state.model, std::span(tests).first(task + 1), sched);
    state.accuracy.append_row(acc);
    state.accuracy.test_sizes.push_back(static_cast<long>(tests[task].size()));

    const auto dump_dir = fs::path("dumps") / ("task" + std::to_string(task));
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const auto& s = *probes[i];
      const auto tgt = teacher.get(s);
      const auto trace = state.model.forward(s.image, std::nullopt, nullptr, true);
      const auto tp = tgt->teacher.pair();
      state.probes.push_back({task, static_cast<int>(i), s.path, teacher_hash(tgt->teacher), low_level_loss(trace.planes, tp),
                              low_level_mae(trace.planes, tp)});
      fs::create_directories(opt.out / dump_dir);
      const std::string stem = "probe" + std::to_string(i);
      io::write_map(opt.out / dump_dir / (stem + "_sal.png"), trace.planes.saliency);
      io::write_map(opt.out / dump_dir / (stem + "_bnd.png"), trace.planes.boundary);
    }

    fs::create_directories(opt.out / "checkpoints");
    save_checkpoint(opt.out / "checkpoints" / ("task_" + std::to_string(task) + ".ckpt"), state);
    w.text("metrics.csv", metrics_text(state.accuracy, sched.task_count()));
    w.text("losses.csv", losses_csv(state.curve));
    w.text("probe.csv", probes_csv(state.probes));

    std::ostringstream os;
    os << "task " << task << " done in " << std::fixed << std::setprecision(1)
       << std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() << " s, avg accuracy "
       << std::setprecision(4) << average_accuracy(state.accuracy, task);
    if (task >= 1) os << ", forgetting " << average_forgetting(state.accuracy, task);
    say(os.str());
    w.refresh_outputs();
  }
  if (const long empty = engine.diagnostics().empty_regions.load(); empty > 0)
    say("dbs: " + std::to_string(empty) + " evaluations had an empty boundary region");
  w.refresh_outputs();
  return state;
}

struct Aggregate {
  std::vector<double> mean_accuracy, std_accuracy, mean_forgetting, std_forgetting;
};

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline Aggregate aggregate(const std::vector<AccuracyMatrix>& runs) {
  require(!runs.empty(), "aggregate: no runs");
  Aggregate a;
  const int tasks = runs.front().tasks_evaluated();
  for (int t = 0; t < tasks; ++t) {
    std::vector<double> acc, fg;
    for (const auto& m : runs) {
      require(m.tasks_evaluated() == tasks, "aggregate: runs have different task counts");
      acc.push_back(average_accuracy(m, t));
      fg.push_back(t >= 1 ? average_forgetting(m, t) : 0.0);
    }
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
    a.mean_accuracy.push_back(mean(acc));
    a.std_accuracy.push_back(sample_std(acc));
    a.mean_forgetting.push_back(mean(fg));
    a.std_forgetting.push_back(sample_std(fg));
  }
  return a;
}

inline std::string aggregate_csv(const Aggregate& a, std::size_t seeds) {
  std::ostringstream os;
  os << "after_task,seeds,avg_accuracy_mean,avg_accuracy_std,avg_forgetting_mean,avg_forgetting_std\n";
  for (std::size_t t = 0; t < a.mean_accuracy.size(); ++t)
    os << t << ',' << seeds << ',' << format_real(a.mean_accuracy[t]) << ',' << format_real(a.std_accuracy[t]) << ','
       << format_real(a.mean_forgetting[t]) << ',' << format_real(a.std_forgetting[t]) << '\n';
  return os.str();
}

/// Runs one config per seed under out/seed_<s> and writes aggregate.csv.
inline std::vector<RunState> run_seeds(ExperimentConfig cfg, const std::vector<std::uint64_t>& seeds, const RunOptions& opt) {
  require(!seeds.empty(), "run: no seeds");
  std::vector<RunState> states;
  std::vector<AccuracyMatrix> mats;
  for (auto s : seeds) {
    cfg.seed = s;
    RunOptions o = opt;
    o.out = opt.out / ("seed_" + std::to_string(s));
    if (o.dump_noise) o.dump_noise = *o.dump_noise / ("seed_" + std::to_string(s));
    states.push_back(run_experiment(cfg, o));
    mats.push_back(states.back().accuracy);
  }
  RunWriter(opt.out).text("aggregate.csv", aggregate_csv(aggregate(mats), seeds.size()));
  return states;
}

struct GridVariant {
  std::string name;
  bool lm, dbs, sni;
};

/// Component ablation rows: off, +LM, +LM+DBS, +all.
inline std::vector<GridVariant> ross_grid() {
  return {{"baseline", false, false, false}, {"lm", true, false, false}, {"lm_dbs", true, true, false}, {"full", true, true, true}};
}

inline ExperimentConfig apply_variant(ExperimentConfig cfg, const GridVariant& v) {
  cfg.ross.enable_lm = v.lm;
  cfg.ross.enable_dbs = v.dbs;
  cfg.ross.enable_sni = v.sni;
  return cfg;
}

}  // namespace ross
