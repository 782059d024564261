#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ross/experiment.hpp"
#include "ross/report.hpp"

namespace ross::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok.front() == '-') throw ConfigError("--seeds: '" + tok + "' is not a non-negative integer", {"--seeds"});
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("--seeds: no seeds given", {"--seeds"});
  return seeds;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFound("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline int gen_data(const fs::path& out, int classes, int per_class, int size, std::uint64_t seed, bool force, std::ostream& err) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) {
      err << "ross gen-data: " << out.string() << " exists and is not empty (use --force to overwrite)\n";
      return kExitRuntime;
    }
    fs::remove_all(out);
  }
  generate_shapes_dataset(out, classes, per_class, size, seed);
  return kExitOk;
}

/// Verifies every manifest entry has loadable, correctly sized sidecars.
inline int teacher_check(const fs::path& dir, std::ostream& out, std::ostream& err) {
  const auto manifest = load_manifest(resolve_manifest(dir.string()));
  std::size_t ok = 0, bad = 0;
  for (const auto& e : manifest.entries) {
    const auto image = manifest.root / e.path;
    try {
      const auto rgb = io::read_rgb(image);
      if (!fs::exists(boundary_sidecar(image))) throw NotFound("missing " + boundary_sidecar(image).string());
      load_precomputed(image, rgb.height, rgb.width);
      ++ok;
    } catch (const Error& ex) {
      ++bad;
      err << e.path << ": " << ex.what() << '\n';
    }
  }
  out << ok << " of " << manifest.entries.size() << " entries have valid teacher sidecars\n";
  return bad == 0 ? kExitOk : kExitRuntime;
}

struct RunFlags {
  fs::path config;
  fs::path out;
  std::string seeds;
  std::string grid;
  std::string method;
  std::string ross;
  std::string student_saliency;
  std::string dump_noise;
  bool resume = false;
};

inline int run(const RunFlags& f, std::ostream& out) {
  const auto text = read_text(f.config);
  auto cfg = parse_config_text(text);
  if (!f.method.empty()) {
    if (f.method != "finetune" && f.method != "lwf") throw ConfigError("--method must be finetune or lwf", {"--method"});
    cfg.method.name = f.method;
  }
  if (!f.ross.empty()) {
    if (f.ross == "off") cfg.ross_off();
    else if (f.ross != "on") throw ConfigError("--ross must be on or off", {"--ross"});
  }
  if (!f.student_saliency.empty()) {
    try {
      parse_saliency_method(f.student_saliency);
    } catch (const InvalidArgument&) {
      throw ConfigError("--student-saliency must be gradcam, cam or smoothgrad", {"--student-saliency"});
    }
    cfg.ross.student_saliency = f.student_saliency;
  }
  if (!f.grid.empty() && f.grid != "ross") throw ConfigError("--grid supports only 'ross'", {"--grid"});
  if (!cfg.dataset.empty() && fs::path(cfg.dataset).is_relative() && !fs::exists(cfg.dataset)) {
    const auto beside = f.config.parent_path() / cfg.dataset;
    if (fs::exists(beside)) cfg.dataset = beside.string();
  }

  RunOptions opt;
  opt.out = f.out;
  opt.config_text = text;
  opt.resume = f.resume;
  opt.console = &out;
  if (!f.dump_noise.empty()) opt.dump_noise = fs::path(f.dump_noise);
  const std::vector<std::uint64_t> seeds = f.seeds.empty() ? std::vector<std::uint64_t>{} : parse_seeds(f.seeds);

  auto run_one = [&](const ExperimentConfig& c, const RunOptions& o) {
    if (seeds.empty()) {
      const auto st = run_experiment(c, o);
      return std::vector<AccuracyMatrix>{st.accuracy};
    }
    std::vector<AccuracyMatrix> mats;
    for (const auto& st : run_seeds(c, seeds, o)) mats.push_back(st.accuracy);
    return mats;
  };

  if (f.grid.empty()) {
    run_one(cfg, opt);
    return kExitOk;
  }
  std::ostringstream summary;
  summary << "variant,runs,final_accuracy_mean,final_accuracy_std,final_forgetting_mean,final_forgetting_std\n";
  for (const auto& v : ross_grid()) {
    RunOptions o = opt;
    o.out = opt.out / v.name;
    if (o.dump_noise) o.dump_noise = *o.dump_noise / v.name;
    out << "grid variant " << v.name << '\n';
    const auto mats = run_one(apply_variant(cfg, v), o);
    const auto agg = aggregate(mats);
    summary << v.name << ',' << mats.size() << ',' << format_real(agg.mean_accuracy.back()) << ',' << format_real(agg.std_accuracy.back())
            << ',' << format_real(agg.mean_forgetting.back()) << ',' << format_real(agg.std_forgetting.back()) << '\n';
  }
  RunWriter(opt.out).text("grid.csv", summary.str());
  return kExitOk;
}

inline int report(const std::vector<fs::path>& runs, const fs::path& out, const std::string& format) {
  if (format != "csv" && format != "svg" && format != "all") throw ConfigError("--format must be csv, svg or all", {"--format"});
  const auto collected = collect_runs(runs);
  fs::create_directories(out);
  RunWriter w(out);
  if (format != "svg") {
    w.text("results.csv", merged_table(collected));
    for (const auto& r : collected) {
      std::string name = r.name;
      std::replace(name.begin(), name.end(), '/', '_');
      std::ostringstream os;
      write_metrics_csv(os, r.table.matrix, r.table.total_tasks);
      w.text(fs::path("matrices") / (name + ".csv"), os.str());
    }
  }
  if (format != "csv") {
    w.text("accuracy.svg", accuracy_plot_svg(collected));
    w.text("forgetting.svg", forgetting_plot_svg(collected));
  }
  return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"ROSS class-incremental learning toolkit", "ross"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic shapes-on-clutter dataset");
  fs::path gen_out;
  int classes = 10, per_class = 100, size = 64;
  std::uint64_t gen_seed = 0;
  bool force = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--classes", classes, "Number of classes (4..20)");
  gen->add_option("--per-class", per_class, "Images per class");
  gen->add_option("--size", size, "Image side in pixels");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* teacher = app.add_subcommand("teacher", "Teacher map utilities");
  teacher->require_subcommand(1);
  auto* check = teacher->add_subcommand("check", "Verify precomputed sidecars for every manifest entry");
  fs::path check_dir;
  check->add_option("DIR", check_dir, "Dataset directory or manifest")->required();

  auto* run_cmd = app.add_subcommand("run", "Run an incremental experiment");
  RunFlags rf;
  run_cmd->add_option("--config", rf.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", rf.out, "Run directory")->required();
  run_cmd->add_option("--seeds", rf.seeds, "Comma-separated seeds; aggregates mean and std");
  run_cmd->add_option("--grid", rf.grid, "Ablation grid (ross)");
  run_cmd->add_option("--method", rf.method, "Override method (finetune, lwf)");
  run_cmd->add_option("--ross", rf.ross, "on or off");
  run_cmd->add_option("--student-saliency", rf.student_saliency, "gradcam, cam or smoothgrad");
  run_cmd->add_option("--dump-noise", rf.dump_noise, "Write the first noise maps with their parameters here");
  run_cmd->add_flag("--resume", rf.resume, "Continue from the last checkpoint in --out");

  auto* rep = app.add_subcommand("report", "Merge run metrics into tables and plots");
  std::vector<fs::path> rep_runs;
  fs::path rep_out;
  std::string format = "all";
  rep->add_option("--runs", rep_runs, "Run directories")->required();
  rep->add_option("--out", rep_out, "Report directory")->required();
  rep->add_option("--format", format, "csv, svg or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return gen_data(gen_out, classes, per_class, size, gen_seed, force, err);
    if (*check) return teacher_check(check_dir, out, err);
    if (*run_cmd) return run(rf, out);
    if (*rep) return report(rep_runs, rep_out, format);
  } catch (const ConfigError& e) {
    err << "ross: " << e.what() << "\n";
    for (const auto& k : e.keys) err << "  offending key: " << k << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "ross: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ross::cli
