#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ross/attribution.hpp"
#include "ross/error.hpp"
#include "ross/losses.hpp"
#include "ross/noise.hpp"

namespace ross {

struct ScheduleConfig {
  int total_classes = 10;
  int first = 4;
  int increment = 2;
  int tasks = 3;  // continual tasks after the first
};

struct MethodConfig {
  std::string name = "finetune";  // finetune | lwf
  double temperature = 2.0;
  double weight = 1.0;
};

struct RossConfig {
  bool enable_lm = true;
  bool enable_dbs = true;
  bool enable_sni = true;
  std::vector<double> dilation_fractions{0.05, 0.10, 0.15};
  double boundary_threshold = 0.5;
  std::string student_saliency = "gradcam";
  bool decoder_sees_injected = false;
  int smoothgrad_samples = 8;
  double smoothgrad_sigma = 0.1;
};

struct NoiseConfig {
  std::string mode = "multiply";
  double channel_fraction = 0.10;
};

struct OptimizerConfig {
  int epochs = 100;
  double learning_rate = 0.001;
  std::vector<int> decay_epochs{45, 90};
  double decay_factor = 10.0;
  int batch_size = 32;
};

struct ModelSection {
  std::string backbone = "reference";
  std::array<int, 4> widths{16, 32, 64, 64};
  int decoder_width = 16;
};

/// Declarative description of one incremental run. Defaults follow the
/// published training recipe; desk-scale runs override epochs and decay.
struct ExperimentConfig {
  std::string dataset;
  std::string teacher = "synthetic";  // synthetic | precomputed
  ScheduleConfig schedule;
  MethodConfig method;
  RossConfig ross;
  NoiseConfig noise;
  LossCoefficients loss;
  OptimizerConfig optimizer;
  ModelSection model;
  std::uint64_t seed = 0;
  int probe_count = 8;

  void ross_off() {
    ross.enable_lm = ross.enable_dbs = ross.enable_sni = false;
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  return json{
      {"dataset", c.dataset},
      {"teacher", c.teacher},
      {"schedule", {{"total_classes", c.schedule.total_classes}, {"first", c.schedule.first}, {"increment", c.schedule.increment}, {"tasks", c.schedule.tasks}}},
      {"method", {{"name", c.method.name}, {"temperature", c.method.temperature}, {"weight", c.method.weight}}},
      {"ross",
       {{"enable_lm", c.ross.enable_lm},
        {"enable_dbs", c.ross.enable_dbs},
        {"enable_sni", c.ross.enable_sni},
        {"dilation_fractions", c.ross.dilation_fractions},
        {"boundary_threshold", c.ross.boundary_threshold},
        {"student_saliency", c.ross.student_saliency},
        {"decoder_sees_injected", c.ross.decoder_sees_injected},
        {"smoothgrad_samples", c.ross.smoothgrad_samples},
        {"smoothgrad_sigma", c.ross.smoothgrad_sigma}}},
      {"noise", {{"mode", c.noise.mode}, {"channel_fraction", c.noise.channel_fraction}}},
      {"loss", {{"lambda_lm", c.loss.lm}, {"lambda_dbs", c.loss.dbs}}},
      {"optimizer",
       {{"epochs", c.optimizer.epochs},
        {"learning_rate", c.optimizer.learning_rate},
        {"decay_epochs", c.optimizer.decay_epochs},
        {"decay_factor", c.optimizer.decay_factor},
        {"batch_size", c.optimizer.batch_size}}},
      {"model", {{"backbone", c.model.backbone}, {"widths", c.model.widths}, {"decoder_width", c.model.decoder_width}}},
      {"seed", c.seed},
      {"probe_count", c.probe_count},
  };
}

/// Thrown for schema violations; `keys` lists every offending key path.
struct ConfigError : InvalidArgument {
  std::vector<std::string> keys;
  ConfigError(const std::string& what, std::vector<std::string> k) : InvalidArgument(what), keys(std::move(k)) {}
};

namespace detail {

inline const char* json_kind(const nlohmann::json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer() || j.is_number_unsigned()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

inline bool compatible(const nlohmann::json& want, const nlohmann::json& got) {
  if (want.is_boolean()) return got.is_boolean();
  if (want.is_number_integer() || want.is_number_unsigned()) return got.is_number_integer() || got.is_number_unsigned();
  if (want.is_number()) return got.is_number();
  if (want.is_string()) return got.is_string();
  if (want.is_array()) {
    if (!got.is_array()) return false;
    if (want.empty()) return true;
    for (const auto& e : got)
      if (!compatible(want.front(), e)) return false;
    return true;
  }
  if (want.is_object()) return got.is_object();
  return true;
}

/// Overlays `in` onto `defaults`, collecting unknown keys and type mismatches.
inline void overlay(nlohmann::json& defaults, const nlohmann::json& in, const std::string& prefix, std::vector<std::string>& errors,
                    std::vector<std::string>& keys) {
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) {
      errors.push_back("unknown key '" + path + "'");
      keys.push_back(path);
      continue;
    }
    auto& slot = defaults[it.key()];
    if (slot.is_object()) {
      if (!it.value().is_object()) {
        errors.push_back("key '" + path + "' expects an object, got " + json_kind(it.value()));
        keys.push_back(path);
      } else {
        overlay(slot, it.value(), path, errors, keys);
      }
      continue;
    }
    if (!compatible(slot, it.value())) {
      errors.push_back("key '" + path + "' expects " + std::string(json_kind(slot.is_array() && !slot.empty() ? slot.front() : slot)) +
                       (slot.is_array() ? " array" : "") + ", got " + json_kind(it.value()));
      keys.push_back(path);
      continue;
    }
    slot = it.value();
  }
}

}  // namespace detail

/// Parses a config document against the defaults. Every unknown key, type
/// mismatch and semantic violation is reported in one ConfigError.
inline ExperimentConfig parse_config(const nlohmann::json& in) {
  std::vector<std::string> errors, keys;
  if (!in.is_object()) throw ConfigError("config: top level must be a JSON object", {"<root>"});
  auto merged = to_json(ExperimentConfig{});
  detail::overlay(merged, in, "", errors, keys);
  if (!errors.empty()) {
    std::string msg = "config schema violation:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg, keys);
  }

  ExperimentConfig c;
  c.dataset = merged["dataset"];
  c.teacher = merged["teacher"];
  const auto& s = merged["schedule"];
  c.schedule = {s["total_classes"], s["first"], s["increment"], s["tasks"]};
  const auto& m = merged["method"];
  c.method = {m["name"], m["temperature"], m["weight"]};
  const auto& r = merged["ross"];
  c.ross.enable_lm = r["enable_lm"];
  c.ross.enable_dbs = r["enable_dbs"];
  c.ross.enable_sni = r["enable_sni"];
  c.ross.dilation_fractions = r["dilation_fractions"].get<std::vector<double>>();
  c.ross.boundary_threshold = r["boundary_threshold"];
  c.ross.student_saliency = r["student_saliency"];
  c.ross.decoder_sees_injected = r["decoder_sees_injected"];
  c.ross.smoothgrad_samples = r["smoothgrad_samples"];
  c.ross.smoothgrad_sigma = r["smoothgrad_sigma"];
  c.noise = {merged["noise"]["mode"], merged["noise"]["channel_fraction"]};
  c.loss = {merged["loss"]["lambda_lm"], merged["loss"]["lambda_dbs"]};
  const auto& o = merged["optimizer"];
  c.optimizer = {o["epochs"], o["learning_rate"], o["decay_epochs"].get<std::vector<int>>(), o["decay_factor"], o["batch_size"]};
  const auto& md = merged["model"];
  c.model.backbone = md["backbone"];
  const auto widths = md["widths"].get<std::vector<int>>();
  c.model.decoder_width = md["decoder_width"];
  c.seed = merged["seed"];
  c.probe_count = merged["probe_count"];

  auto bad = [&](const std::string& key, const std::string& why) {
    errors.push_back("key '" + key + "' " + why);
    keys.push_back(key);
  };
  if (widths.size() != 4) bad("model.widths", "must list 4 block widths");
  else std::copy(widths.begin(), widths.end(), c.model.widths.begin());
  for (int w : widths)
    if (w < 1) bad("model.widths", "entries must be >= 1");
  if (c.model.backbone != "reference") bad("model.backbone", "only 'reference' is built in (got '" + c.model.backbone + "')");
  if (c.teacher != "synthetic" && c.teacher != "precomputed") bad("teacher", "must be 'synthetic' or 'precomputed'");
  if (c.method.name != "finetune" && c.method.name != "lwf") bad("method.name", "must be 'finetune' or 'lwf'");
  if (!(c.method.temperature > 0)) bad("method.temperature", "must be > 0");
  if (c.schedule.first < 1 || c.schedule.increment < 1 || c.schedule.tasks < 0) bad("schedule", "first/increment must be >= 1, tasks >= 0");
  else if (c.schedule.first + c.schedule.increment * c.schedule.tasks != c.schedule.total_classes)
    bad("schedule", "first + increment * tasks must equal total_classes");
  const auto& f = c.ross.dilation_fractions;
  if (f.size() != 3) bad("ross.dilation_fractions", "needs one fraction per stage (3)");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] < 0 || f[i] > 1) bad("ross.dilation_fractions", "entries must lie in [0,1]");
    if (i > 0 && !(f[i] > f[i - 1])) bad("ross.dilation_fractions", "must be strictly increasing");
  }
  if (!(c.ross.boundary_threshold > 0 && c.ross.boundary_threshold < 1)) bad("ross.boundary_threshold", "must lie in (0,1)");
  try {
    parse_saliency_method(c.ross.student_saliency);
  } catch (const InvalidArgument&) {
    bad("ross.student_saliency", "must be gradcam, cam or smoothgrad");
  }
  if (c.ross.smoothgrad_samples < 1) bad("ross.smoothgrad_samples", "must be >= 1");
  if (c.ross.smoothgrad_sigma < 0) bad("ross.smoothgrad_sigma", "must be >= 0");
  try {
    parse_noise_mode(c.noise.mode);
  } catch (const InvalidArgument&) {
    bad("noise.mode", "must be multiply, add or blend");
  }
  if (!(c.noise.channel_fraction > 0 && c.noise.channel_fraction <= 1)) bad("noise.channel_fraction", "must lie in (0,1]");
  if (c.optimizer.epochs < 1) bad("optimizer.epochs", "must be >= 1");
  if (c.optimizer.learning_rate < 0) bad("optimizer.learning_rate", "must be >= 0");
  if (!(c.optimizer.decay_factor > 0)) bad("optimizer.decay_factor", "must be > 0");
  if (c.optimizer.batch_size < 1) bad("optimizer.batch_size", "must be >= 1");
  if (c.probe_count < 0) bad("probe_count", "must be >= 0");
  if (c.loss.lm < 0 || c.loss.dbs < 0) bad("loss", "coefficients must be >= 0");

  if (!errors.empty()) {
    std::string msg = "config schema violation:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg, keys);
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), {"<root>"});
  }
  return parse_config(j);
}

}  // namespace ross
