#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ross/cil.hpp"

namespace ross {

inline constexpr char kCheckpointMagic[8] = {'R', 'O', 'S', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json model_header(const Model& m) {
  const auto& c = m.config();
  return {{"image_h", c.image_h}, {"image_w", c.image_w}, {"widths", c.widths}, {"decoder_width", c.decoder_width},
          {"classes", m.num_classes()}};
}

inline Model model_from_header(const nlohmann::json& h) {
  ModelConfig c;
  c.image_h = h.at("image_h").get<int>();
  c.image_w = h.at("image_w").get<int>();
  c.widths = h.at("widths").get<std::array<int, 4>>();
  c.decoder_width = h.at("decoder_width").get<int>();
  Model m(c, 0);
  if (const int k = h.at("classes").get<int>(); k > 0) m.grow_head(k);
  return m;
}

inline void write_values(std::ostream& os, const Model& m) {
  for (const auto& p : m.params())
    os.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
}

inline void read_values(std::istream& is, Model& m, const std::string& where) {
  for (auto& p : m.params()) {
    is.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!is) throw ParseError(where + ": truncated parameter block " + p.name);
  }
}

}  // namespace detail

/// Binary snapshot of a run between tasks: 8-byte magic, u32 version, u64
/// header length, JSON header, then raw little-endian f64 parameter blocks of
/// the current and (optionally) previous model.
inline void save_checkpoint(const std::filesystem::path& path, const RunState& s) {
  nlohmann::json h;
  h["next_task"] = s.next_task;
  h["rng_state"] = s.rng_state;
  h["model"] = detail::model_header(s.model);
  if (s.previous) h["previous"] = detail::model_header(*s.previous);
  h["accuracy"] = s.accuracy.acc;
  h["test_sizes"] = s.accuracy.test_sizes;
  auto& curve = h["curve"] = nlohmann::json::array();
  for (const auto& e : s.curve)
    curve.push_back({e.task, e.epoch, e.learning_rate, e.mean.ce, e.mean.method, e.mean.lm, e.mean.dbs, e.mean.total, e.lm_mae, e.dbs_empty});
  auto& probes = h["probes"] = nlohmann::json::array();
  for (const auto& p : s.probes) probes.push_back({p.task, p.probe, p.path, p.teacher_hash, p.lm_loss, p.lm_mae});

  const std::string header = h.dump();
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint " + tmp.string());
    os.write(kCheckpointMagic, 8);
    os.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
    const std::uint64_t len = header.size();
    os.write(reinterpret_cast<const char*>(&len), 8);
    os << header;
    detail::write_values(os, s.model);
    if (s.previous) detail::write_values(os, *s.previous);
    if (!os) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline RunState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("checkpoint not found: " + path.string());
  const std::string where = "checkpoint " + path.string();
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ParseError(where + ": bad magic");
  is.read(reinterpret_cast<char*>(&version), 4);
  if (!is || version != kCheckpointVersion) throw ParseError(where + ": unsupported version " + std::to_string(version));
  is.read(reinterpret_cast<char*>(&len), 8);
  if (!is || len > (1ull << 32)) throw ParseError(where + ": bad header length");
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw ParseError(where + ": truncated header");

  RunState s;
  try {
    const auto h = nlohmann::json::parse(header);
    s.next_task = h.at("next_task").get<int>();
    s.rng_state = h.at("rng_state").get<std::string>();
    s.model = detail::model_from_header(h.at("model"));
    detail::read_values(is, s.model, where);
    if (h.contains("previous")) {
      Model prev = detail::model_from_header(h.at("previous"));
      detail::read_values(is, prev, where);
      s.previous = std::make_shared<const Model>(std::move(prev));
    }
    s.accuracy.acc = h.at("accuracy").get<std::vector<std::vector<double>>>();
    s.accuracy.test_sizes = h.at("test_sizes").get<std::vector<long>>();
    for (const auto& e : h.at("curve")) {
      EpochLoss el;
      el.task = e[0].get<int>();
      el.epoch = e[1].get<int>();
      el.learning_rate = e[2].get<double>();
      el.mean = {e[3].get<double>(), e[4].get<double>(), e[5].get<double>(), e[6].get<double>(), e[7].get<double>()};
      el.lm_mae = e[8].get<double>();
      el.dbs_empty = e[9].get<long>();
      s.curve.push_back(el);
    }
    for (const auto& p : h.at("probes"))
      s.probes.push_back({p[0].get<int>(), p[1].get<int>(), p[2].get<std::string>(), p[3].get<std::string>(), p[4].get<double>(), p[5].get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError(where + ": trailing bytes");
  return s;
}

}  // namespace ross
