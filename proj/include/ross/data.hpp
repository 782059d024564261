#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ross/grid.hpp"
#include "ross/image_io.hpp"
#include "ross/rng.hpp"
#include "ross/teacher.hpp"

namespace ross {

enum class Split { Train, Test };

inline std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct SampleRecord {
  std::string path;  // relative to the dataset root
  FeatureBlock image;  // 3 x H x W in [0,1]
  int label = 0;
  BinaryMap mask;      // empty unless the dataset ships ground-truth masks
  Split split = Split::Train;
};

struct ManifestEntry {
  std::string path;
  int label = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  int image_size = 0;  // 0: taken from the first image
};

// ---------------------------------------------------------------------------
// synthetic shapes-on-clutter generator

inline constexpr std::array<const char*, 5> kShapeNames{"disk", "triangle", "square", "star", "cross"};
inline constexpr std::array<const char*, 4> kTextureNames{"solid", "stripes", "dots", "checker"};
inline constexpr int kGeneratorVersion = 1;

namespace detail {

// round(4096 * cos(6 deg * k))
inline constexpr std::array<int, 60> kCos6{
    4096, 4074, 4006, 3896, 3742, 3547, 3314, 3044, 2741, 2408, 2048, 1666, 1266, 852, 428,
    0, -428, -852, -1266, -1666, -2048, -2408, -2741, -3044, -3314, -3547, -3742, -3896, -4006, -4074,
    -4096, -4074, -4006, -3896, -3742, -3547, -3314, -3044, -2741, -2408, -2048, -1666, -1266, -852, -428,
    0, 428, 852, 1266, 1666, 2048, 2408, 2741, 3044, 3314, 3547, 3742, 3896, 4006, 4074};

inline int cos6(int k) { return kCos6[((k % 60) + 60) % 60]; }
inline int sin6(int k) { return cos6(k + 45); }

/// Polygon vertex in 1/256 pixel units, (row, col).
struct IPoint {
  std::int64_t r, c;
};

/// Even-odd point in polygon with integer arithmetic only.
inline bool inside_polygon(const std::vector<IPoint>& poly, std::int64_t pr, std::int64_t pc) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.r > pr) != (b.r > pr)) {
      // pc < a.c + (b.c - a.c) * (pr - a.r) / (b.r - a.r)
      const std::int64_t dr = b.r - a.r;
      const std::int64_t lhs = (pc - a.c) * dr;
      const std::int64_t rhs = (b.c - a.c) * (pr - a.r);
      if (dr > 0 ? lhs < rhs : lhs > rhs) in = !in;
    }
  }
  return in;
}

/// Local vertex (dr, dc) in subpixels rotated by 6*rot degrees about (cr, cc).
inline IPoint rotate_about(std::int64_t cr, std::int64_t cc, std::int64_t dr, std::int64_t dc, int rot) {
  const std::int64_t co = cos6(rot), si = sin6(rot);
  return {cr + (dr * co - dc * si) / 4096, cc + (dr * si + dc * co) / 4096};
}

inline std::vector<IPoint> shape_polygon(int shape, std::int64_t cr, std::int64_t cc, std::int64_t radius, int rot) {
  std::vector<IPoint> poly;
  auto radial = [&](int k, std::int64_t rad) {
    // angle 6k degrees, radius rad, then rotated
    return rotate_about(cr, cc, -rad * cos6(k) / 4096, rad * sin6(k) / 4096, rot);
  };
  switch (shape) {
    case 1:  // triangle
      for (int k = 0; k < 60; k += 20) poly.push_back(radial(k, radius));
      break;
    case 2: {  // square
      const std::int64_t h = radius * 7 / 10;
      for (auto [dr, dc] : std::array<std::pair<std::int64_t, std::int64_t>, 4>{{{-h, -h}, {-h, h}, {h, h}, {h, -h}}})
        poly.push_back(rotate_about(cr, cc, dr, dc, rot));
      break;
    }
    case 3:  // five-pointed star
      for (int i = 0; i < 10; ++i) poly.push_back(radial(i * 6, i % 2 == 0 ? radius : radius * 45 / 100));
      break;
    case 4: {  // cross
      const std::int64_t t = radius / 3, R = radius;
      const std::array<std::pair<std::int64_t, std::int64_t>, 12> pts{
          {{-R, -t}, {-R, t}, {-t, t}, {-t, R}, {t, R}, {t, t}, {R, t}, {R, -t}, {t, -t}, {t, -R}, {-t, -R}, {-t, -t}}};
      for (auto [dr, dc] : pts) poly.push_back(rotate_about(cr, cc, dr, dc, rot));
      break;
    }
    default:
      break;
  }
  return poly;
}

/// Integer raster of a shape centred at pixel (cy, cx) with radius in pixels.
inline BinaryMap raster_shape(int shape, int size, int cy, int cx, int radius, int rot) {
  BinaryMap mask(size, size);
  if (shape == 0) {
    const long lim = static_cast<long>(radius) * radius + radius;
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const long dr = r - cy, dc = c - cx;
        mask(r, c) = dr * dr + dc * dc <= lim ? 1 : 0;
      }
    return mask;
  }
  const auto poly = shape_polygon(shape, std::int64_t{cy} * 256, std::int64_t{cx} * 256, std::int64_t{radius} * 256, rot);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) mask(r, c) = inside_polygon(poly, std::int64_t{r} * 256, std::int64_t{c} * 256) ? 1 : 0;
  return mask;
}

using Rgb = std::array<int, 3>;

inline Rgb texture_color(int texture, int r, int c, const Rgb& a, const Rgb& b) {
  bool second = false;
  switch (texture) {
    case 1: second = ((r + c) / 3) % 2 == 1; break;             // diagonal stripes
    case 2: second = (r % 4 < 2) && (c % 4 < 2); break;         // dots
    case 3: second = ((r / 4) + (c / 4)) % 2 == 1; break;       // checker
    default: break;
  }
  return second ? b : a;
}

inline int clamp_byte(int v) { return std::clamp(v, 0, 255); }

}  // namespace detail

struct ShapeClass {
  int shape = 0;
  int texture = 0;
  std::string name() const { return std::string(kShapeNames[shape]) + "-" + kTextureNames[texture]; }
};

/// Class i -> (shape i mod 5, texture (i + i/5) mod 4); distinct for i < 20.
inline ShapeClass shape_class(int id) { return {id % 5, (id + id / 5) % 4}; }

/// One generated image with its exact foreground mask, stored as 8-bit RGB.
struct GeneratedImage {
  io::RawImage rgb;
  BinaryMap mask;
};

inline GeneratedImage generate_shape_image(int class_id, int size, Rng& rng) {
  using detail::Rgb;
  const auto cls = shape_class(class_id);
  GeneratedImage out;
  out.rgb = {size, size, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * 3)};
  std::vector<Rgb> px(static_cast<std::size_t>(size) * size);

  // low-contrast gradient background
  const int base = static_cast<int>(rng.uniform_int(70, 180));
  const Rgb tint{static_cast<int>(rng.uniform_int(-20, 20)), static_cast<int>(rng.uniform_int(-20, 20)),
                 static_cast<int>(rng.uniform_int(-20, 20))};
  const int gy = static_cast<int>(rng.uniform_int(-30, 30)), gx = static_cast<int>(rng.uniform_int(-30, 30));
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      for (int ch = 0; ch < 3; ++ch)
        px[r * size + c][ch] = detail::clamp_byte(base + tint[ch] + gy * (2 * r - size) / (2 * size) + gx * (2 * c - size) / (2 * size));

  // clutter blobs reuse the foreground textures at low contrast
  const int blobs = static_cast<int>(rng.uniform_int(2, 4));
  for (int b = 0; b < blobs; ++b) {
    const int rad = static_cast<int>(rng.uniform_int(std::max(2, size / 10), std::max(3, size / 6)));
    const int cy = static_cast<int>(rng.uniform_int(0, size - 1)), cx = static_cast<int>(rng.uniform_int(0, size - 1));
    const int tex = static_cast<int>(rng.uniform_int(0, 3));
    const int shift = static_cast<int>(rng.uniform_int(-45, 45));
    const Rgb a{detail::clamp_byte(base + shift), detail::clamp_byte(base + shift / 2), detail::clamp_byte(base - shift / 2)};
    const Rgb c2{detail::clamp_byte(base - shift), detail::clamp_byte(base), detail::clamp_byte(base + shift / 2)};
    const auto blob = detail::raster_shape(0, size, cy, cx, rad, 0);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        if (blob(r, c)) px[r * size + c] = detail::texture_color(tex, r, c, a, c2);
  }

  // foreground object at a random pose, fully inside the frame
  const int radius = static_cast<int>(rng.uniform_int(std::max(4, size / 5), std::max(5, size / 3)));
  const int cy = static_cast<int>(rng.uniform_int(radius, size - 1 - radius));
  const int cx = static_cast<int>(rng.uniform_int(radius, size - 1 - radius));
  const int rot = static_cast<int>(rng.uniform_int(0, 59));
  Rgb fa, fb;
  for (int ch = 0; ch < 3; ++ch) {
    fa[ch] = static_cast<int>(rng.uniform_int(0, 255));
    fb[ch] = 255 - fa[ch];
  }
  out.mask = detail::raster_shape(cls.shape, size, cy, cx, radius, rot);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (out.mask(r, c)) px[r * size + c] = detail::texture_color(cls.texture, r, c, fa, fb);

  for (std::size_t i = 0; i < px.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) out.rgb.pixels[i * 3 + ch] = static_cast<std::uint8_t>(px[i][ch]);
  return out;
}

inline std::string image_name(std::size_t index) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << index << ".png";
  return os.str();
}

/// Writes images/, masks/, teacher sidecars, manifest.csv and meta.json under `out`.
/// Image i has class i mod classes; the first 80% of each class's images are train.
inline void generate_shapes_dataset(const std::filesystem::path& out, int classes, int per_class, int size, std::uint64_t seed) {
  require(classes >= 4, "generate_shapes_dataset: classes must be >= 4");
  require(classes <= static_cast<int>(kShapeNames.size() * kTextureNames.size()),
          "generate_shapes_dataset: at most 20 distinct (shape, texture) classes");
  require(per_class >= 20, "generate_shapes_dataset: per_class must be >= 20");
  require(size >= 32, "generate_shapes_dataset: size must be >= 32");
  namespace fs = std::filesystem;
  fs::create_directories(out / "images");
  fs::create_directories(out / "masks");
  const int train_per_class = per_class * 4 / 5;

  std::ofstream manifest(out / "manifest.csv", std::ios::binary);
  manifest << "path,label,split\n";
  const std::size_t total = static_cast<std::size_t>(classes) * per_class;
  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i % classes);
    const int within = static_cast<int>(i / classes);
    Rng rng = Rng::derive(seed, {0x5A4E, i});
    const auto img = generate_shape_image(label, size, rng);
    const auto name = image_name(i);
    io::write_png(out / "images" / name, img.rgb);
    io::write_mask(out / "masks" / name, img.mask);
    write_sidecars(out / "images" / name, synthetic_teacher(img.mask));
    manifest << "images/" << name << ',' << label << ',' << (within < train_per_class ? "train" : "test") << '\n';
  }

  nlohmann::json meta;
  meta["generator"] = "ross-shapes";
  meta["version"] = kGeneratorVersion;
  meta["size"] = size;
  meta["seed"] = seed;
  meta["per_class"] = per_class;
  meta["classes"] = nlohmann::json::array();
  for (int c = 0; c < classes; ++c) {
    const auto sc = shape_class(c);
    meta["classes"].push_back({{"id", c}, {"name", sc.name()}, {"shape", kShapeNames[sc.shape]}, {"texture", kTextureNames[sc.texture]}});
  }
  std::ofstream(out / "meta.json", std::ios::binary) << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// manifest loading

inline DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& root) {
  DatasetManifest m;
  m.root = root;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError("manifest: empty file (header 'path,label,split' required)");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,split") throw ParseError("manifest line 1: expected header 'path,label,split'");
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    if (fields.size() != 3 || fields[0].empty()) throw ParseError(where + "expected 'path,label,split'");
    ManifestEntry e;
    e.path = fields[0];
    try {
      std::size_t used = 0;
      e.label = std::stoi(fields[1], &used);
      if (used != fields[1].size() || e.label < 0) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      throw ParseError(where + "label must be a non-negative integer, got '" + fields[1] + "'");
    }
    if (fields[2] == "train") e.split = Split::Train;
    else if (fields[2] == "test") e.split = Split::Test;
    else throw ParseError(where + "split must be 'train' or 'test', got '" + fields[2] + "'");
    if (!seen.insert(e.path).second) throw ParseError(where + "duplicate path '" + e.path + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

/// Parses `relative/path,label,split` lines and checks every file exists.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open manifest " + path.string());
  auto m = parse_manifest(in, path.parent_path());
  int max_label = -1;
  for (const auto& e : m.entries) {
    if (!std::filesystem::exists(m.root / e.path)) throw NotFound("manifest references missing file " + (m.root / e.path).string());
    max_label = std::max(max_label, e.label);
  }
  const auto meta_path = m.root / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    const auto meta = nlohmann::json::parse(std::ifstream(meta_path));
    m.image_size = meta.value("size", 0);
    for (const auto& c : meta.value("classes", nlohmann::json::array())) m.class_names.push_back(c.value("name", ""));
  }
  for (int c = static_cast<int>(m.class_names.size()); c <= max_label; ++c) m.class_names.push_back("class_" + std::to_string(c));
  std::vector<std::array<int, 2>> counts(max_label + 1, {0, 0});
  for (const auto& e : m.entries) ++counts[e.label][e.split == Split::Train ? 0 : 1];
  for (int c = 0; c <= max_label; ++c)
    if (counts[c][0] == 0 || counts[c][1] == 0)
      throw InvalidArgument("manifest: class " + std::to_string(c) + " needs at least one train and one test record");
  return m;
}

/// Decodes every record, checking the declared image size. Masks are picked up
/// from masks/<file name> when present.
inline std::vector<SampleRecord> load_records(const DatasetManifest& m) {
  std::vector<SampleRecord> out;
  out.reserve(m.entries.size());
  int size = m.image_size;
  for (const auto& e : m.entries) {
    SampleRecord r;
    r.path = e.path;
    r.label = e.label;
    r.split = e.split;
    r.image = io::read_rgb(m.root / e.path);
    if (size == 0) size = r.image.height;
    if (r.image.height != size || r.image.width != size)
      throw InvalidArgument("image " + e.path + " is " + std::to_string(r.image.height) + "x" + std::to_string(r.image.width) +
                            ", expected " + std::to_string(size) + "x" + std::to_string(size));
    const auto mask_path = m.root / "masks" / std::filesystem::path(e.path).filename();
    if (std::filesystem::exists(mask_path)) r.mask = io::read_mask(mask_path);
    out.push_back(std::move(r));
  }
  return out;
}

/// Records the labels the engine actually read; used to audit the data-free contract.
struct AccessLog {
  std::vector<int> labels;
};

/// The training/test records of one task. The engine only ever sees these.
class TaskPartition {
 public:
  TaskPartition() = default;
  TaskPartition(std::vector<const SampleRecord*> records, std::set<int> classes, AccessLog* log = nullptr)
      : records_(std::move(records)), classes_(std::move(classes)), log_(log) {}

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const SampleRecord& at(std::size_t i) const {
    const auto* r = records_.at(i);
    if (log_) log_->labels.push_back(r->label);
    return *r;
  }
  const std::set<int>& classes() const noexcept { return classes_; }

 private:
  std::vector<const SampleRecord*> records_;
  std::set<int> classes_;
  AccessLog* log_ = nullptr;
};

inline TaskPartition make_partition(const std::vector<SampleRecord>& all, const std::set<int>& classes, Split split,
                                    AccessLog* log = nullptr) {
  std::vector<const SampleRecord*> picked;
  for (const auto& r : all)
    if (r.split == split && classes.count(r.label)) picked.push_back(&r);
  return TaskPartition(std::move(picked), classes, log);
}

}  // namespace ross
