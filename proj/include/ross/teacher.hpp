#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>

#include "ross/grid.hpp"
#include "ross/image_io.hpp"
#include "ross/losses.hpp"
#include "ross/maps.hpp"

namespace ross {

enum class TeacherSource { Synthetic, Precomputed };

/// A(x): saliency plane plus its (pre-binarization) boundary plane.
struct TeacherMaps {
  SaliencyMap saliency;
  SaliencyMap boundary;
  TeacherSource source = TeacherSource::Synthetic;

  MapPair pair() const { return {saliency, boundary}; }
};

/// Ground-truth teacher for generated data: the object mask is the saliency
/// and every pixel with a nonzero Laplacian response is boundary.
inline TeacherMaps synthetic_teacher(const BinaryMap& mask) {
  require(!mask.empty(), "synthetic_teacher: missing mask");
  TeacherMaps t;
  t.saliency = to_real(mask);
  t.boundary = laplacian_boundary(t.saliency);
  for (auto& v : t.boundary.values()) v = v > 0.0 ? 1.0 : 0.0;
  t.source = TeacherSource::Synthetic;
  return t;
}

inline std::filesystem::path saliency_sidecar(const std::filesystem::path& image) {
  return image.parent_path() / (image.stem().string() + ".sal.png");
}
inline std::filesystem::path boundary_sidecar(const std::filesystem::path& image) {
  return image.parent_path() / (image.stem().string() + ".bnd.png");
}

/// Writes both sidecars next to an image.
inline void write_sidecars(const std::filesystem::path& image, const TeacherMaps& maps) {
  io::write_map(saliency_sidecar(image), maps.saliency);
  io::write_map(boundary_sidecar(image), maps.boundary);
}

/// Loads `<stem>.sal.png` and `<stem>.bnd.png` beside the image. A missing
/// boundary sidecar is synthesised from the saliency with a notice on `log`.
inline TeacherMaps load_precomputed(const std::filesystem::path& image_path, int expect_h = 0, int expect_w = 0,
                                    std::ostream* log = &std::cerr) {
  const auto sal_path = saliency_sidecar(image_path);
  if (!std::filesystem::exists(sal_path)) throw NotFound("missing saliency sidecar " + sal_path.string());
  TeacherMaps t;
  t.source = TeacherSource::Precomputed;
  t.saliency = io::read_map(sal_path);
  const auto bnd_path = boundary_sidecar(image_path);
  if (std::filesystem::exists(bnd_path)) {
    t.boundary = io::read_map(bnd_path);
  } else {
    if (log) *log << "notice: " << bnd_path.string() << " missing; boundary derived from saliency\n";
    t.boundary = laplacian_boundary(t.saliency);
  }
  require_same_shape(t.saliency, t.boundary, "load_precomputed " + image_path.string());
  if (expect_h > 0 && expect_w > 0 && (t.saliency.height() != expect_h || t.saliency.width() != expect_w))
    throw InvalidArgument("load_precomputed: sidecar size " + std::to_string(t.saliency.height()) + "x" +
                          std::to_string(t.saliency.width()) + " does not match image " + std::to_string(expect_h) + "x" +
                          std::to_string(expect_w) + " for " + image_path.string());
  return t;
}

/// Lazily loads precomputed maps, one disk read per key.
class TeacherCache {
 public:
  using Loader = std::function<TeacherMaps(const std::string&)>;
  explicit TeacherCache(Loader loader) : loader_(std::move(loader)) {}

  std::shared_ptr<const TeacherMaps> get(const std::string& key) {
    {
      std::shared_lock lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto maps = std::make_shared<const TeacherMaps>(loader_(key));
    std::unique_lock lock(mu_);
    auto [it, inserted] = cache_.emplace(key, std::move(maps));
    if (inserted) ++loads_;
    return it->second;
  }

  std::size_t loads() const {
    std::shared_lock lock(mu_);
    return loads_;
  }

 private:
  Loader loader_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const TeacherMaps>> cache_;
  std::size_t loads_ = 0;
};

/// Dilated, downsampled boundary targets for each backbone stage.
struct StageTargets {
  std::array<BinaryMap, 3> dilated;
};

/// Binarize the teacher boundary, dilate at full resolution with each
/// stage's radius, then block-max downsample to that stage's dims.
inline StageTargets stage_boundary_targets(const TeacherMaps& t, std::span<const double> fractions,
                                           std::span<const std::pair<int, int>> stage_dims, double threshold = 0.5) {
  require(fractions.size() == stage_dims.size() && fractions.size() == 3, "stage_boundary_targets: need three stages");
  const auto bin = binarize(t.boundary, threshold);
  StageTargets out;
  for (std::size_t k = 0; k < 3; ++k) {
    const int r = fraction_to_radius(fractions[k], bin.height(), bin.width());
    out.dilated[k] = downsample_binary(dilate(bin, r), stage_dims[k].first, stage_dims[k].second);
  }
  return out;
}

}  // namespace ross
