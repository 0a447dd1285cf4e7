#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "ircr/tensor.hpp"

// Synthetic nuclei scenes, dataset persistence and label-consistent augmentation.
namespace ircr::data {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneConfig {
  std::size_t size = 64;
  std::array<std::size_t, 2> nuclei_count_range{5, 10};
  Range radius_range{4.0, 8.0};        // semi-major axis, px
  double overlap_fraction = 0.2;       // max pairwise overlap / smaller area
  Range eccentricity_range{0.0, 0.75};
  Range intensity_range{0.45, 0.9};
  double noise_sigma = 0.06;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Scene {
  std::int64_t id = 0;
  std::uint64_t seed = 0;
  bool labeled = false;
  Tensor image;                // 1 x h x w
  InstanceLabelMap gt_labels;  // h x w
  Tensor gt_hv;                // 2 x h x w (horizontal, vertical)
  Tensor h_channel;            // h x w, noiseless intensity

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Throws std::runtime_error("scene too crowded") when fewer than the minimum
/// nuclei fit after 1000 rejected placements.
Scene generate_scene(const SceneConfig& cfg);

/// Scenes `first_id .. first_id + n - 1`, each with its own seed derived from `seed`.
std::vector<Scene> generate_dataset(const SceneConfig& base, std::size_t n, std::uint64_t seed,
                                    std::int64_t first_id = 0);

/// HV targets of a label map: per-instance centroid offsets, each axis divided
/// by the instance's largest absolute offset on that axis.
Tensor hv_from_labels(const InstanceLabelMap& labels);

/// Element of the dihedral group D4 acting on square grids: an optional
/// horizontal flip followed by `rotation` clockwise quarter turns.
class Geometry {
 public:
  Geometry() = default;
  Geometry(bool flip, int rotation);

  static Geometry from_code(int code);  // 0..7, 0 = identity
  int code() const noexcept { return (flip_ ? 4 : 0) + rotation_; }
  bool flip() const noexcept { return flip_; }
  int rotation() const noexcept { return rotation_; }
  bool is_identity() const noexcept { return code() == 0; }

  Geometry inverse() const;
  /// `then` applied after this.
  Geometry compose(const Geometry& then) const;
  /// Integer matrix acting on centered (row, col) offsets.
  std::array<int, 4> matrix() const noexcept;

  friend bool operator==(const Geometry&, const Geometry&) = default;

 private:
  bool flip_ = false;
  int rotation_ = 0;
};

/// Spatial transform of every channel of a plane or stack.
Tensor apply_geometry(const Tensor& t, const Geometry& g);
InstanceLabelMap apply_geometry(const InstanceLabelMap& labels, const Geometry& g);
/// Spatial transform of an HV stack that also rotates/flips the offset vectors.
/// Its adjoint is apply_geometry_hv(., g.inverse()).
Tensor apply_geometry_hv(const Tensor& hv, const Geometry& g);

struct Augmented {
  Scene scene;
  Geometry geometry;
};

/// Random flip / quarter-turn drawn from `seed`.
Augmented weak_augment(const Scene& scene, std::uint64_t seed);
/// weak_augment with the same geometric draw, then brightness/contrast jitter
/// and additive Gaussian noise on the image only.
Augmented strong_augment(const Scene& scene, std::uint64_t seed);

void save_dataset(const std::filesystem::path& dir, const std::vector<Scene>& scenes);
std::vector<Scene> load_dataset(const std::filesystem::path& dir);

/// Deterministic shuffled split; labeled count = max(1, round(ratio * n)).
/// Both halves keep input order and get their `labeled` flag set.
std::pair<std::vector<Scene>, std::vector<Scene>> split_labeled(const std::vector<Scene>& scenes, double ratio,
                                                                std::uint64_t seed);

}  // namespace ircr::data
