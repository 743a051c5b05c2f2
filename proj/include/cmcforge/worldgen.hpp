#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cmcforge/scene.hpp"

namespace cmcforge {

enum class PrimitiveKind { kPlane, kBox };

// Axis-aligned box [lo, hi], or the plane {x : normal . x = offset} clipped
// to |x|, |y| <= half_extent (infinite by default).
struct Primitive {
  PrimitiveKind kind{PrimitiveKind::kBox};
  int class_id{0};
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset{0};
  double half_extent{std::numeric_limits<double>::infinity()};

  static Primitive box(int class_id, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);
  static Primitive plane(int class_id, const Eigen::Vector3d& normal, double offset,
                         double half_extent = std::numeric_limits<double>::infinity());

  // Ray parameter t > t_min of the first hit of origin + t * dir, if any.
  std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                  double t_min = 1e-9) const;
  // Unsigned distance from x to the primitive's surface.
  double surface_distance(const Eigen::Vector3d& x) const;
  bool contains(const Eigen::Vector3d& x) const;
};

struct SyntheticScene {
  std::vector<Primitive> primitives;
  int class_count{0};
  double scene_scale{1};
  std::uint64_t seed{0};
};

struct SceneParams {
  int class_count{5};
  // Boxes added on top of the one-per-object-class guarantee.
  int extra_boxes{4};
  double scene_scale{10.0};
  bool ground_plane{true};
  bool one_box_per_class{true};
  // Boxes are placed within this fraction of scene_scale from the origin.
  double placement_radius{0.35};

  void validate() const;
};

// Class 0 is the ground plane; classes 1..C-1 are boxes whose size ranges
// depend on the class (tall buildings, low cars, thin poles, ...).
SyntheticScene generate_scene(const SceneParams& params, std::uint64_t seed);

// Ring of cameras around the scene center, all outside the placement disk.
std::vector<Pose> orbit_poses(const SyntheticScene& scene, int count, std::uint64_t seed);

// Per-pixel appearance model. Feature channels are
// [class signal (F-2 channels) | u cue | v cue].
struct Appearance {
  int feature_dim{8};
  double separation{1.0};
  double noise_sigma{0.6};
  // Share of the noise variance drawn from a spatially smooth field
  // (Gaussian-blurred white noise, blur sigma in pixels), redrawn per view.
  double noise_correlation{0.0};
  double noise_length{2.0};
  // Gaussian blur sigma (pixels) applied to the class signal; 0 disables.
  double signal_blur{0.0};
  // Per-object offset to the class mean, redrawn per view (lighting, viewpoint).
  double instance_sigma{0.0};
  // Signal attenuation exp(-depth / fog_distance); <= 0 disables.
  double fog_distance{0.0};
  double cue_scale{0.5};
  std::uint64_t palette_seed{20240611};
  // Pairs (a, b): the mean of b is pulled toward the mean of a.
  std::vector<std::pair<int, int>> confusable_pairs;
  double confusion{0.0};

  void validate() const;
  // class_count x (feature_dim - 2) matrix of class means.
  Eigen::MatrixXd class_means(int class_count) const;
};

// Nearest-hit ray cast over all primitives.
struct RayHit {
  double depth;
  int class_id;
  int primitive{-1};
};
std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose, double u,
                               double v);

CameraView render_view(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose,
                       const Appearance& appearance, int view_id, std::uint64_t seed);

enum class Density { kFull, kSingleScan };

struct ReconstructionParams {
  double noise_sigma{0.02};  // relative to depth
  Density density{Density::kFull};
  int scan_stride{4};        // every k-th row and column in single-scan mode
};

// One point per (subsampled) valid pixel, depth-perturbed along the pixel ray
// with multiplicative Gaussian noise, and a confidence that decays with the
// normalized perturbation.
ScenePointCloud simulate_reconstruction(std::span<const CameraView> views, const ReconstructionParams& params,
                                        double scene_scale, std::uint64_t seed);

// Class of the primitive surface closest to each point.
Eigen::VectorXi nearest_surface_labels(const ScenePointCloud& cloud, const SyntheticScene& scene);

}  // namespace cmcforge
