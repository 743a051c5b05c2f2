#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "cmcforge/scene.hpp"

namespace cmcforge {

// Per-image training subsample of a scene point cloud. Mask entries are
// true for points whose source pixel lies in the target view; those are the
// 2D-3D correspondences used by the cross-modal loss.
struct ViewSample {
  int target_view_id{0};
  std::vector<Eigen::Index> point_indices;
  std::vector<bool> correspondence_mask;
  int budget{0};
  double view_fraction{0};
  double context_radius{0};

  std::size_t size() const { return point_indices.size(); }
  std::size_t correspondence_count() const;
};

// round(budget * view_fraction) points from the target view, the remainder
// from other views' points within context_radius of the camera center.
// Shortfalls in either pool are refilled from the other one.
ViewSample view_aware_sample(const ScenePointCloud& cloud, int target_view_id, const Eigen::Vector3d& camera_center,
                             int budget, double view_fraction, double context_radius, std::uint64_t seed);

// Uniform global subsample; the mask is computed afterwards against the target view.
ViewSample random_sample(const ScenePointCloud& cloud, int target_view_id, int budget, std::uint64_t seed);

// Target-view points only, no context refill.
ViewSample correspondences_only_sample(const ScenePointCloud& cloud, int target_view_id, int budget,
                                       std::uint64_t seed);

}  // namespace cmcforge
