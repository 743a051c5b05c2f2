#include "cmcforge/scene.hpp"

#include <cmath>

namespace cmcforge {

std::vector<Eigen::Index> ScenePointCloud::points_from_view(int view_id) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < size(); ++i)
    if (source[static_cast<std::size_t>(i)].view_id == view_id) out.push_back(i);
  return out;
}

int ScenePointCloud::source_pixel_index(Eigen::Index point, int width) const {
  const PixelCoord& px = source[static_cast<std::size_t>(point)];
  return static_cast<int>(std::floor(px.v)) * width + static_cast<int>(std::floor(px.u));
}

bool visible_in_view(Eigen::Index point_index, const ScenePointCloud& cloud, const CameraView& view,
                     double z_tolerance) {
  const Eigen::Vector3d world = cloud.positions.row(point_index).transpose();
  const auto proj = project<double>(world, view.pose, view.intrinsics);
  if (!proj) return false;
  const int pixel = pixel_index(proj->u, proj->v, view.intrinsics);
  if (view.is_void(pixel)) return true;  // nothing rendered in front of it
  return proj->depth <= view.gt_depth[pixel] + z_tolerance;
}

}  // namespace cmcforge
