#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "cmcforge/geometry.hpp"

namespace cmcforge {

using RowMatrixX3d = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Label rasters and point labels reserve `class_count` as the single
// "ignore" id: void pixels in ground truth, UNLABELED in sparse annotations.
inline constexpr int ignore_label(int class_count) noexcept { return class_count; }

// One rendered camera view. Pixel-major storage: row p of `features`
// describes pixel p = row * width + col.
struct CameraView {
  int view_id{0};
  Intrinsics intrinsics;
  Pose pose;
  int class_count{0};
  Eigen::MatrixXd features;   // (H*W) x F
  Eigen::VectorXi gt_labels;  // H*W, ignore_label() on void
  Eigen::VectorXd gt_depth;   // H*W, camera-space z; 0 on void

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  int pixel_count() const { return intrinsics.width * intrinsics.height; }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  bool is_void(int pixel) const { return gt_labels[pixel] >= class_count; }
};

struct Correspondence {
  Eigen::Index point_index{0};
  PixelCoord pixel;
  double depth{0};
};

// Reconstructed points with per-point confidence and pixel provenance.
struct ScenePointCloud {
  int class_count{0};
  double scene_scale{1};
  RowMatrixX3d positions;        // N x 3, meters
  Eigen::VectorXd rec_confidence;  // N, in (0, 1]
  std::vector<PixelCoord> source;  // N, originating view and pixel
  Eigen::MatrixXd features;      // N x F, copied from the source pixel
  Eigen::VectorXi sparse_labels;   // N, ignore_label() when unlabeled

  Eigen::Index size() const { return positions.rows(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  // Indices of all points whose source pixel belongs to `view_id`.
  std::vector<Eigen::Index> points_from_view(int view_id) const;
  // Raster index of the point's source pixel in its source view.
  int source_pixel_index(Eigen::Index point, int width) const;
};

// True iff the point projects into the view in front of the camera and is
// not hidden behind the view's rendered surface by more than z_tolerance.
bool visible_in_view(Eigen::Index point_index, const ScenePointCloud& cloud, const CameraView& view,
                     double z_tolerance);

}  // namespace cmcforge
