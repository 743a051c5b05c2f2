#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "cmcforge/scene.hpp"

namespace cmcforge {

enum class LabelKind { kPoints, kScribbles, kCoarse };

std::string_view to_string(LabelKind kind);
LabelKind label_kind_from_string(std::string_view name);

// Sparse annotation raster. Unlabeled pixels hold ignore_label(class_count).
struct SparseLabelMap {
  int view_id{0};
  int width{0};
  int height{0};
  int class_count{0};
  LabelKind kind{LabelKind::kPoints};
  Eigen::VectorXi labels;

  bool labeled(int pixel) const { return labels[pixel] < class_count; }
  Eigen::Index labeled_count() const { return (labels.array() < class_count).count(); }
  double coverage() const { return double(labeled_count()) / double(width * height); }
};

SparseLabelMap unlabeled_map(const CameraView& view, LabelKind kind);

// One uniformly chosen pixel per non-void class present in the view.
SparseLabelMap gen_point_labels(const CameraView& view, std::uint64_t seed);

struct ScribbleParams {
  double length_scale{1.0};  // stroke length as a fraction of region diameter
  int thickness{1};          // pixels
  int min_region_area{16};
};

// Random-walk strokes inside each sufficiently large connected class region.
// A fixed seed yields nested strokes: longer length_scale extends the same walk.
SparseLabelMap gen_scribble_labels(const CameraView& view, const ScribbleParams& params, std::uint64_t seed);

// Interior of each class region: pixels whose whole disk of the given
// radius lies inside the image and shares their class.
SparseLabelMap gen_coarse_labels(const CameraView& view, int erosion_radius);

// Copies the source pixel's annotation onto every point. `maps` is indexed by view id.
ScenePointCloud transfer_labels_to_3d(const ScenePointCloud& cloud, std::span<const SparseLabelMap> maps);

// 4-connected components of equal, non-void labels. Returns component id per
// pixel (-1 on void) and writes the number of components.
Eigen::VectorXi connected_regions(const Eigen::VectorXi& labels, int width, int height, int class_count,
                                  int& region_count);

}  // namespace cmcforge
