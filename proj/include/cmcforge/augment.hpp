#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cmcforge/sampling.hpp"
#include "cmcforge/scene.hpp"

namespace cmcforge {

enum class AugmentTier { kNone, kWeak, kStrong };

std::string_view to_string(AugmentTier tier);
AugmentTier augment_tier_from_string(std::string_view name);

struct ImageAugmentation {
  double flip_prob{0};
  // Side of the square-ish crop window as a fraction of each image side.
  double crop_fraction{1};
  int cutout_squares{0};
  double cutout_fraction{0};  // square side relative to the image width
  double cutout_prob{0};
  // Amplitude of bounded uniform noise added to the signal channels.
  double feature_noise{0};
};

struct PointAugmentation {
  double rotation_range{0};  // radians, about the vertical axis
  double rotation_prob{0};
  double scale_min{1};
  double scale_max{1};
  double flip_prob{0};
  double jitter_sigma{0};  // meters
  double jitter_clip{0};   // meters
  // Points farther than this (x, y) radius, in scene-scale units, are dropped.
  double clip_radius{std::numeric_limits<double>::infinity()};
};

struct AugmentationSpec {
  AugmentTier tier{AugmentTier::kNone};
  ImageAugmentation image;
  PointAugmentation points;

  static AugmentationSpec identity();
  static AugmentationSpec weak();
  static AugmentationSpec strong();
  static AugmentationSpec for_tier(AugmentTier tier);

  // True when every magnitude of *this is at least that of `other`.
  bool dominates(const AugmentationSpec& other) const;
};

inline constexpr int kExcluded = -1;

// Augmented rows plus index maps in both directions. `source[r]` is the
// original element of augmented row r; `inverse[i]` is the augmented row
// holding original element i, or kExcluded when it was cropped, cut out or
// clipped. Cut-out rows stay in `rows` (zeroed) but map to kExcluded.
struct AugmentedBatch {
  Eigen::MatrixXd rows;
  std::vector<int> source;
  std::vector<int> inverse;

  bool excluded(int original) const { return inverse[static_cast<std::size_t>(original)] == kExcluded; }
  // Scatters augmented-row values back to original order; excluded rows are zero.
  Eigen::MatrixXd to_original(const Eigen::Ref<const Eigen::MatrixXd>& augmented_values) const;
  // Gathers values given in original order into augmented-row order.
  Eigen::MatrixXd to_augmented(const Eigen::Ref<const Eigen::MatrixXd>& original_values) const;
};

// `signal_dim` leading channels receive feature noise; the rest (cues) do not.
AugmentedBatch augment_image(const CameraView& view, int signal_dim, const ImageAugmentation& spec,
                             std::uint64_t seed);

// Network inputs [position / scene_scale | features] for the augmented sample.
AugmentedBatch augment_points(const ScenePointCloud& cloud, const ViewSample& sample, const PointAugmentation& spec,
                              std::uint64_t seed);

}  // namespace cmcforge
