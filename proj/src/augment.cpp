#include "cmcforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "cmcforge/error.hpp"
#include "cmcforge/rng.hpp"

namespace cmcforge {

std::string_view to_string(AugmentTier tier) {
  switch (tier) {
    case AugmentTier::kNone:
      return "none";
    case AugmentTier::kWeak:
      return "weak";
    case AugmentTier::kStrong:
      return "strong";
  }
  return "none";
}

AugmentTier augment_tier_from_string(std::string_view name) {
  if (name == "none") return AugmentTier::kNone;
  if (name == "weak") return AugmentTier::kWeak;
  if (name == "strong") return AugmentTier::kStrong;
  throw ConfigError("unknown augmentation tier: " + std::string(name));
}

AugmentationSpec AugmentationSpec::identity() { return {}; }

AugmentationSpec AugmentationSpec::weak() {
  AugmentationSpec s;
  s.tier = AugmentTier::kWeak;
  s.image.flip_prob = 0.5;
  s.image.crop_fraction = 0.9;
  s.points.rotation_range = 3.141592653589793;
  s.points.rotation_prob = 0.5;
  s.points.scale_min = 0.9;
  s.points.scale_max = 1.1;
  s.points.flip_prob = 0.5;
  return s;
}

AugmentationSpec AugmentationSpec::strong() {
  AugmentationSpec s = weak();
  s.tier = AugmentTier::kStrong;
  s.image.crop_fraction = 0.8;
  s.image.cutout_squares = 2;
  s.image.cutout_fraction = 0.15;
  s.image.cutout_prob = 0.75;
  s.image.feature_noise = 0.3;
  s.points.jitter_sigma = 0.005;
  s.points.jitter_clip = 0.02;
  s.points.clip_radius = 1.0;
  return s;
}

AugmentationSpec AugmentationSpec::for_tier(AugmentTier tier) {
  switch (tier) {
    case AugmentTier::kWeak:
      return weak();
    case AugmentTier::kStrong:
      return strong();
    case AugmentTier::kNone:
      break;
  }
  return identity();
}

bool AugmentationSpec::dominates(const AugmentationSpec& o) const {
  const ImageAugmentation& a = image;
  const ImageAugmentation& b = o.image;
  const PointAugmentation& p = points;
  const PointAugmentation& q = o.points;
  return a.flip_prob >= b.flip_prob && a.crop_fraction <= b.crop_fraction && a.cutout_squares >= b.cutout_squares &&
         a.cutout_fraction >= b.cutout_fraction && a.cutout_prob >= b.cutout_prob &&
         a.feature_noise >= b.feature_noise && p.rotation_range >= q.rotation_range &&
         p.rotation_prob >= q.rotation_prob && p.scale_min <= q.scale_min && p.scale_max >= q.scale_max &&
         p.flip_prob >= q.flip_prob && p.jitter_sigma >= q.jitter_sigma && p.jitter_clip >= q.jitter_clip &&
         p.clip_radius <= q.clip_radius;
}

Eigen::MatrixXd AugmentedBatch::to_original(const Eigen::Ref<const Eigen::MatrixXd>& augmented_values) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(inverse.size()), augmented_values.cols());
  for (std::size_t i = 0; i < inverse.size(); ++i)
    if (inverse[i] != kExcluded) out.row(static_cast<Eigen::Index>(i)) = augmented_values.row(inverse[i]);
  return out;
}

Eigen::MatrixXd AugmentedBatch::to_augmented(const Eigen::Ref<const Eigen::MatrixXd>& original_values) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(source.size()), original_values.cols());
  for (std::size_t r = 0; r < source.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = original_values.row(source[r]);
  return out;
}

AugmentedBatch augment_image(const CameraView& view, int signal_dim, const ImageAugmentation& spec,
                             std::uint64_t seed) {
  if (!(spec.crop_fraction > 0 && spec.crop_fraction <= 1)) throw ConfigError("augment: crop_fraction must lie in (0, 1]");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int width = view.width();
  const int height = view.height();
  const int crop_w = std::clamp(static_cast<int>(std::lround(spec.crop_fraction * width)), 1, width);
  const int crop_h = std::clamp(static_cast<int>(std::lround(spec.crop_fraction * height)), 1, height);
  const int col0 = std::uniform_int_distribution<int>(0, width - crop_w)(rng);
  const int row0 = std::uniform_int_distribution<int>(0, height - crop_h)(rng);
  const bool flip = unit(rng) < spec.flip_prob;

  AugmentedBatch out;
  out.rows.resize(Eigen::Index(crop_w) * crop_h, view.feature_dim());
  out.source.resize(static_cast<std::size_t>(crop_w * crop_h));
  out.inverse.assign(static_cast<std::size_t>(view.pixel_count()), kExcluded);
  for (int r = 0; r < crop_h; ++r) {
    for (int c = 0; c < crop_w; ++c) {
      const int a = r * crop_w + c;
      const int orig = (row0 + r) * width + col0 + (flip ? crop_w - 1 - c : c);
      out.rows.row(a) = view.features.row(orig);
      out.source[static_cast<std::size_t>(a)] = orig;
      out.inverse[static_cast<std::size_t>(orig)] = a;
    }
  }

  const int side = std::clamp(static_cast<int>(std::lround(spec.cutout_fraction * width)), 1, std::min(crop_w, crop_h));
  for (int s = 0; s < spec.cutout_squares; ++s) {
    if (!(unit(rng) < spec.cutout_prob)) continue;
    const int c0 = std::uniform_int_distribution<int>(0, crop_w - side)(rng);
    const int r0 = std::uniform_int_distribution<int>(0, crop_h - side)(rng);
    for (int r = r0; r < r0 + side; ++r) {
      for (int c = c0; c < c0 + side; ++c) {
        const int a = r * crop_w + c;
        out.rows.row(a).setZero();
        out.inverse[static_cast<std::size_t>(out.source[static_cast<std::size_t>(a)])] = kExcluded;
      }
    }
  }

  if (spec.feature_noise > 0) {
    std::uniform_real_distribution<double> noise(-spec.feature_noise, spec.feature_noise);
    const int dims = std::min(signal_dim, view.feature_dim());
    for (Eigen::Index a = 0; a < out.rows.rows(); ++a)
      for (int j = 0; j < dims; ++j) out.rows(a, j) += noise(rng);
  }
  return out;
}

AugmentedBatch augment_points(const ScenePointCloud& cloud, const ViewSample& sample, const PointAugmentation& spec,
                              std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double angle = 0.0;
  if (spec.rotation_range > 0 && unit(rng) < spec.rotation_prob)
    angle = std::uniform_real_distribution<double>(-spec.rotation_range, spec.rotation_range)(rng);
  const double scale =
      spec.scale_max > spec.scale_min ? std::uniform_real_distribution<double>(spec.scale_min, spec.scale_max)(rng)
                                      : spec.scale_min;
  const bool flip = spec.flip_prob > 0 && unit(rng) < spec.flip_prob;
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  std::normal_distribution<double> jitter(0.0, spec.jitter_sigma > 0 ? spec.jitter_sigma : 1.0);
  const double clip_r = spec.clip_radius * cloud.scene_scale;

  const auto n = static_cast<int>(sample.size());
  const int f = cloud.feature_dim();
  AugmentedBatch out;
  out.rows.resize(n, 3 + f);
  out.inverse.assign(static_cast<std::size_t>(n), kExcluded);
  out.source.reserve(static_cast<std::size_t>(n));
  int kept = 0;
  for (int r = 0; r < n; ++r) {
    const Eigen::Index i = sample.point_indices[static_cast<std::size_t>(r)];
    Eigen::Vector3d x = cloud.positions.row(i).transpose();
    x = Eigen::Vector3d(cs * x.x() - sn * x.y(), sn * x.x() + cs * x.y(), x.z()) * scale;
    if (flip) x.x() = -x.x();
    if (spec.jitter_sigma > 0)
      for (int a = 0; a < 3; ++a) x[a] += std::clamp(jitter(rng), -spec.jitter_clip, spec.jitter_clip);
    if (std::hypot(x.x(), x.y()) > clip_r) continue;
    out.rows.row(kept).head<3>() = x / cloud.scene_scale;
    out.rows.row(kept).tail(f) = cloud.features.row(i);
    out.source.push_back(r);
    out.inverse[static_cast<std::size_t>(r)] = kept;
    ++kept;
  }
  out.rows.conservativeResize(kept, Eigen::NoChange);
  return out;
}

}  // namespace cmcforge
