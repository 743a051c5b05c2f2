#include "cmcforge/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmcforge/error.hpp"
#include "cmcforge/rng.hpp"

namespace cmcforge {

Primitive Primitive::box(int class_id, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  Primitive p;
  p.kind = PrimitiveKind::kBox;
  p.class_id = class_id;
  p.lo = lo.cwiseMin(hi);
  p.hi = lo.cwiseMax(hi);
  return p;
}

Primitive Primitive::plane(int class_id, const Eigen::Vector3d& normal, double offset, double half_extent) {
  Primitive p;
  p.kind = PrimitiveKind::kPlane;
  p.class_id = class_id;
  p.normal = normal.normalized();
  p.offset = offset;
  p.half_extent = half_extent;
  return p;
}

std::optional<double> Primitive::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                           double t_min) const {
  if (kind == PrimitiveKind::kPlane) {
    const double denom = normal.dot(dir);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double t = (offset - normal.dot(origin)) / denom;
    if (!(t > t_min)) return std::nullopt;
    if (std::isfinite(half_extent)) {
      const Eigen::Vector3d hit = origin + t * dir;
      if (std::abs(hit.x()) > half_extent || std::abs(hit.y()) > half_extent) return std::nullopt;
    }
    return t;
  }
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-300) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (lo[a] - origin[a]) / dir[a];
    double t1 = (hi[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit) return std::nullopt;
  if (t_enter > t_min) return t_enter;
  if (t_exit > t_min) return t_exit;
  return std::nullopt;
}

double Primitive::surface_distance(const Eigen::Vector3d& x) const {
  if (kind == PrimitiveKind::kPlane) {
    const double signed_dist = normal.dot(x) - offset;
    if (!std::isfinite(half_extent)) return std::abs(signed_dist);
    Eigen::Vector3d foot = x - signed_dist * normal;
    foot.x() = std::clamp(foot.x(), -half_extent, half_extent);
    foot.y() = std::clamp(foot.y(), -half_extent, half_extent);
    return (x - foot).norm();
  }
  const Eigen::Vector3d outside = (lo - x).cwiseMax(x - hi).cwiseMax(0.0);
  if (outside.maxCoeff() > 0.0) return outside.norm();
  return (x - lo).cwiseMin(hi - x).minCoeff();
}

bool Primitive::contains(const Eigen::Vector3d& x) const {
  if (kind == PrimitiveKind::kPlane) return false;
  return (x.array() > lo.array()).all() && (x.array() < hi.array()).all();
}

void SceneParams::validate() const {
  if (class_count < 2) throw ConfigError("scene: class_count must be >= 2");
  if (!(scene_scale > 0)) throw ConfigError("scene: scene_scale must be positive");
  if (extra_boxes < 0) throw ConfigError("scene: extra_boxes must be >= 0");
  const int boxes = (one_box_per_class ? class_count - (ground_plane ? 1 : 0) : 0) + extra_boxes;
  if (boxes + (ground_plane ? 1 : 0) < 1) throw ConfigError("scene: at least one primitive is required");
  if (!(placement_radius > 0 && placement_radius < 0.5))
    throw ConfigError("scene: placement_radius must lie in (0, 0.5)");
}

namespace {

struct BoxExtent {
  double width, depth, height;
};

// Size ranges per object archetype, in units of scene_scale / 10.
BoxExtent sample_extent(int archetype, Rng& rng) {
  auto uni = [&rng](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  BoxExtent e{};
  switch (archetype) {
    case 0:  // building
      e = {uni(1.2, 2.2), uni(1.2, 2.2), uni(2.0, 3.2)};
      break;
    case 1:  // car
      e = {uni(1.4, 2.0), uni(0.7, 0.95), uni(0.5, 0.8)};
      break;
    case 2: {  // pole
      const double w = uni(0.22, 0.32);
      e = {w, w, uni(2.2, 3.0)};
      break;
    }
    default:  // barrier
      e = {uni(0.8, 1.4), uni(0.3, 0.5), uni(0.7, 1.0)};
      break;
  }
  if (std::bernoulli_distribution(0.5)(rng)) std::swap(e.width, e.depth);
  return e;
}

}  // namespace

SyntheticScene generate_scene(const SceneParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng = make_rng(seed, {tag::kScene});
  SyntheticScene scene;
  scene.class_count = params.class_count;
  scene.scene_scale = params.scene_scale;
  scene.seed = seed;

  const double unit = params.scene_scale / 10.0;
  const int first_box_class = params.ground_plane ? 1 : 0;
  if (params.ground_plane)
    scene.primitives.push_back(Primitive::plane(0, Eigen::Vector3d::UnitZ(), 0.0, params.scene_scale));

  std::vector<int> box_classes;
  if (params.one_box_per_class)
    for (int c = first_box_class; c < params.class_count; ++c) box_classes.push_back(c);
  std::uniform_int_distribution<int> pick_class(first_box_class, params.class_count - 1);
  for (int i = 0; i < params.extra_boxes; ++i) box_classes.push_back(pick_class(rng));

  const double radius = params.placement_radius * params.scene_scale;
  const double margin = 0.3 * unit;
  std::uniform_real_distribution<double> unit_interval(0.0, 1.0);
  for (std::size_t i = 0; i < box_classes.size(); ++i) {
    const int cls = box_classes[i];
    const int archetype = ((cls - 1) % 4 + 4) % 4;
    const bool required = params.one_box_per_class && static_cast<int>(i) < params.class_count - first_box_class;
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const BoxExtent e = sample_extent(archetype, rng);
      const double r = radius * std::sqrt(unit_interval(rng));
      const double phi = 2.0 * std::numbers::pi * unit_interval(rng);
      const Eigen::Vector3d center(r * std::cos(phi), r * std::sin(phi), 0.0);
      const Eigen::Vector3d half(0.5 * e.width * unit, 0.5 * e.depth * unit, 0.0);
      const Eigen::Vector3d lo = center - half;
      const Eigen::Vector3d hi = center + half + Eigen::Vector3d(0, 0, e.height * unit);
      const bool overlaps = std::any_of(scene.primitives.begin(), scene.primitives.end(), [&](const Primitive& p) {
        if (p.kind != PrimitiveKind::kBox) return false;
        return lo.x() < p.hi.x() + margin && hi.x() > p.lo.x() - margin && lo.y() < p.hi.y() + margin &&
               hi.y() > p.lo.y() - margin;
      });
      if (overlaps) continue;
      scene.primitives.push_back(Primitive::box(cls, lo, hi));
      placed = true;
    }
    if (!placed && required) throw ConfigError("scene: could not place a box for every class");
  }
  return scene;
}

std::vector<Pose> orbit_poses(const SyntheticScene& scene, int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("orbit_poses: count must be >= 1");
  Rng rng = make_rng(seed, {tag::kCameras});
  auto uni = [&rng](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const double unit = scene.scene_scale / 10.0;
  const double ring = 0.62 * scene.scene_scale;
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(count));
  const double phase = uni(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < count; ++i) {
    const double phi = phase + 2.0 * std::numbers::pi * i / count + uni(-0.15, 0.15);
    const Eigen::Vector3d eye(ring * std::cos(phi), ring * std::sin(phi), uni(1.5, 2.5) * unit);
    const double tr = 0.1 * scene.scene_scale * std::sqrt(uni(0.0, 1.0));
    const double tphi = uni(0.0, 2.0 * std::numbers::pi);
    const Eigen::Vector3d target(tr * std::cos(tphi), tr * std::sin(tphi), 0.4 * unit);
    poses.push_back(Pose::look_at(eye, target));
  }
  return poses;
}

void Appearance::validate() const {
  if (feature_dim < 3) throw ConfigError("appearance: feature_dim must be >= 3");
  if (!(noise_sigma >= 0)) throw ConfigError("appearance: noise_sigma must be >= 0");
  if (!(confusion >= 0 && confusion <= 1)) throw ConfigError("appearance: confusion must lie in [0, 1]");
  if (!(noise_correlation >= 0 && noise_correlation <= 1))
    throw ConfigError("appearance: noise_correlation must lie in [0, 1]");
  if (!(noise_length > 0)) throw ConfigError("appearance: noise_length must be positive");
  if (!(signal_blur >= 0)) throw ConfigError("appearance: signal_blur must be >= 0");
  if (!(instance_sigma >= 0)) throw ConfigError("appearance: instance_sigma must be >= 0");
}

Eigen::MatrixXd Appearance::class_means(int class_count) const {
  const int signal_dim = feature_dim - 2;
  Rng rng = make_rng(palette_seed, {tag::kPalette});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd means(class_count, signal_dim);
  for (int c = 0; c < class_count; ++c) {
    for (int j = 0; j < signal_dim; ++j) means(c, j) = normal(rng);
    means.row(c) *= separation / means.row(c).norm();
  }
  for (const auto& [a, b] : confusable_pairs) {
    if (a < 0 || b < 0 || a >= class_count || b >= class_count) continue;
    means.row(b) = (1.0 - confusion) * means.row(b) + confusion * means.row(a);
  }
  return means;
}

namespace {

// Separable Gaussian blur of an (H*W) x C pixel-major field. Taps falling
// outside the image are dropped; each output is divided by `norm(row_sum,
// col_sum)` of the surviving weights.
template <typename Norm>
Eigen::MatrixXd blur_field(const Eigen::MatrixXd& field, int width, int height, double sigma, Norm norm) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Eigen::VectorXd kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
  auto sums = [&](int extent, bool squared) {
    Eigen::VectorXd out(extent);
    for (int pos = 0; pos < extent; ++pos) {
      double e = 0.0;
      for (int i = -radius; i <= radius; ++i)
        if (pos + i >= 0 && pos + i < extent) e += squared ? kernel[i + radius] * kernel[i + radius] : kernel[i + radius];
      out[pos] = e;
    }
    return out;
  };
  const Eigen::VectorXd row_w = sums(width, false), row_e = sums(width, true);
  const Eigen::VectorXd col_w = sums(height, false), col_e = sums(height, true);

  const auto channels = field.cols();
  Eigen::MatrixXd pass = Eigen::MatrixXd::Zero(field.rows(), channels);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      for (int i = -radius; i <= radius; ++i)
        if (c + i >= 0 && c + i < width) pass.row(r * width + c) += kernel[i + radius] * field.row(r * width + c + i);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(field.rows(), channels);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      auto dst = out.row(r * width + c);
      for (int i = -radius; i <= radius; ++i)
        if (r + i >= 0 && r + i < height) dst += kernel[i + radius] * pass.row((r + i) * width + c);
      dst /= norm(row_w[c], col_w[r], row_e[c], col_e[r]);
    }
  return out;
}

// Unit-variance smooth noise: blurred white noise, renormalized per pixel so
// borders keep unit variance.
Eigen::MatrixXd smooth_noise(int width, int height, int channels, double length, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd white(width * height, channels);
  for (int ch = 0; ch < channels; ++ch)
    for (int p = 0; p < width * height; ++p) white(p, ch) = normal(rng);
  return blur_field(white, width, height, length,
                    [](double, double, double re, double ce) { return std::sqrt(re * ce); });
}

}  // namespace

std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose, double u,
                               double v) {
  const Eigen::Vector3d origin = pose.center();
  // Scaled so the ray parameter equals camera-space depth.
  const Eigen::Vector3d dir = pose.rotation.transpose() * pixel_ray(u, v, k);
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    const auto t = p.intersect(origin, dir);
    if (t && (!best || *t < best->depth)) best = RayHit{*t, p.class_id, static_cast<int>(i)};
  }
  return best;
}

CameraView render_view(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose,
                       const Appearance& appearance, int view_id, std::uint64_t seed) {
  k.validate();
  appearance.validate();
  const int signal_dim = appearance.feature_dim - 2;
  const Eigen::MatrixXd means = appearance.class_means(scene.class_count);

  CameraView view;
  view.view_id = view_id;
  view.intrinsics = k;
  view.pose = pose;
  view.class_count = scene.class_count;
  const int n = k.width * k.height;
  view.features.resize(n, appearance.feature_dim);
  view.gt_labels.resize(n);
  view.gt_depth.resize(n);

  Rng rng = make_rng(seed, {tag::kViewNoise, static_cast<std::uint64_t>(view_id)});
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = appearance.noise_correlation;
  const double white_sigma = appearance.noise_sigma * std::sqrt(1.0 - rho);
  Eigen::MatrixXd smooth;
  if (rho > 0) {
    Rng field_rng = make_rng(seed, {tag::kViewNoise, static_cast<std::uint64_t>(view_id), 1});
    smooth = appearance.noise_sigma * std::sqrt(rho) *
             smooth_noise(k.width, k.height, signal_dim, appearance.noise_length, field_rng);
  }
  Eigen::MatrixXd offsets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(scene.primitives.size()), signal_dim);
  if (appearance.instance_sigma > 0) {
    Rng offset_rng = make_rng(seed, {tag::kViewNoise, static_cast<std::uint64_t>(view_id), 2});
    for (Eigen::Index i = 0; i < offsets.size(); ++i) offsets(i) = appearance.instance_sigma * normal(offset_rng);
  }
  Eigen::MatrixXd signal(n, signal_dim);
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const int p = row * k.width + col;
      const auto hit = cast_ray(scene, k, pose, col + 0.5, row + 0.5);
      if (hit) {
        view.gt_labels[p] = hit->class_id;
        view.gt_depth[p] = hit->depth;
        const double atten =
            appearance.fog_distance > 0 ? std::exp(-hit->depth / appearance.fog_distance) : 1.0;
        signal.row(p) = atten * (means.row(hit->class_id) + offsets.row(hit->primitive));
      } else {
        view.gt_labels[p] = ignore_label(scene.class_count);
        view.gt_depth[p] = 0.0;
        signal.row(p).setZero();
      }
    }
  }
  // Optical blur mixes neighboring surfaces' signal before sensor noise.
  if (appearance.signal_blur > 0)
    signal = blur_field(signal, k.width, k.height, appearance.signal_blur,
                        [](double rw, double cw, double, double) { return rw * cw; });
  if (rho > 0) signal += smooth;
  for (int p = 0; p < n; ++p) {
    for (int j = 0; j < signal_dim; ++j) signal(p, j) += white_sigma * normal(rng);
    const double u = p % k.width + 0.5;
    const double v = p / k.width + 0.5;
    view.features.row(p).head(signal_dim) = signal.row(p);
    view.features(p, signal_dim) = appearance.cue_scale * (u / k.width - 0.5);
    view.features(p, signal_dim + 1) = appearance.cue_scale * (v / k.height - 0.5);
  }
  return view;
}

ScenePointCloud simulate_reconstruction(std::span<const CameraView> views, const ReconstructionParams& params,
                                        double scene_scale, std::uint64_t seed) {
  if (views.empty()) throw ConfigError("simulate_reconstruction: no views");
  if (!(params.noise_sigma >= 0)) throw ConfigError("simulate_reconstruction: noise_sigma must be >= 0");
  if (params.scan_stride < 1) throw ConfigError("simulate_reconstruction: scan_stride must be >= 1");
  constexpr double kTiny = 1e-300;
  const int stride = params.density == Density::kSingleScan ? params.scan_stride : 1;

  std::vector<Eigen::Vector3d> positions;
  std::vector<double> confidence;
  std::vector<PixelCoord> source;
  std::vector<std::pair<int, int>> feature_rows;  // (view slot, pixel)
  for (std::size_t slot = 0; slot < views.size(); ++slot) {
    const CameraView& view = views[slot];
    Rng rng = make_rng(seed, {tag::kRecon, static_cast<std::uint64_t>(view.view_id)});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int row = 0; row < view.height(); row += stride) {
      for (int col = 0; col < view.width(); col += stride) {
        const int p = row * view.width() + col;
        if (view.is_void(p)) continue;
        const double depth = view.gt_depth[p];
        const double eps = params.noise_sigma * depth * normal(rng);
        const double noisy = std::max(depth + eps, 1e-6 * depth);
        const PixelCoord px = pixel_center(p, view.width(), view.view_id);
        positions.push_back(unproject(px, noisy, view.pose, view.intrinsics));
        confidence.push_back(std::exp(-std::abs(eps) / (params.noise_sigma * depth + kTiny)));
        source.push_back(px);
        feature_rows.emplace_back(static_cast<int>(slot), p);
      }
    }
  }

  ScenePointCloud cloud;
  cloud.class_count = views.front().class_count;
  cloud.scene_scale = scene_scale;
  const auto n = static_cast<Eigen::Index>(positions.size());
  cloud.positions.resize(n, 3);
  cloud.rec_confidence.resize(n);
  cloud.features.resize(n, views.front().feature_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    cloud.positions.row(i) = positions[s].transpose();
    cloud.rec_confidence[i] = confidence[s];
    cloud.features.row(i) = views[static_cast<std::size_t>(feature_rows[s].first)].features.row(feature_rows[s].second);
  }
  cloud.source = std::move(source);
  cloud.sparse_labels = Eigen::VectorXi::Constant(n, ignore_label(cloud.class_count));
  return cloud;
}

Eigen::VectorXi nearest_surface_labels(const ScenePointCloud& cloud, const SyntheticScene& scene) {
  Eigen::VectorXi labels(cloud.size());
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d x = cloud.positions.row(i).transpose();
    double best = std::numeric_limits<double>::infinity();
    int label = ignore_label(scene.class_count);
    for (const Primitive& p : scene.primitives) {
      const double d = p.surface_distance(x);
      if (d < best) {
        best = d;
        label = p.class_id;
      }
    }
    labels[i] = label;
  }
  return labels;
}

}  // namespace cmcforge
