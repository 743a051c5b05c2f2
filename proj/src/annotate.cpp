#include "cmcforge/annotate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cmcforge/error.hpp"
#include "cmcforge/rng.hpp"

namespace cmcforge {

std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::kPoints:
      return "points";
    case LabelKind::kScribbles:
      return "scribbles";
    case LabelKind::kCoarse:
      return "coarse";
  }
  return "points";
}

LabelKind label_kind_from_string(std::string_view name) {
  if (name == "points") return LabelKind::kPoints;
  if (name == "scribbles") return LabelKind::kScribbles;
  if (name == "coarse") return LabelKind::kCoarse;
  throw ConfigError("unknown label kind: " + std::string(name));
}

SparseLabelMap unlabeled_map(const CameraView& view, LabelKind kind) {
  SparseLabelMap map;
  map.view_id = view.view_id;
  map.width = view.width();
  map.height = view.height();
  map.class_count = view.class_count;
  map.kind = kind;
  map.labels = Eigen::VectorXi::Constant(view.pixel_count(), ignore_label(view.class_count));
  return map;
}

SparseLabelMap gen_point_labels(const CameraView& view, std::uint64_t seed) {
  std::vector<std::vector<int>> pixels_of(static_cast<std::size_t>(view.class_count));
  for (int p = 0; p < view.pixel_count(); ++p)
    if (!view.is_void(p)) pixels_of[static_cast<std::size_t>(view.gt_labels[p])].push_back(p);

  bool any = false;
  for (const auto& px : pixels_of) any = any || !px.empty();
  if (!any) throw DomainError("gen_point_labels: view has no labeled pixels");

  SparseLabelMap map = unlabeled_map(view, LabelKind::kPoints);
  Rng rng = make_rng(seed, {tag::kPointLabels, static_cast<std::uint64_t>(view.view_id)});
  for (int c = 0; c < view.class_count; ++c) {
    const auto& px = pixels_of[static_cast<std::size_t>(c)];
    if (px.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, px.size() - 1);
    map.labels[px[pick(rng)]] = c;
  }
  return map;
}

Eigen::VectorXi connected_regions(const Eigen::VectorXi& labels, int width, int height, int class_count,
                                  int& region_count) {
  Eigen::VectorXi region = Eigen::VectorXi::Constant(labels.size(), -1);
  region_count = 0;
  std::vector<int> stack;
  for (int start = 0; start < width * height; ++start) {
    if (labels[start] >= class_count || region[start] >= 0) continue;
    const int id = region_count++;
    region[start] = id;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int row = p / width;
      const int col = p % width;
      const std::array<std::array<int, 2>, 4> nbrs{{{row - 1, col}, {row + 1, col}, {row, col - 1}, {row, col + 1}}};
      for (const auto& [r, c] : nbrs) {
        if (r < 0 || c < 0 || r >= height || c >= width) continue;
        const int q = r * width + c;
        if (region[q] >= 0 || labels[q] != labels[p]) continue;
        region[q] = id;
        stack.push_back(q);
      }
    }
  }
  return region;
}

namespace {

std::vector<std::array<int, 2>> disk_offsets(int radius) {
  std::vector<std::array<int, 2>> out;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) out.push_back({dy, dx});
  return out;
}

// Pixels whose disk neighbourhood stays in-image and inside `member`.
std::vector<bool> erode(const std::vector<bool>& member, int width, int height, int radius) {
  if (radius <= 0) return member;
  const auto offsets = disk_offsets(radius);
  std::vector<bool> out(member.size(), false);
  for (int p = 0; p < width * height; ++p) {
    if (!member[static_cast<std::size_t>(p)]) continue;
    const int row = p / width;
    const int col = p % width;
    bool inside = true;
    for (const auto& [dy, dx] : offsets) {
      const int r = row + dy;
      const int c = col + dx;
      if (r < 0 || c < 0 || r >= height || c >= width || !member[static_cast<std::size_t>(r * width + c)]) {
        inside = false;
        break;
      }
    }
    out[static_cast<std::size_t>(p)] = inside;
  }
  return out;
}

// 8-neighbourhood in clockwise order so that index +-1 is a 45 degree turn.
constexpr std::array<std::array<int, 2>, 8> kDirections{
    {{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

}  // namespace

SparseLabelMap gen_scribble_labels(const CameraView& view, const ScribbleParams& params, std::uint64_t seed) {
  if (!(params.length_scale > 0 && params.length_scale <= 1))
    throw ConfigError("gen_scribble_labels: length_scale must lie in (0, 1]");
  if (params.thickness < 1) throw ConfigError("gen_scribble_labels: thickness must be >= 1");

  const int width = view.width();
  const int height = view.height();
  SparseLabelMap map = unlabeled_map(view, LabelKind::kScribbles);
  int region_count = 0;
  const Eigen::VectorXi region = connected_regions(view.gt_labels, width, height, view.class_count, region_count);

  const int radius = params.thickness / 2;
  const auto stamp = disk_offsets(radius);
  for (int id = 0; id < region_count; ++id) {
    std::vector<bool> member(static_cast<std::size_t>(width * height), false);
    int area = 0;
    int cls = 0;
    int min_r = height, max_r = -1, min_c = width, max_c = -1;
    for (int p = 0; p < width * height; ++p) {
      if (region[p] != id) continue;
      member[static_cast<std::size_t>(p)] = true;
      ++area;
      cls = view.gt_labels[p];
      min_r = std::min(min_r, p / width);
      max_r = std::max(max_r, p / width);
      min_c = std::min(min_c, p % width);
      max_c = std::max(max_c, p % width);
    }
    if (area < params.min_region_area) continue;
    const std::vector<bool> interior = erode(member, width, height, radius);
    std::vector<int> interior_pixels;
    for (int p = 0; p < width * height; ++p)
      if (interior[static_cast<std::size_t>(p)]) interior_pixels.push_back(p);
    if (interior_pixels.empty()) continue;

    const double diameter = std::hypot(double(max_r - min_r + 1), double(max_c - min_c + 1));
    const double target = params.length_scale * diameter;
    // Step cap depends on the region only, so strokes stay nested across lengths.
    const int max_steps = static_cast<int>(4.0 * diameter) + 20;

    Rng rng = make_rng(seed, {tag::kScribble, static_cast<std::uint64_t>(view.view_id), static_cast<std::uint64_t>(id)});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int cur = interior_pixels[std::uniform_int_distribution<std::size_t>(0, interior_pixels.size() - 1)(rng)];
    int dir = std::uniform_int_distribution<int>(0, 7)(rng);
    std::vector<bool> visited(static_cast<std::size_t>(width * height), false);
    std::vector<int> path{cur};
    visited[static_cast<std::size_t>(cur)] = true;
    double length = 0.0;

    auto step_target = [&](int from, int d) {
      const int r = from / width + kDirections[static_cast<std::size_t>(d)][0];
      const int c = from % width + kDirections[static_cast<std::size_t>(d)][1];
      if (r < 0 || c < 0 || r >= height || c >= width) return -1;
      const int q = r * width + c;
      return interior[static_cast<std::size_t>(q)] ? q : -1;
    };

    for (int step = 0; step < max_steps && length < target; ++step) {
      // Momentum: keep heading, occasionally turn 45 degrees.
      const double roll = unit(rng);
      int preferred = dir;
      if (roll > 0.8) preferred = (dir + 1) % 8;
      else if (roll > 0.6) preferred = (dir + 7) % 8;
      int next = step_target(cur, preferred);
      int chosen = preferred;
      if (next < 0 || visited[static_cast<std::size_t>(next)]) {
        std::vector<int> fresh, any;
        for (int d = 0; d < 8; ++d) {
          const int q = step_target(cur, d);
          if (q < 0) continue;
          any.push_back(d);
          if (!visited[static_cast<std::size_t>(q)]) fresh.push_back(d);
        }
        const std::vector<int>& pool = fresh.empty() ? any : fresh;
        if (pool.empty()) break;
        chosen = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        next = step_target(cur, chosen);
      }
      length += (chosen % 2 == 0) ? 1.0 : std::numbers::sqrt2;
      dir = chosen;
      cur = next;
      visited[static_cast<std::size_t>(cur)] = true;
      path.push_back(cur);
    }

    for (int p : path) {
      const int row = p / width;
      const int col = p % width;
      for (const auto& [dy, dx] : stamp) map.labels[(row + dy) * width + (col + dx)] = cls;
    }
  }
  return map;
}

SparseLabelMap gen_coarse_labels(const CameraView& view, int erosion_radius) {
  if (erosion_radius < 1) throw ConfigError("gen_coarse_labels: erosion_radius must be >= 1");
  SparseLabelMap map = unlabeled_map(view, LabelKind::kCoarse);
  for (int c = 0; c < view.class_count; ++c) {
    std::vector<bool> member(static_cast<std::size_t>(view.pixel_count()));
    for (int p = 0; p < view.pixel_count(); ++p) member[static_cast<std::size_t>(p)] = view.gt_labels[p] == c;
    const auto interior = erode(member, view.width(), view.height(), erosion_radius);
    for (int p = 0; p < view.pixel_count(); ++p)
      if (interior[static_cast<std::size_t>(p)]) map.labels[p] = c;
  }
  return map;
}

ScenePointCloud transfer_labels_to_3d(const ScenePointCloud& cloud, std::span<const SparseLabelMap> maps) {
  ScenePointCloud out = cloud;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const int view_id = cloud.source[static_cast<std::size_t>(i)].view_id;
    if (view_id < 0 || static_cast<std::size_t>(view_id) >= maps.size() ||
        maps[static_cast<std::size_t>(view_id)].view_id != view_id)
      throw ConfigError("transfer_labels_to_3d: no label map for view " + std::to_string(view_id));
    const SparseLabelMap& map = maps[static_cast<std::size_t>(view_id)];
    out.sparse_labels[i] = map.labels[cloud.source_pixel_index(i, map.width)];
  }
  return out;
}

}  // namespace cmcforge
