#include "cmcforge/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "cmcforge/error.hpp"
#include "cmcforge/rng.hpp"

namespace cmcforge {

std::size_t ViewSample::correspondence_count() const {
  return static_cast<std::size_t>(std::count(correspondence_mask.begin(), correspondence_mask.end(), true));
}

namespace {

void check_inputs(const ScenePointCloud& cloud, int budget) {
  if (cloud.size() == 0) throw DomainError("sampling: empty point cloud");
  if (budget < 1) throw ConfigError("sampling: budget must be >= 1");
}

// Uniform draw of `count` elements without replacement, kept in pool order.
std::vector<Eigen::Index> draw(const std::vector<Eigen::Index>& pool, std::size_t count, Rng& rng) {
  std::vector<Eigen::Index> out;
  out.reserve(std::min(count, pool.size()));
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), count, rng);
  return out;
}

std::vector<Eigen::Index> remove_chosen(const std::vector<Eigen::Index>& pool, const std::vector<Eigen::Index>& chosen) {
  // Both inputs are sorted ascending.
  std::vector<Eigen::Index> rest;
  std::set_difference(pool.begin(), pool.end(), chosen.begin(), chosen.end(), std::back_inserter(rest));
  return rest;
}

ViewSample finish(int target_view_id, int budget, double view_fraction, double context_radius,
                  std::vector<Eigen::Index> indices, const ScenePointCloud& cloud) {
  std::sort(indices.begin(), indices.end());
  ViewSample s;
  s.target_view_id = target_view_id;
  s.budget = budget;
  s.view_fraction = view_fraction;
  s.context_radius = context_radius;
  s.correspondence_mask.reserve(indices.size());
  for (Eigen::Index i : indices)
    s.correspondence_mask.push_back(cloud.source[static_cast<std::size_t>(i)].view_id == target_view_id);
  s.point_indices = std::move(indices);
  return s;
}

}  // namespace

ViewSample view_aware_sample(const ScenePointCloud& cloud, int target_view_id, const Eigen::Vector3d& camera_center,
                             int budget, double view_fraction, double context_radius, std::uint64_t seed) {
  check_inputs(cloud, budget);
  if (!(view_fraction >= 0 && view_fraction <= 1)) throw ConfigError("sampling: view_fraction must lie in [0, 1]");
  if (!(context_radius >= 0)) throw ConfigError("sampling: context_radius must be >= 0");

  std::vector<Eigen::Index> view_pool;
  std::vector<Eigen::Index> context_pool;
  const double r2 = context_radius * context_radius;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if (cloud.source[static_cast<std::size_t>(i)].view_id == target_view_id) {
      view_pool.push_back(i);
    } else if ((cloud.positions.row(i).transpose() - camera_center).squaredNorm() <= r2) {
      context_pool.push_back(i);
    }
  }

  Rng rng = make_rng(seed, {tag::kSampling, static_cast<std::uint64_t>(target_view_id)});
  const auto b = static_cast<std::size_t>(budget);
  const auto quota = static_cast<std::size_t>(std::llround(budget * view_fraction));
  std::vector<Eigen::Index> chosen_view = draw(view_pool, std::min(quota, view_pool.size()), rng);
  std::vector<Eigen::Index> chosen_ctx = draw(context_pool, std::min(b - chosen_view.size(), context_pool.size()), rng);
  if (chosen_view.size() + chosen_ctx.size() < b) {
    const auto rest = remove_chosen(view_pool, chosen_view);
    const auto extra = draw(rest, b - chosen_view.size() - chosen_ctx.size(), rng);
    chosen_view.insert(chosen_view.end(), extra.begin(), extra.end());
  }
  chosen_view.insert(chosen_view.end(), chosen_ctx.begin(), chosen_ctx.end());
  return finish(target_view_id, budget, view_fraction, context_radius, std::move(chosen_view), cloud);
}

ViewSample random_sample(const ScenePointCloud& cloud, int target_view_id, int budget, std::uint64_t seed) {
  check_inputs(cloud, budget);
  Rng rng = make_rng(seed, {tag::kSampling, static_cast<std::uint64_t>(target_view_id)});
  const auto n = static_cast<std::size_t>(cloud.size());
  std::vector<Eigen::Index> chosen;
  chosen.reserve(std::min(n, static_cast<std::size_t>(budget)));
  // Selection sampling over 0..n-1 without materializing the pool.
  std::size_t needed = std::min(n, static_cast<std::size_t>(budget));
  for (std::size_t i = 0; i < n && needed > 0; ++i) {
    if (std::uniform_int_distribution<std::size_t>(0, n - i - 1)(rng) < needed) {
      chosen.push_back(static_cast<Eigen::Index>(i));
      --needed;
    }
  }
  return finish(target_view_id, budget, 0.0, 0.0, std::move(chosen), cloud);
}

ViewSample correspondences_only_sample(const ScenePointCloud& cloud, int target_view_id, int budget,
                                       std::uint64_t seed) {
  check_inputs(cloud, budget);
  const std::vector<Eigen::Index> view_pool = cloud.points_from_view(target_view_id);
  Rng rng = make_rng(seed, {tag::kSampling, static_cast<std::uint64_t>(target_view_id)});
  auto chosen = draw(view_pool, std::min(view_pool.size(), static_cast<std::size_t>(budget)), rng);
  return finish(target_view_id, budget, 1.0, 0.0, std::move(chosen), cloud);
}

}  // namespace cmcforge
