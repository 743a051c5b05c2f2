#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "cmcforge/config.hpp"
#include "cmcforge/dataset.hpp"
#include "cmcforge/error.hpp"
#include "cmcforge/sampling.hpp"

using namespace cmcforge;

namespace {

DatasetConfig small_config() {
  DatasetConfig c;
  c.views_per_scene = 4;
  c.width = c.height = 32;
  return c;
}

bool strictly_increasing(const std::vector<Eigen::Index>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] <= v[i - 1]) return false;
  return true;
}

}  // namespace

TEST(ViewAwareSample, ExactBudgetAndCorrespondenceFloor) {
  const DatasetConfig cfg = small_config();
  for (std::uint64_t scene = 0; scene < 20; ++scene) {
    const SceneData d = build_scene(cfg, scene, false);
    for (const CameraView& v : d.views) {
      const int budget = 300;
      const ViewSample s = view_aware_sample(d.cloud, v.view_id, v.pose.center(), budget, 0.6, 3.0, scene);
      const auto pool = d.cloud.points_from_view(v.view_id).size();
      EXPECT_EQ(s.size(), std::size_t(budget));
      EXPECT_GE(s.correspondence_count(), std::min<std::size_t>(pool, std::size_t(std::floor(0.6 * budget))));
      EXPECT_TRUE(strictly_increasing(s.point_indices));
      for (std::size_t k = 0; k < s.size(); ++k)
        EXPECT_EQ(s.correspondence_mask[k], d.cloud.source[std::size_t(s.point_indices[k])].view_id == v.view_id);
    }
  }
}

TEST(ViewAwareSample, ContextPointsLieWithinRadius) {
  const SceneData d = build_scene(small_config(), 3, false);
  const CameraView& v = d.views[1];
  const double radius = 4.0;
  const ViewSample s = view_aware_sample(d.cloud, 1, v.pose.center(), 400, 0.5, radius, 7);
  for (std::size_t k = 0; k < s.size(); ++k)
    if (!s.correspondence_mask[k])
      EXPECT_LE((d.cloud.positions.row(s.point_indices[k]).transpose() - v.pose.center()).norm(), radius + 1e-12);
}

TEST(ViewAwareSample, RefillsFromViewWhenContextIsEmpty) {
  const SceneData d = build_scene(small_config(), 4, false);
  const ViewSample s = view_aware_sample(d.cloud, 0, d.views[0].pose.center(), 200, 0.5, 0.0, 1);
  EXPECT_EQ(s.size(), 200u);
  EXPECT_EQ(s.correspondence_count(), 200u);
}

TEST(ViewAwareSample, SeededAndValidated) {
  const SceneData d = build_scene(small_config(), 5, false);
  const auto c = d.views[2].pose.center();
  EXPECT_EQ(view_aware_sample(d.cloud, 2, c, 100, 0.6, 3, 9).point_indices,
            view_aware_sample(d.cloud, 2, c, 100, 0.6, 3, 9).point_indices);
  EXPECT_THROW(view_aware_sample(d.cloud, 2, c, 0, 0.6, 3, 9), ConfigError);
  EXPECT_THROW(view_aware_sample(d.cloud, 2, c, 10, 1.5, 3, 9), ConfigError);
}

TEST(RandomSample, CorrespondenceCountMatchesHypergeometricMean) {
  const SceneData d = build_scene(small_config(), 6, false);
  const double n_total = double(d.cloud.size());
  const double k_view = double(d.cloud.points_from_view(1).size());
  const int budget = 250, trials = 400;
  const double p = k_view / n_total;
  const double mean = budget * p;
  const double var = budget * p * (1 - p) * (n_total - budget) / (n_total - 1);
  double sum = 0;
  for (int t = 0; t < trials; ++t) {
    const ViewSample s = random_sample(d.cloud, 1, budget, std::uint64_t(t));
    ASSERT_EQ(s.size(), std::size_t(budget));
    sum += double(s.correspondence_count());
  }
  EXPECT_LE(std::abs(sum / trials - mean), 3.0 * std::sqrt(var / trials));
}

TEST(CorrespondencesOnlySample, DrawsOnlyFromTargetView) {
  const SceneData d = build_scene(small_config(), 2, false);
  const ViewSample s = correspondences_only_sample(d.cloud, 3, 100000, 1);
  EXPECT_EQ(s.size(), d.cloud.points_from_view(3).size());
  EXPECT_EQ(s.correspondence_count(), s.size());
}
