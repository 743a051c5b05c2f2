#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "cmcforge/annotate.hpp"
#include "cmcforge/config.hpp"
#include "cmcforge/dataset.hpp"
#include "cmcforge/error.hpp"
#include "fixtures.hpp"

using namespace cmcforge;
using cmcforge::testing::paint;
using cmcforge::testing::raster_view;

namespace {

// Left half class 0, right half class 1, one void column in between.
CameraView halves(int w = 20, int h = 10) {
  return raster_view(paint(w, h, 2, [w](int c, int) { return c == w / 2 ? -1 : (c < w / 2 ? 0 : 1); }), w, h, 2);
}

}  // namespace

TEST(PointLabels, OnePerPresentClassOnMatchingPixels) {
  const CameraView v = halves();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SparseLabelMap m = gen_point_labels(v, seed);
    EXPECT_EQ(m.labeled_count(), 2);
    for (int p = 0; p < v.pixel_count(); ++p)
      if (m.labeled(p)) EXPECT_EQ(m.labels[p], v.gt_labels[p]);
  }
}

TEST(PointLabels, UniformWithinRegionChiSquare) {
  // 3x3 region of class 0 surrounded by class 1: 200 seeds over 9 cells.
  const CameraView v = raster_view(paint(5, 5, 1, [](int c, int r) { return (c >= 1 && c <= 3 && r >= 1 && r <= 3) ? 0 : -1; }), 5, 5, 2);
  std::map<int, int> freq;
  const int trials = 200;
  for (int s = 0; s < trials; ++s) {
    const SparseLabelMap m = gen_point_labels(v, std::uint64_t(s));
    for (int p = 0; p < 25; ++p)
      if (m.labels[p] == 0) ++freq[p];
  }
  ASSERT_EQ(freq.size(), 9u);
  double chi2 = 0;
  const double expected = trials / 9.0;
  for (const auto& [p, n] : freq) chi2 += (n - expected) * (n - expected) / expected;
  EXPECT_LT(chi2, 26.12);  // chi-square 8 dof, p = 0.001
}

TEST(Scribbles, StayInsideTheirRegionAndAreNested) {
  const SceneData d = build_scene(DatasetConfig{}, 21, false);
  for (const CameraView& v : d.views) {
    SparseLabelMap prev;
    for (double len : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      ScribbleParams sp;
      sp.length_scale = len;
      const SparseLabelMap m = gen_scribble_labels(v, sp, 5);
      for (int p = 0; p < v.pixel_count(); ++p) {
        if (m.labeled(p)) EXPECT_EQ(m.labels[p], v.gt_labels[p]);
        if (prev.labels.size() && prev.labeled(p)) EXPECT_TRUE(m.labeled(p));
      }
      if (prev.labels.size()) EXPECT_GE(m.labeled_count(), prev.labeled_count());
      prev = m;
    }
  }
}

TEST(Scribbles, SkipRegionsBelowMinimumArea) {
  // A 3x3 island of class 0 is too small for the default minimum area.
  const CameraView v = raster_view(paint(12, 12, 1, [](int c, int r) { return (c < 3 && r < 3) ? 0 : -1; }), 12, 12, 2);
  const SparseLabelMap m = gen_scribble_labels(v, ScribbleParams{}, 1);
  for (int p = 0; p < v.pixel_count(); ++p)
    if (m.labeled(p)) EXPECT_EQ(m.labels[p], 1);
  EXPECT_GT(m.labeled_count(), 0);
}

TEST(Scribbles, DefaultCoverageWithinBand) {
  ExperimentConfig c;
  c.dataset.train_scenes = 2;
  c.dataset.eval_scenes = 0;
  const Dataset d = build_dataset(c);
  Eigen::Index labeled = 0, pixels = 0;
  for (const SceneData& s : d.train)
    for (const SparseLabelMap& m : s.label_maps) labeled += m.labeled_count(), pixels += m.width * m.height;
  const double coverage = double(labeled) / double(pixels);
  EXPECT_GE(coverage, 0.01);
  EXPECT_LE(coverage, 0.06);
}

TEST(CoarseLabels, MatchesErosionOracle) {
  const SceneData d = build_scene(DatasetConfig{}, 8, false);
  for (int radius : {1, 2, 3}) {
    const CameraView& v = d.views[std::size_t(radius)];
    const SparseLabelMap m = gen_coarse_labels(v, radius);
    const int w = v.width(), h = v.height();
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const int p = r * w + c;
        bool inside = !v.is_void(p);
        for (int dr = -radius; dr <= radius && inside; ++dr)
          for (int dc = -radius; dc <= radius && inside; ++dc) {
            if (dr * dr + dc * dc > radius * radius) continue;
            const int rr = r + dr, cc = c + dc;
            inside = rr >= 0 && rr < h && cc >= 0 && cc < w && v.gt_labels[rr * w + cc] == v.gt_labels[p];
          }
        EXPECT_EQ(m.labeled(p), inside) << "pixel " << p << " radius " << radius;
        if (inside) EXPECT_EQ(m.labels[p], v.gt_labels[p]);
      }
  }
  EXPECT_THROW(gen_coarse_labels(d.views[0], 0), ConfigError);
}

TEST(ConnectedRegions, CountsFourConnectedComponents) {
  const Eigen::VectorXi labels = paint(5, 3, 2, [](int c, int r) { return (c + r) % 2 ? 0 : 1; });
  int count = 0;
  const Eigen::VectorXi ids = connected_regions(labels, 5, 3, 2, count);
  EXPECT_EQ(count, 15);  // checkerboard: every cell isolated
  const Eigen::VectorXi split = paint(4, 2, 3, [](int c, int) { return c == 2 ? -1 : 0; });
  connected_regions(split, 4, 2, 3, count);
  EXPECT_EQ(count, 2);
  EXPECT_EQ(ids.minCoeff(), 0);
}

TEST(LabelTransfer, ConservesCountsOneToOne) {
  const SceneData d = build_scene(DatasetConfig{}, 17, true);
  Eigen::Index expected = 0;
  for (Eigen::Index i = 0; i < d.cloud.size(); ++i) {
    const PixelCoord& s = d.cloud.source[std::size_t(i)];
    const SparseLabelMap& m = d.label_maps[std::size_t(s.view_id)];
    const int px = d.cloud.source_pixel_index(i, m.width);
    EXPECT_EQ(d.cloud.sparse_labels[i], m.labels[px]);
    if (m.labeled(px)) ++expected;
  }
  EXPECT_EQ((d.cloud.sparse_labels.array() < d.cloud.class_count).count(), expected);
  // Dense reconstruction has one point per non-void pixel, so every labeled pixel transfers.
  Eigen::Index labeled_pixels = 0;
  for (const SparseLabelMap& m : d.label_maps) labeled_pixels += m.labeled_count();
  EXPECT_EQ(expected, labeled_pixels);
}
