#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "cmcforge/metrics.hpp"
#include "fixtures.hpp"

using namespace cmcforge;

namespace {

// IoU via explicit index sets.
double set_iou(const Eigen::VectorXi& truth, const Eigen::VectorXi& pred, int c, int classes) {
  std::set<int> t, p;
  for (int i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes) continue;
    if (truth[i] == c) t.insert(i);
    if (pred[i] == c) p.insert(i);
  }
  std::set<int> uni = t;
  uni.insert(p.begin(), p.end());
  int inter = 0;
  for (int i : t) inter += p.count(i);
  return uni.empty() ? std::nan("") : double(inter) / double(uni.size());
}

}  // namespace

TEST(Miou, MatchesSetOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 2 + trial % 5;
    std::uniform_int_distribution<int> lab(0, classes), pred(0, classes - 1);
    Eigen::VectorXi truth(200), p(200);
    for (int i = 0; i < 200; ++i) truth[i] = lab(rng), p[i] = pred(rng);
    ConfusionMatrix cm(classes);
    cm.add(truth, p);
    const MiouResult r = miou(cm);
    double sum = 0;
    int defined = 0;
    for (int c = 0; c < classes; ++c) {
      const double expected = set_iou(truth, p, c, classes);
      if (std::isnan(expected)) {
        EXPECT_TRUE(std::isnan(r.iou[c]));
      } else {
        EXPECT_DOUBLE_EQ(r.iou[c], expected);
        sum += expected;
        ++defined;
      }
    }
    EXPECT_NEAR(r.mean_percent, 100.0 * sum / defined, 1e-12);
  }
}

TEST(Miou, AbsentClassIsExcludedFromMean) {
  ConfusionMatrix cm(3);
  cm.add(0, 0);
  cm.add(1, 1);
  cm.add(1, 0);
  const MiouResult r = miou(cm);
  EXPECT_TRUE(std::isnan(r.iou[2]));
  EXPECT_DOUBLE_EQ(r.mean_percent, 100.0 * (0.5 + 0.5) / 2);
}

TEST(Miou, ConfusionAccumulates) {
  ConfusionMatrix a(2), b(2);
  a.add(0, 1);
  b.add(1, 1);
  b.add(2, 0);  // void, skipped
  a += b;
  EXPECT_EQ(a.total(), 2);
  EXPECT_EQ(a.counts()(0, 1), 1);
  EXPECT_EQ(a.counts()(1, 1), 1);
}

TEST(SupervisionGap, MatchesReferenceRatios) {
  EXPECT_NEAR(supervision_gap(49.4, 59.0), 83.7, 0.1);
  EXPECT_NEAR(supervision_gap(53.3, 59.0), 90.3, 0.1);
  EXPECT_DOUBLE_EQ(supervision_gap(30.0, 60.0), 50.0);
}

TEST(ArgmaxRows, FirstMaximumWins) {
  Eigen::MatrixXd z(2, 3);
  z << 1, 3, 3, -1, -2, -3;
  const Eigen::VectorXi a = argmax_rows(z);
  EXPECT_EQ(a[0], 1);
  EXPECT_EQ(a[1], 0);
}

TEST(Eval2d, PerfectNetScoresHundred) {
  // Identity-activation net that reads the one-hot feature columns back out.
  const int w = 8, h = 6, classes = 3;
  const auto labels = cmcforge::testing::paint(w, h, classes, [](int c, int r) { return (c + r) % 4 == 3 ? -1 : (c / 3) % 3; });
  const CameraView v = cmcforge::testing::raster_view(labels, w, h, classes);
  MicroNet net(8, classes, classes, Activation::kIdentity);
  net.params().setZero();
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(classes, 8);
  for (int c = 0; c < classes; ++c) w1(c, c) = 1.0;
  net.params().head(w1.size()) = Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size());
  Eigen::MatrixXd w2 = Eigen::MatrixXd::Identity(classes, classes);
  net.params().segment(w1.size() + classes, w2.size()) = Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size());
  const CameraView views[] = {v};
  EXPECT_DOUBLE_EQ(eval_2d(net, views).mean_percent, 100.0);
}
