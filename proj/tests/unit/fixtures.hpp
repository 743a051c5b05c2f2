#pragma once

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Core>

#include "cmcforge/scene.hpp"
#include "cmcforge/worldgen.hpp"

namespace cmcforge::testing {

// A view built directly from a label raster; depth is constant.
inline CameraView raster_view(const Eigen::VectorXi& labels, int width, int height, int classes, double depth = 5.0,
                              int view_id = 0) {
  CameraView v;
  v.view_id = view_id;
  v.intrinsics = Intrinsics{double(width), double(width), 0.5 * width, 0.5 * height, width, height};
  v.class_count = classes;
  v.gt_labels = labels;
  v.gt_depth = Eigen::VectorXd::Constant(width * height, depth);
  for (int p = 0; p < width * height; ++p)
    if (labels[p] >= classes) v.gt_depth[p] = 0.0;
  v.features = Eigen::MatrixXd::Zero(width * height, 8);
  for (int p = 0; p < width * height; ++p)
    if (labels[p] < classes) v.features(p, labels[p] % 6) = 1.0;
  return v;
}

// Label raster painted by a predicate over (col, row); background is `fill`.
inline Eigen::VectorXi paint(int width, int height, int fill, const std::function<int(int, int)>& f) {
  Eigen::VectorXi out(width * height);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const int v = f(c, r);
      out[r * width + c] = v < 0 ? fill : v;
    }
  return out;
}

// Small full scene used by several modules' tests.
inline SyntheticScene small_scene(std::uint64_t seed = 7) {
  SceneParams p;
  return generate_scene(p, seed);
}

// Central finite difference of f at x, component-wise.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace cmcforge::testing
