#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cmcforge/nets.hpp"
#include "cmcforge/scene.hpp"

namespace cmcforge {

// Rows are ground truth, columns predictions. Ground-truth ids >= classes
// (void / unlabeled) are skipped.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionMatrix(int classes);

  int classes() const { return static_cast<int>(counts_.rows()); }
  const Counts& counts() const { return counts_; }
  std::int64_t total() const { return counts_.sum(); }

  void add(int truth, int prediction);
  void add(const Eigen::Ref<const Eigen::VectorXi>& truth, const Eigen::Ref<const Eigen::VectorXi>& prediction);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

 private:
  Counts counts_;
};

struct MiouResult {
  std::vector<double> iou;  // per class in [0, 1]; NaN when TP+FP+FN = 0
  double mean_percent{0};   // mean over classes with a defined IoU, in percent
};

MiouResult miou(const ConfusionMatrix& confusion);

// Weak-supervision mIoU as a percentage of the fully-supervised mIoU.
double supervision_gap(double weak_miou, double full_miou);

Eigen::VectorXi argmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);

// 2D mIoU of `net` over every non-void pixel of `views`.
MiouResult eval_2d(const MicroNet& net, std::span<const CameraView> views);

enum class Reference3d { kTrue3d, kUnprojected2d };

// Reference labels for every cloud point: dense ground truth at the source
// pixel (views indexed by view id).
Eigen::VectorXi unprojected_reference(const ScenePointCloud& cloud, std::span<const CameraView> views);

// Accumulates the 3D head's confusion over all points against `reference`.
ConfusionMatrix confusion_3d(const MicroNet& net, const ScenePointCloud& cloud,
                             const Eigen::Ref<const Eigen::VectorXi>& reference);
MiouResult eval_3d(const MicroNet& net, const ScenePointCloud& cloud, const Eigen::Ref<const Eigen::VectorXi>& reference);

}  // namespace cmcforge
