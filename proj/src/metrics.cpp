#include "cmcforge/metrics.hpp"

#include <cmath>
#include <limits>

#include "cmcforge/error.hpp"

namespace cmcforge {

ConfusionMatrix::ConfusionMatrix(int classes) {
  if (classes < 1) throw ContractError("ConfusionMatrix: classes must be >= 1");
  counts_ = Counts::Zero(classes, classes);
}

void ConfusionMatrix::add(int truth, int prediction) {
  if (truth < 0) throw ContractError("ConfusionMatrix: negative ground-truth id");
  if (truth >= classes()) return;
  if (prediction < 0 || prediction >= classes()) throw ContractError("ConfusionMatrix: prediction out of range");
  ++counts_(truth, prediction);
}

void ConfusionMatrix::add(const Eigen::Ref<const Eigen::VectorXi>& truth,
                          const Eigen::Ref<const Eigen::VectorXi>& prediction) {
  if (truth.size() != prediction.size()) throw ContractError("ConfusionMatrix: size mismatch");
  for (Eigen::Index i = 0; i < truth.size(); ++i) add(truth[i], prediction[i]);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes() != classes()) throw ContractError("ConfusionMatrix: class count mismatch");
  counts_ += other.counts_;
  return *this;
}

MiouResult miou(const ConfusionMatrix& confusion) {
  if (confusion.total() == 0) throw DomainError("miou: empty confusion matrix");
  const auto& m = confusion.counts();
  MiouResult out;
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < confusion.classes(); ++c) {
    const auto tp = m(c, c);
    const auto denom = m.row(c).sum() + m.col(c).sum() - tp;
    if (denom == 0) {
      out.iou.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.iou.push_back(double(tp) / double(denom));
    sum += out.iou.back();
    ++counted;
  }
  out.mean_percent = 100.0 * sum / counted;
  return out;
}

double supervision_gap(double weak_miou, double full_miou) {
  if (!(full_miou > 0)) throw DomainError("supervision_gap: fully-supervised mIoU must be positive");
  return 100.0 * weak_miou / full_miou;
}

Eigen::VectorXi argmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  Eigen::VectorXi out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index c = 0;
    logits.row(i).maxCoeff(&c);
    out[i] = static_cast<int>(c);
  }
  return out;
}

MiouResult eval_2d(const MicroNet& net, std::span<const CameraView> views) {
  if (views.empty()) throw DomainError("eval_2d: no views");
  ConfusionMatrix confusion(views.front().class_count);
  for (const CameraView& view : views) confusion.add(view.gt_labels, argmax_rows(forward_2d(net, view.features)));
  return miou(confusion);
}

Eigen::VectorXi unprojected_reference(const ScenePointCloud& cloud, std::span<const CameraView> views) {
  Eigen::VectorXi ref(cloud.size());
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const int view_id = cloud.source[static_cast<std::size_t>(i)].view_id;
    if (view_id < 0 || static_cast<std::size_t>(view_id) >= views.size())
      throw ConfigError("unprojected_reference: missing view");
    const CameraView& view = views[static_cast<std::size_t>(view_id)];
    ref[i] = view.gt_labels[cloud.source_pixel_index(i, view.width())];
  }
  return ref;
}

ConfusionMatrix confusion_3d(const MicroNet& net, const ScenePointCloud& cloud,
                             const Eigen::Ref<const Eigen::VectorXi>& reference) {
  if (reference.size() != cloud.size()) throw ContractError("eval_3d: reference size mismatch");
  if ((reference.array() < cloud.class_count).count() == 0) throw DomainError("eval_3d: no reference labels");
  Eigen::MatrixXd inputs(cloud.size(), 3 + cloud.feature_dim());
  inputs.leftCols<3>() = cloud.positions / cloud.scene_scale;
  inputs.rightCols(cloud.feature_dim()) = cloud.features;
  ConfusionMatrix confusion(cloud.class_count);
  confusion.add(reference, argmax_rows(forward(net, inputs)));
  return confusion;
}

MiouResult eval_3d(const MicroNet& net, const ScenePointCloud& cloud,
                   const Eigen::Ref<const Eigen::VectorXi>& reference) {
  return miou(confusion_3d(net, cloud, reference));
}

}  // namespace cmcforge
