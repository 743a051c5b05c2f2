#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace cmcforge {

// Row-wise element masks (true = element participates).
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);
Eigen::MatrixXd log_softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);

// A scalar loss and its gradient with respect to the (student) logits.
struct LossGrad {
  double loss{0};
  Eigen::MatrixXd grad;
  Eigen::Index count{0};
};

// Mean cross-entropy over rows whose label is < classes. A label equal to
// `classes` marks an unlabeled row; anything else out of range is an error.
LossGrad supervised_ce(const Eigen::Ref<const Eigen::MatrixXd>& logits, const Eigen::Ref<const Eigen::VectorXi>& labels);

// Mean over masked rows of KL(softmax(teacher) || softmax(student)).
// The teacher side is a constant.
LossGrad consistency_kl(const Eigen::Ref<const Eigen::MatrixXd>& student_logits,
                        const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, const Mask& mask);

// Fraction of masked rows whose teacher max-probability is >= tau; 0 when
// the mask is empty.
double confidence_weight(const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, const Mask& mask, double tau);

// (1 - beta) * supervised + beta * w_t * consistency.
double branch_objective(double supervised, double consistency, double w_t, double beta);

enum class ConfidenceMode { kNone, kPrediction, kReconstruction, kDual };

std::string_view to_string(ConfidenceMode mode);
ConfidenceMode confidence_mode_from_string(std::string_view name);

struct CmcOptions {
  ConfidenceMode mode{ConfidenceMode::kDual};
  // Divide by the weight sum; otherwise the raw weighted sum is returned.
  bool normalize{true};
};

// A student row paired with the teacher row of the corresponding element
// in the other modality.
struct CmcPair {
  Eigen::Index student_row;
  Eigen::Index teacher_row;
};

// Cross-modal cross-entropy against the teacher's hard labels, weighted by
// teacher max-probability times reconstruction confidence (per `options`).
// `rec_confidence[k]` belongs to pairs[k].
LossGrad cmc_loss(const Eigen::Ref<const Eigen::MatrixXd>& student_logits,
                  const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, std::span<const CmcPair> pairs,
                  const Eigen::Ref<const Eigen::VectorXd>& rec_confidence, const CmcOptions& options = {});

// Per-correspondence weights used by cmc_loss.
Eigen::VectorXd cmc_weights(const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, std::span<const CmcPair> pairs,
                            const Eigen::Ref<const Eigen::VectorXd>& rec_confidence, ConfidenceMode mode);

enum class TotalMode {
  kBranchObjective,  // each modality contributes (1-beta) L_S + beta w_t L_U
  kUnweighted,       // each modality contributes L_S + L_U
};

struct LossComponents {
  double supervised_2d{0}, consistency_2d{0}, supervised_3d{0}, consistency_3d{0};
  double cmc_2d{0}, cmc_3d{0};
  double w_t_2d{0}, w_t_3d{0};
};

struct LossReport {
  LossComponents parts;
  double lambda_2d{0};
  double lambda_3d{0};
  double beta{0};
  double total{0};
  Eigen::Index labeled_2d{0}, unlabeled_2d{0}, labeled_3d{0}, unlabeled_3d{0}, correspondences{0};

  static std::vector<std::string> csv_header();
  std::vector<double> csv_values() const;
};

LossReport total_objective(const LossComponents& parts, double lambda_2d, double lambda_3d, double beta,
                           TotalMode mode = TotalMode::kBranchObjective);

}  // namespace cmcforge
