#include "cmcforge/losses.hpp"

#include <cmath>

#include "cmcforge/error.hpp"

namespace cmcforge {

Eigen::MatrixXd log_softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  Eigen::MatrixXd out = logits.colwise() - logits.rowwise().maxCoeff();
  const Eigen::VectorXd log_norm = out.array().exp().rowwise().sum().log().matrix();
  out.colwise() -= log_norm;
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

LossGrad supervised_ce(const Eigen::Ref<const Eigen::MatrixXd>& logits, const Eigen::Ref<const Eigen::VectorXi>& labels) {
  if (labels.size() != logits.rows()) throw ContractError("supervised_ce: label count does not match logits");
  const auto classes = static_cast<int>(logits.cols());
  LossGrad out;
  out.grad = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > classes) throw ContractError("supervised_ce: label id out of range");
    if (labels[i] < classes) ++out.count;
  }
  if (out.count == 0) return out;
  const Eigen::MatrixXd logp = log_softmax_rows(logits);
  const double inv = 1.0 / double(out.count);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y == classes) continue;
    out.loss -= logp(i, y);
    out.grad.row(i) = logp.row(i).array().exp().matrix() * inv;
    out.grad(i, y) -= inv;
  }
  out.loss *= inv;
  return out;
}

LossGrad consistency_kl(const Eigen::Ref<const Eigen::MatrixXd>& student_logits,
                        const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, const Mask& mask) {
  if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols() ||
      mask.size() != student_logits.rows())
    throw ContractError("consistency_kl: shape mismatch");
  LossGrad out;
  out.grad = Eigen::MatrixXd::Zero(student_logits.rows(), student_logits.cols());
  out.count = mask.count();
  if (out.count == 0) return out;
  const double inv = 1.0 / double(out.count);
  const Eigen::MatrixXd log_t = log_softmax_rows(teacher_logits);
  const Eigen::MatrixXd log_s = log_softmax_rows(student_logits);
  const Eigen::ArrayXXd p_t = log_t.array().exp();
  const Eigen::ArrayXd row_kl = (p_t * (log_t - log_s).array()).rowwise().sum();
  const Eigen::ArrayXd keep = mask.cast<double>();
  out.loss = (row_kl * keep).sum() * inv;
  out.grad = ((log_s.array().exp() - p_t).colwise() * (keep * inv)).matrix();
  return out;
}

double confidence_weight(const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, const Mask& mask, double tau) {
  if (!(tau > 0 && tau < 1)) throw ConfigError("confidence_weight: tau must lie in (0, 1)");
  if (mask.size() != teacher_logits.rows()) throw ContractError("confidence_weight: mask size mismatch");
  const Eigen::Index n = mask.count();
  if (n == 0) return 0.0;
  const Eigen::VectorXd max_prob = softmax_rows(teacher_logits).rowwise().maxCoeff();
  Eigen::Index confident = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    if (mask[i] && max_prob[i] >= tau) ++confident;
  return double(confident) / double(n);
}

double branch_objective(double supervised, double consistency, double w_t, double beta) {
  return (1.0 - beta) * supervised + beta * w_t * consistency;
}

std::string_view to_string(ConfidenceMode mode) {
  switch (mode) {
    case ConfidenceMode::kNone:
      return "none";
    case ConfidenceMode::kPrediction:
      return "prediction";
    case ConfidenceMode::kReconstruction:
      return "reconstruction";
    case ConfidenceMode::kDual:
      return "dual";
  }
  return "dual";
}

ConfidenceMode confidence_mode_from_string(std::string_view name) {
  if (name == "none") return ConfidenceMode::kNone;
  if (name == "prediction") return ConfidenceMode::kPrediction;
  if (name == "reconstruction") return ConfidenceMode::kReconstruction;
  if (name == "dual") return ConfidenceMode::kDual;
  throw ConfigError("unknown confidence mode: " + std::string(name));
}

namespace {

void check_pairs(std::span<const CmcPair> pairs, Eigen::Index student_rows, Eigen::Index teacher_rows) {
  for (const CmcPair& pr : pairs) {
    if (pr.teacher_row < 0 || pr.teacher_row >= teacher_rows) throw ContractError("cmc_loss: teacher row out of range");
    if (pr.student_row < 0 || pr.student_row >= student_rows) throw ContractError("cmc_loss: student row out of range");
  }
}

Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, std::span<const CmcPair> pairs, bool teacher) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pairs.size()), m.cols());
  for (std::size_t k = 0; k < pairs.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) = m.row(teacher ? pairs[k].teacher_row : pairs[k].student_row);
  return out;
}

}  // namespace

Eigen::VectorXd cmc_weights(const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, std::span<const CmcPair> pairs,
                            const Eigen::Ref<const Eigen::VectorXd>& rec_confidence, ConfidenceMode mode) {
  if (rec_confidence.size() != static_cast<Eigen::Index>(pairs.size()))
    throw ContractError("cmc_loss: confidence count does not match correspondences");
  for (const CmcPair& pr : pairs)
    if (pr.teacher_row < 0 || pr.teacher_row >= teacher_logits.rows())
      throw ContractError("cmc_loss: teacher row out of range");
  const bool use_pred = mode == ConfidenceMode::kPrediction || mode == ConfidenceMode::kDual;
  const bool use_rec = mode == ConfidenceMode::kReconstruction || mode == ConfidenceMode::kDual;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(pairs.size()));
  if (use_pred && !pairs.empty()) w = softmax_rows(gather_rows(teacher_logits, pairs, true)).rowwise().maxCoeff();
  if (use_rec) w.array() *= rec_confidence.array();
  return w;
}

LossGrad cmc_loss(const Eigen::Ref<const Eigen::MatrixXd>& student_logits,
                  const Eigen::Ref<const Eigen::MatrixXd>& teacher_logits, std::span<const CmcPair> pairs,
                  const Eigen::Ref<const Eigen::VectorXd>& rec_confidence, const CmcOptions& options) {
  if (student_logits.cols() != teacher_logits.cols()) throw ContractError("cmc_loss: class count mismatch");
  check_pairs(pairs, student_logits.rows(), teacher_logits.rows());
  LossGrad out;
  out.grad = Eigen::MatrixXd::Zero(student_logits.rows(), student_logits.cols());
  out.count = static_cast<Eigen::Index>(pairs.size());
  const Eigen::VectorXd w = cmc_weights(teacher_logits, pairs, rec_confidence, options.mode);
  const double total_weight = w.sum();
  if (pairs.empty() || !(total_weight > 0)) return out;
  const double scale = options.normalize ? 1.0 / total_weight : 1.0;
  const Eigen::MatrixXd teacher = gather_rows(teacher_logits, pairs, true);
  const Eigen::MatrixXd log_s = log_softmax_rows(gather_rows(student_logits, pairs, false));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double wk = w[kk] * scale;
    if (wk == 0.0) continue;
    Eigen::Index y = 0;
    teacher.row(kk).maxCoeff(&y);
    out.loss -= wk * log_s(kk, y);
    Eigen::RowVectorXd g = log_s.row(kk).array().exp();
    g[y] -= 1.0;
    out.grad.row(pairs[k].student_row) += wk * g;
  }
  return out;
}

std::vector<std::string> LossReport::csv_header() {
  return {"L_S_2D", "L_U_2D", "L_S_3D", "L_U_3D", "L_C_2D", "L_C_3D", "w_t_2D", "w_t_3D",
          "lambda_2D", "lambda_3D", "total", "labeled_2D", "unlabeled_2D", "labeled_3D", "unlabeled_3D",
          "correspondences"};
}

std::vector<double> LossReport::csv_values() const {
  return {parts.supervised_2d, parts.consistency_2d, parts.supervised_3d, parts.consistency_3d, parts.cmc_2d,
          parts.cmc_3d,        parts.w_t_2d,         parts.w_t_3d,         lambda_2d,          lambda_3d,
          total,               double(labeled_2d),   double(unlabeled_2d), double(labeled_3d), double(unlabeled_3d),
          double(correspondences)};
}

LossReport total_objective(const LossComponents& parts, double lambda_2d, double lambda_3d, double beta,
                           TotalMode mode) {
  LossReport r;
  r.parts = parts;
  r.lambda_2d = lambda_2d;
  r.lambda_3d = lambda_3d;
  r.beta = beta;
  double base = 0.0;
  if (mode == TotalMode::kBranchObjective) {
    base = branch_objective(parts.supervised_2d, parts.consistency_2d, parts.w_t_2d, beta) +
           branch_objective(parts.supervised_3d, parts.consistency_3d, parts.w_t_3d, beta);
  } else {
    base = parts.supervised_2d + parts.consistency_2d + parts.supervised_3d + parts.consistency_3d;
  }
  r.total = base + lambda_2d * parts.cmc_2d + lambda_3d * parts.cmc_3d;
  return r;
}

}  // namespace cmcforge
