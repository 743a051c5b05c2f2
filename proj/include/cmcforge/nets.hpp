#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "cmcforge/sampling.hpp"
#include "cmcforge/scene.hpp"

namespace cmcforge {

enum class Activation { kTanh, kIdentity };
enum class Modality { k2d, k3d };

std::string_view to_string(Modality m);

// Two-layer perceptron: input -> hidden (activation) -> logits. All weights
// live in one flat vector laid out as [W1 | b1 | W2 | b2], W1 being
// hidden x input and W2 classes x hidden, both column-major.
class MicroNet {
 public:
  MicroNet() = default;
  MicroNet(int input_dim, int hidden_dim, int output_dim, Activation activation = Activation::kTanh);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int output_dim() const { return output_dim_; }
  Activation activation() const { return activation_; }
  Eigen::Index parameter_count() const { return params_.size(); }
  static Eigen::Index parameter_count(int input_dim, int hidden_dim, int output_dim);

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> w1() const;
  Eigen::Map<const Eigen::VectorXd> b1() const;
  Eigen::Map<const Eigen::MatrixXd> w2() const;
  Eigen::Map<const Eigen::VectorXd> b2() const;

  // Glorot-uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  bool same_shape(const MicroNet& other) const {
    return input_dim_ == other.input_dim_ && hidden_dim_ == other.hidden_dim_ && output_dim_ == other.output_dim_;
  }

 private:
  int input_dim_{0};
  int hidden_dim_{0};
  int output_dim_{0};
  Activation activation_{Activation::kTanh};
  Eigen::VectorXd params_;
};

// Activations retained by forward() for backward().
struct ForwardCache {
  Eigen::MatrixXd input;   // N x in
  Eigen::MatrixXd hidden;  // N x hidden, post-activation
};

// Row-wise logits (N x classes) for inputs (N x in).
Eigen::MatrixXd forward(const MicroNet& net, const Eigen::Ref<const Eigen::MatrixXd>& input,
                        ForwardCache* cache = nullptr);

// Gradient of sum(logits .* upstream) with respect to the flat parameters.
Eigen::VectorXd backward(const MicroNet& net, const ForwardCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& upstream);

// Per-pixel logits for a view's features (H*W x F).
Eigen::MatrixXd forward_2d(const MicroNet& net, const Eigen::Ref<const Eigen::MatrixXd>& view_features,
                           ForwardCache* cache = nullptr);

// 3D head input: [position / scene_scale | point features] per sampled point.
Eigen::MatrixXd point_inputs(const ScenePointCloud& cloud, const ViewSample& sample);
Eigen::MatrixXd forward_3d(const MicroNet& net, const ViewSample& sample, const ScenePointCloud& cloud,
                           ForwardCache* cache = nullptr);

struct AdamWParams {
  double lr{1e-3};
  double weight_decay{0.0};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

// Student and EMA teacher for one modality. Only the student carries
// optimizer moments.
struct BranchState {
  Modality modality{Modality::k2d};
  MicroNet student;
  MicroNet teacher;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step_count{0};

  static BranchState create(Modality modality, MicroNet student);
};

// Decoupled weight decay followed by a bias-corrected adaptive-moment step.
void optimizer_step(BranchState& state, const Eigen::Ref<const Eigen::VectorXd>& grad, const AdamWParams& params);

// teacher <- alpha * teacher + (1 - alpha) * student.
void ema_update(BranchState& state, double alpha);

}  // namespace cmcforge
