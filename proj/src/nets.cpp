#include "cmcforge/nets.hpp"

#include <cmath>
#include <random>

#include "cmcforge/error.hpp"
#include "cmcforge/rng.hpp"

namespace cmcforge {

std::string_view to_string(Modality m) { return m == Modality::k2d ? "2d" : "3d"; }

MicroNet::MicroNet(int input_dim, int hidden_dim, int output_dim, Activation activation)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), output_dim_(output_dim), activation_(activation) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw ConfigError("MicroNet: dimensions must be positive");
  params_ = Eigen::VectorXd::Zero(parameter_count(input_dim, hidden_dim, output_dim));
}

Eigen::Index MicroNet::parameter_count(int input_dim, int hidden_dim, int output_dim) {
  return Eigen::Index(hidden_dim) * input_dim + hidden_dim + Eigen::Index(output_dim) * hidden_dim + output_dim;
}

Eigen::Map<const Eigen::MatrixXd> MicroNet::w1() const {
  return {params_.data(), hidden_dim_, input_dim_};
}
Eigen::Map<const Eigen::VectorXd> MicroNet::b1() const {
  return {params_.data() + Eigen::Index(hidden_dim_) * input_dim_, hidden_dim_};
}
Eigen::Map<const Eigen::MatrixXd> MicroNet::w2() const {
  return {params_.data() + Eigen::Index(hidden_dim_) * (input_dim_ + 1), output_dim_, hidden_dim_};
}
Eigen::Map<const Eigen::VectorXd> MicroNet::b2() const {
  return {params_.data() + Eigen::Index(hidden_dim_) * (input_dim_ + 1) + Eigen::Index(output_dim_) * hidden_dim_,
          output_dim_};
}

void MicroNet::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, {tag::kInit});
  params_.setZero();
  const double a1 = std::sqrt(6.0 / (input_dim_ + hidden_dim_));
  const double a2 = std::sqrt(6.0 / (hidden_dim_ + output_dim_));
  std::uniform_real_distribution<double> u1(-a1, a1);
  std::uniform_real_distribution<double> u2(-a2, a2);
  const Eigen::Index n1 = Eigen::Index(hidden_dim_) * input_dim_;
  const Eigen::Index off2 = n1 + hidden_dim_;
  for (Eigen::Index i = 0; i < n1; ++i) params_[i] = u1(rng);
  for (Eigen::Index i = 0; i < Eigen::Index(output_dim_) * hidden_dim_; ++i) params_[off2 + i] = u2(rng);
}

Eigen::MatrixXd forward(const MicroNet& net, const Eigen::Ref<const Eigen::MatrixXd>& input, ForwardCache* cache) {
  if (input.cols() != net.input_dim()) throw ContractError("forward: input width does not match the network");
  Eigen::MatrixXd hidden = input * net.w1().transpose();
  hidden.rowwise() += net.b1().transpose();
  if (net.activation() == Activation::kTanh) {
    // tanh(x) = 1 - 2 / (exp(2x) + 1); Eigen vectorizes exp but not tanh for doubles.
    hidden = (1.0 - 2.0 / ((2.0 * hidden.array()).exp() + 1.0)).matrix();
  }
  Eigen::MatrixXd logits = hidden * net.w2().transpose();
  logits.rowwise() += net.b2().transpose();
  if (cache) {
    cache->input = input;
    cache->hidden = std::move(hidden);
  }
  return logits;
}

Eigen::VectorXd backward(const MicroNet& net, const ForwardCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& upstream) {
  if (upstream.rows() != cache.hidden.rows() || upstream.cols() != net.output_dim())
    throw ContractError("backward: upstream gradient shape does not match forward output");
  const int in = net.input_dim();
  const int hid = net.hidden_dim();
  const int out = net.output_dim();
  Eigen::VectorXd grad(net.parameter_count());
  Eigen::Map<Eigen::MatrixXd> g_w1(grad.data(), hid, in);
  Eigen::Map<Eigen::VectorXd> g_b1(grad.data() + Eigen::Index(hid) * in, hid);
  Eigen::Map<Eigen::MatrixXd> g_w2(grad.data() + Eigen::Index(hid) * (in + 1), out, hid);
  Eigen::Map<Eigen::VectorXd> g_b2(grad.data() + Eigen::Index(hid) * (in + 1) + Eigen::Index(out) * hid, out);

  g_w2.noalias() = upstream.transpose() * cache.hidden;
  g_b2 = upstream.colwise().sum().transpose();
  Eigen::MatrixXd d_hidden = upstream * net.w2();
  if (net.activation() == Activation::kTanh)
    d_hidden.array() *= 1.0 - cache.hidden.array().square();
  g_w1.noalias() = d_hidden.transpose() * cache.input;
  g_b1 = d_hidden.colwise().sum().transpose();
  return grad;
}

Eigen::MatrixXd forward_2d(const MicroNet& net, const Eigen::Ref<const Eigen::MatrixXd>& view_features,
                           ForwardCache* cache) {
  return forward(net, view_features, cache);
}

Eigen::MatrixXd point_inputs(const ScenePointCloud& cloud, const ViewSample& sample) {
  const auto n = static_cast<Eigen::Index>(sample.size());
  Eigen::MatrixXd x(n, 3 + cloud.feature_dim());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = sample.point_indices[static_cast<std::size_t>(r)];
    if (i < 0 || i >= cloud.size()) throw ContractError("point_inputs: sample index out of range");
    x.row(r).head<3>() = cloud.positions.row(i) / cloud.scene_scale;
    x.row(r).tail(cloud.feature_dim()) = cloud.features.row(i);
  }
  return x;
}

Eigen::MatrixXd forward_3d(const MicroNet& net, const ViewSample& sample, const ScenePointCloud& cloud,
                           ForwardCache* cache) {
  return forward(net, point_inputs(cloud, sample), cache);
}

BranchState BranchState::create(Modality modality, MicroNet student) {
  BranchState s;
  s.modality = modality;
  s.teacher = student;
  s.first_moment = Eigen::VectorXd::Zero(student.parameter_count());
  s.second_moment = Eigen::VectorXd::Zero(student.parameter_count());
  s.student = std::move(student);
  return s;
}

void optimizer_step(BranchState& state, const Eigen::Ref<const Eigen::VectorXd>& grad, const AdamWParams& p) {
  if (grad.size() != state.student.parameter_count())
    throw ContractError("optimizer_step: gradient length does not match parameters");
  if (!grad.allFinite()) throw NumericError("optimizer_step: non-finite gradient");
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  Eigen::VectorXd& theta = state.student.params();
  theta *= 1.0 - p.lr * p.weight_decay;
  state.first_moment = p.beta1 * state.first_moment + (1.0 - p.beta1) * grad;
  state.second_moment = p.beta2 * state.second_moment + (1.0 - p.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(p.beta1, t);
  const double c2 = 1.0 - std::pow(p.beta2, t);
  theta.array() -= p.lr * (state.first_moment.array() / c1) / ((state.second_moment.array() / c2).sqrt() + p.eps);
}

void ema_update(BranchState& state, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("ema_update: alpha must lie in [0, 1]");
  state.teacher.params() = alpha * state.teacher.params() + (1.0 - alpha) * state.student.params();
}

}  // namespace cmcforge
