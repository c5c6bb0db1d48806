#include "fesrl/mlp.hpp"

#include <cmath>
#include <string>

#include "fesrl/error.hpp"

namespace fesrl::rl {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw ShapeMismatchError("an MLP needs at least an input and an output size");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ShapeMismatchError("layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = VectorXd::Zero(total);
}

Mlp Mlp::random(std::vector<int> layer_sizes, std::mt19937_64& rng) {
  Mlp net(std::move(layer_sizes));
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = net.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
  }
  return net;
}

Eigen::Map<MatrixXd> Mlp::weight(int layer) {
  return {params_.data() + weight_offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<const MatrixXd> Mlp::weight(int layer) const {
  return {params_.data() + weight_offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<VectorXd> Mlp::bias(int layer) { return {params_.data() + bias_offset(layer), sizes_[layer + 1]}; }
Eigen::Map<const VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

MatrixXd Mlp::forward(const MatrixXd& input, Cache* cache) const {
  if (sizes_.empty()) throw ShapeMismatchError("forward on an empty network");
  if (input.rows() != input_size())
    throw ShapeMismatchError("input has " + std::to_string(input.rows()) + " rows, expected " +
                             std::to_string(input_size()));
  Cache local;
  auto& acts = cache ? cache->activations : local.activations;
  acts.resize(sizes_.size());
  acts[0] = input;
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd& z = acts[l + 1];
    z.noalias() = weight(l) * acts[l];
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z.array() = z.array().max(0.0);
  }
  return acts.back();
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  const MatrixXd in = Eigen::Map<const MatrixXd>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
  const MatrixXd out = forward(in);
  return {out.data(), out.data() + out.size()};
}

void Mlp::backward(const Cache& cache, const MatrixXd& output_grad, VectorXd& grad, MatrixXd* input_grad) const {
  if (grad.size() != params_.size()) grad = VectorXd::Zero(params_.size());
  if (output_grad.rows() != output_size() || output_grad.cols() != cache.activations.front().cols())
    throw ShapeMismatchError("output gradient shape does not match the cached forward pass");

  MatrixXd delta = output_grad;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const MatrixXd& below = cache.activations[l];
    Eigen::Map<MatrixXd>(grad.data() + weight_offset(l), sizes_[l + 1], sizes_[l]).noalias() +=
        delta * below.transpose();
    Eigen::Map<VectorXd>(grad.data() + bias_offset(l), sizes_[l + 1]) += delta.rowwise().sum();
    if (l > 0) {
      MatrixXd next;
      next.noalias() = weight(l).transpose() * delta;
      // ReLU: the unit passed gradient only where its output was positive.
      next.array() *= (below.array() > 0.0).cast<double>();
      delta.swap(next);
    } else if (input_grad) {
      *input_grad = weight(0).transpose() * delta;
    }
  }
}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  if (m.size() != params.size()) {
    m = VectorXd::Zero(params.size());
    v = VectorXd::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace fesrl::rl
