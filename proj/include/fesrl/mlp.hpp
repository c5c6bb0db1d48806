#pragma once

// Fully connected network with ReLU hidden layers and a linear output layer.
// All weights and biases live in one flat vector so optimizers, target-network
// averaging and checkpoints can treat a network as a single parameter array.
// Batches are column-major: one sample per column.

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fesrl::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Mlp {
 public:
  struct Cache {
    // activations[0] is the input, activations[l] the output of layer l.
    std::vector<MatrixXd> activations;
  };

  Mlp() = default;
  /// Zero-initialized network. Throws ShapeMismatchError for fewer than two
  /// sizes or non-positive sizes.
  explicit Mlp(std::vector<int> layer_sizes);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static Mlp random(std::vector<int> layer_sizes, std::mt19937_64& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }

  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  Eigen::Map<MatrixXd> weight(int layer);
  Eigen::Map<const MatrixXd> weight(int layer) const;
  Eigen::Map<VectorXd> bias(int layer);
  Eigen::Map<const VectorXd> bias(int layer) const;

  /// input: input_size x batch. Throws ShapeMismatchError.
  MatrixXd forward(const MatrixXd& input, Cache* cache = nullptr) const;
  std::vector<double> forward(std::span<const double> input) const;

  /// Reverse pass for a cached forward call. Adds d(sum of output_grad .*
  /// output)/d(params) into grad and, if requested, writes the input gradient.
  void backward(const Cache& cache, const MatrixXd& output_grad, VectorXd& grad,
                MatrixXd* input_grad = nullptr) const;

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1];
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  VectorXd params_;
};

/// Adam over a flat parameter vector.
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  VectorXd m;
  VectorXd v;
  long long t = 0;

  void step(VectorXd& params, const VectorXd& grad);
};

}  // namespace fesrl::rl
