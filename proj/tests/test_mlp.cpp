#include <doctest.h>

#include <cmath>
#include <random>

#include "fesrl/error.hpp"
#include "fesrl/mlp.hpp"

using namespace fesrl;
using namespace fesrl::rl;

namespace {

// Straightforward re-implementation over plain loops, one sample at a time.
std::vector<double> loop_forward(const Mlp& net, std::vector<double> x) {
  const auto& sizes = net.layer_sizes();
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weight(l);
    const auto b = net.bias(l);
    std::vector<double> y(static_cast<std::size_t>(sizes[l + 1]));
    for (int i = 0; i < sizes[l + 1]; ++i) {
      double acc = b(i);
      for (int j = 0; j < sizes[l]; ++j) acc += w(i, j) * x[j];
      y[i] = (l + 1 < net.num_layers()) ? std::max(acc, 0.0) : acc;
    }
    x = std::move(y);
  }
  return x;
}

double weighted_output(const Mlp& net, const MatrixXd& in, const MatrixXd& g) {
  return (net.forward(in).array() * g.array()).sum();
}

double rel_error(const VectorXd& a, const VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

}  // namespace

TEST_CASE("zero network outputs zero") {
  const Mlp net({4, 64, 64, 3});
  const MatrixXd out = net.forward(MatrixXd::Random(4, 7));
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 7);
  CHECK(out.isZero(0.0));
  CHECK(net.num_params() == 4 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
}

TEST_CASE("single path passes an input component through") {
  Mlp net({3, 2, 1});
  net.weight(0)(0, 1) = 1.0;  // hidden 0 <- input 1
  net.weight(1)(0, 0) = 1.0;  // output <- hidden 0
  const std::vector<double> in{-4.0, 2.5, 9.0};
  CHECK(net.forward(std::span<const double>(in))[0] == 2.5);
}

TEST_CASE("forward matches a loop implementation") {
  std::mt19937_64 rng(7);
  const Mlp net = Mlp::random({5, 64, 64, 4}, rng);
  const MatrixXd in = MatrixXd::Random(5, 20);
  const MatrixXd out = net.forward(in);
  for (int c = 0; c < in.cols(); ++c) {
    const std::vector<double> x(in.col(c).data(), in.col(c).data() + 5);
    const auto ref = loop_forward(net, x);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(out(i, c) - ref[i]) < 1e-12);
  }
}

TEST_CASE("shape errors") {
  const Mlp net({3, 4, 1});
  CHECK_THROWS_AS(net.forward(MatrixXd::Zero(2, 1)), ShapeMismatchError);
  CHECK_THROWS_AS(Mlp({3}), ShapeMismatchError);
  CHECK_THROWS_AS(Mlp({3, 0, 1}), ShapeMismatchError);
  Mlp::Cache cache;
  net.forward(MatrixXd::Zero(3, 2), &cache);
  VectorXd grad;
  CHECK_THROWS_AS(net.backward(cache, MatrixXd::Zero(1, 3), grad), ShapeMismatchError);
}

TEST_CASE("backward matches central finite differences") {
  std::mt19937_64 rng(3);
  Mlp net = Mlp::random({6, 64, 64, 3}, rng);
  const MatrixXd in = MatrixXd::Random(6, 5);
  const MatrixXd g = MatrixXd::Random(3, 5);
  Mlp::Cache cache;
  net.forward(in, &cache);
  VectorXd grad;
  MatrixXd input_grad;
  net.backward(cache, g, grad, &input_grad);

  const double h = 1e-5;
  VectorXd fd(net.num_params());
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    const double keep = net.params()(i);
    net.params()(i) = keep + h;
    const double up = weighted_output(net, in, g);
    net.params()(i) = keep - h;
    const double down = weighted_output(net, in, g);
    net.params()(i) = keep;
    fd(i) = (up - down) / (2 * h);
  }
  CHECK(rel_error(grad, fd) < 1e-4);

  MatrixXd fd_in(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r)
    for (Eigen::Index c = 0; c < in.cols(); ++c) {
      MatrixXd plus = in, minus = in;
      plus(r, c) += h;
      minus(r, c) -= h;
      fd_in(r, c) = (weighted_output(net, plus, g) - weighted_output(net, minus, g)) / (2 * h);
    }
  CHECK(rel_error(input_grad.reshaped(), fd_in.reshaped()) < 1e-4);
}

TEST_CASE("backward edge cases") {
  std::mt19937_64 rng(4);
  Mlp net = Mlp::random({2, 3, 1}, rng);
  const MatrixXd in = MatrixXd::Random(2, 4);
  Mlp::Cache cache;
  net.forward(in, &cache);
  VectorXd grad;
  net.backward(cache, MatrixXd::Zero(1, 4), grad);
  CHECK(grad.isZero(0.0));

  // Hidden unit 0 is dead for every sample: its incoming weights get no gradient.
  net.weight(0).row(0).setZero();
  net.bias(0)(0) = -1.0;
  net.forward(in, &cache);
  grad.setZero();
  net.backward(cache, MatrixXd::Ones(1, 4), grad);
  Mlp probe({2, 3, 1});
  probe.params() = grad;
  CHECK(probe.weight(0).row(0).isZero(0.0));
  CHECK(probe.bias(0)(0) == 0.0);
  CHECK(probe.weight(1)(0, 0) == 0.0);

  // Gradients accumulate.
  VectorXd twice = grad;
  net.backward(cache, MatrixXd::Ones(1, 4), twice);
  CHECK((twice - 2.0 * grad).norm() < 1e-12);
}

TEST_CASE("adam first step and convergence") {
  Adam opt;
  opt.lr = 0.1;
  VectorXd p(3);
  p << 1.0, -2.0, 0.5;
  VectorXd g(3);
  g << 4.0, -0.001, 0.0;
  opt.step(p, g);
  // Bias-corrected first step moves each parameter by lr * g / (|g| + eps').
  CHECK(p(0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p(1) == doctest::Approx(-1.9).epsilon(1e-4));
  CHECK(p(2) == 0.5);

  Adam fresh;
  fresh.lr = 0.05;
  VectorXd x = VectorXd::Constant(2, 3.0);
  for (int k = 0; k < 2000; ++k) {
    const VectorXd grad = 2.0 * (x - VectorXd::Constant(2, -1.0));
    fresh.step(x, grad);
  }
  CHECK((x - VectorXd::Constant(2, -1.0)).norm() < 1e-3);
}
