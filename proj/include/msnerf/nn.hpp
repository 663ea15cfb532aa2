#pragma once

// Dense layers over a flat parameter buffer. Batches are column-major: one
// column per sample.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace msnerf::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation { Identity, Relu, Tanh, Softplus, Sigmoid };

// Location of one layer's weights (out x in, column-major) followed by its
// bias (out) inside a flat buffer.
struct Dense {
  std::size_t offset = 0;
  int in = 0;
  int out = 0;
  Activation activation = Activation::Identity;

  std::size_t size() const { return static_cast<std::size_t>(out) * (in + 1); }
  std::size_t bias_offset() const { return offset + static_cast<std::size_t>(out) * in; }
};

// Appends a layer to a running layout and returns it.
inline Dense append_layer(std::size_t& cursor, int in, int out, Activation act) {
  Dense d{cursor, in, out, act};
  cursor += d.size();
  return d;
}

template <typename Scalar>
auto weight(const std::vector<Scalar>& p, const Dense& d) {
  return Eigen::Map<const Matrix<Scalar>>(p.data() + d.offset, d.out, d.in);
}
template <typename Scalar>
auto weight(std::vector<Scalar>& p, const Dense& d) {
  return Eigen::Map<Matrix<Scalar>>(p.data() + d.offset, d.out, d.in);
}
template <typename Scalar>
auto bias(const std::vector<Scalar>& p, const Dense& d) {
  return Eigen::Map<const Vector<Scalar>>(p.data() + d.bias_offset(), d.out);
}
template <typename Scalar>
auto bias(std::vector<Scalar>& p, const Dense& d) {
  return Eigen::Map<Vector<Scalar>>(p.data() + d.bias_offset(), d.out);
}

template <typename Derived>
void activate(Activation act, Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      z = z.cwiseMax(Scalar(0));
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::Softplus:
      // log(1 + e^z) = max(z, 0) + log1p(e^-|z|)
      z = z.unaryExpr([](Scalar v) {
        return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v)));
      });
      break;
    case Activation::Sigmoid:
      z = z.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
      break;
  }
}

// Multiplies grad (w.r.t. the activation output y) in place by dy/dz,
// expressed through y alone.
template <typename DerivedG, typename DerivedY>
void activation_backward(Activation act, Eigen::MatrixBase<DerivedG>& grad,
                         const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedG::Scalar;
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      grad = (y.array() > Scalar(0)).select(grad, Scalar(0));
      break;
    case Activation::Tanh:
      grad.array() *= Scalar(1) - y.array().square();
      break;
    case Activation::Softplus:
      // σ(z) = 1 - e^{-y}
      grad.array() *= Scalar(1) - (-y.array()).exp();
      break;
    case Activation::Sigmoid:
      grad.array() *= y.array() * (Scalar(1) - y.array());
      break;
  }
}

// y = act(W x + b) for a batch x (in x N).
template <typename Scalar, typename Derived>
Matrix<Scalar> forward(const std::vector<Scalar>& params, const Dense& d,
                       const Eigen::MatrixBase<Derived>& x) {
  Matrix<Scalar> y(d.out, x.cols());
  y.noalias() = weight(params, d) * x;
  y.colwise() += bias(params, d);
  activate(d.activation, y);
  return y;
}

// Given dL/dy (modified in place into dL/dz), accumulates dL/dW, dL/db into
// grads and returns dL/dx when want_input is set.
template <typename Scalar, typename DerivedX>
Matrix<Scalar> backward(const std::vector<Scalar>& params, const Dense& d,
                        const Eigen::MatrixBase<DerivedX>& x, const Matrix<Scalar>& y,
                        Matrix<Scalar>& grad_y, std::vector<Scalar>& grads,
                        bool want_input = true) {
  activation_backward(d.activation, grad_y, y);
  // Reduce into aligned temporaries first: Eigen's summation order depends on
  // the destination address, and grads may sit anywhere in a thread's heap.
  const Matrix<Scalar> gw = grad_y * x.transpose();
  const Vector<Scalar> gb = grad_y.rowwise().sum();
  weight(grads, d) += gw;
  bias(grads, d) += gb;
  if (!want_input) return {};
  Matrix<Scalar> grad_x(d.in, x.cols());
  grad_x.noalias() = weight(params, d).transpose() * grad_y;
  return grad_x;
}

// Portable uniform draw in [0, 1) from the 53 high bits of a 64-bit word.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform fan-in initialisation U(-sqrt(6/in), sqrt(6/in)) for weights,
// zero biases.
template <typename Scalar>
void kaiming_uniform(std::vector<Scalar>& params, const Dense& d, std::mt19937_64& rng,
                     double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / d.in);
  auto w = weight(params, d);
  for (int c = 0; c < d.in; ++c) {
    for (int r = 0; r < d.out; ++r) {
      w(r, c) = static_cast<Scalar>((2.0 * unit_uniform(rng) - 1.0) * bound);
    }
  }
  bias(params, d).setZero();
}

}  // namespace msnerf::nn
