#include "msnerf/encoding.hpp"

#include "msnerf/log.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace msnerf {

void FrequencyEncodingConfig::validate() const {
  if (l_pos < 0 || l_dir < 0 || l_time < 0) {
    throw std::invalid_argument("encoding octave counts must be non-negative");
  }
}

int encoded_dim(int k, int octaves, bool include_input) {
  return (include_input ? k : 0) + 2 * octaves * k;
}

std::vector<double> positional_encode(std::span<const double> x, int octaves,
                                      bool include_input) {
  if (octaves < 0) throw std::invalid_argument("octave count must be non-negative");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("encoding input must be finite");
  }
  const int k = static_cast<int>(x.size());
  std::vector<double> out;
  out.reserve(encoded_dim(k, octaves, include_input));
  if (include_input) out.insert(out.end(), x.begin(), x.end());
  double freq = M_PI;
  for (int j = 0; j < octaves; ++j, freq *= 2.0) {
    for (double v : x) out.push_back(std::sin(freq * v));
    for (double v : x) out.push_back(std::cos(freq * v));
  }
  return out;
}

template <typename Scalar>
nn::Matrix<Scalar> encode_batch(const nn::Matrix<Scalar>& x, int octaves,
                                bool include_input) {
  const int k = static_cast<int>(x.rows());
  const Eigen::Index n = x.cols();
  nn::Matrix<Scalar> out(encoded_dim(k, octaves, include_input), n);
  const int base = include_input ? k : 0;
  for (Eigen::Index col = 0; col < n; ++col) {
    for (int c = 0; c < k; ++c) {
      const double v = static_cast<double>(x(c, col));
      if (include_input) out(c, col) = x(c, col);
      // Double-angle recurrence from the base octave.
      double s = std::sin(M_PI * v);
      double co = std::cos(M_PI * v);
      for (int j = 0; j < octaves; ++j) {
        out(base + 2 * j * k + c, col) = static_cast<Scalar>(s);
        out(base + (2 * j + 1) * k + c, col) = static_cast<Scalar>(co);
        const double s2 = 2.0 * s * co;
        co = (co - s) * (co + s);
        s = s2;
      }
    }
  }
  return out;
}

template <typename Scalar>
nn::Matrix<Scalar> encode_batch_backward(const nn::Matrix<Scalar>& grad_encoded,
                                         const nn::Matrix<Scalar>& encoded, int k,
                                         int octaves, bool include_input) {
  const Eigen::Index n = encoded.cols();
  nn::Matrix<Scalar> grad(k, n);
  if (include_input) {
    grad = grad_encoded.topRows(k);
  } else {
    grad.setZero();
  }
  const int base = include_input ? k : 0;
  Scalar freq = static_cast<Scalar>(M_PI);
  for (int j = 0; j < octaves; ++j, freq *= Scalar(2)) {
    const auto sin_rows = encoded.middleRows(base + 2 * j * k, k).array();
    const auto cos_rows = encoded.middleRows(base + (2 * j + 1) * k, k).array();
    const auto gs = grad_encoded.middleRows(base + 2 * j * k, k).array();
    const auto gc = grad_encoded.middleRows(base + (2 * j + 1) * k, k).array();
    grad.array() += freq * (gs * cos_rows - gc * sin_rows);
  }
  return grad;
}

template nn::Matrix<float> encode_batch(const nn::Matrix<float>&, int, bool);
template nn::Matrix<double> encode_batch(const nn::Matrix<double>&, int, bool);
template nn::Matrix<float> encode_batch_backward(const nn::Matrix<float>&,
                                                 const nn::Matrix<float>&, int, int, bool);
template nn::Matrix<double> encode_batch_backward(const nn::Matrix<double>&,
                                                  const nn::Matrix<double>&, int, int,
                                                  bool);

void TimeEncoderConfig::validate() const {
  if (octaves < 0) throw std::invalid_argument("time octaves must be non-negative");
  if (latent_dim < 1) throw std::invalid_argument("time latent dimension must be >= 1");
  if (hidden_layers < 0 || (hidden_layers > 0 && hidden_width < 1)) {
    throw std::invalid_argument("invalid time encoder hidden layout");
  }
  if (!include_input && octaves == 0) {
    throw std::invalid_argument("time encoding would be empty");
  }
}

template <typename Scalar>
TimeEncoder<Scalar>::TimeEncoder(const TimeEncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  std::size_t cursor = 0;
  int in = encoded_dim(1, cfg_.octaves, cfg_.include_input);
  for (int l = 0; l < cfg_.hidden_layers; ++l) {
    layers_.push_back(nn::append_layer(cursor, in, cfg_.hidden_width, nn::Activation::Tanh));
    in = cfg_.hidden_width;
  }
  layers_.push_back(nn::append_layer(cursor, in, cfg_.latent_dim, nn::Activation::Identity));
  params_.assign(cursor, Scalar(0));
  for (const auto& layer : layers_) nn::kaiming_uniform(params_, layer, rng);
}

template <typename Scalar>
nn::Vector<Scalar> TimeEncoder<Scalar>::encode(double t) const {
  return forward(std::span<const double>(&t, 1), nullptr).col(0);
}

template <typename Scalar>
nn::Matrix<Scalar> TimeEncoder<Scalar>::forward(std::span<const double> times,
                                                Tape* tape) const {
  nn::Matrix<Scalar> t(1, static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    double v = times[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      log::warn("time " + std::to_string(v) + " outside [0, 1], clamping");
      v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    }
    t(0, static_cast<Eigen::Index>(i)) = static_cast<Scalar>(v);
  }
  nn::Matrix<Scalar> h = encode_batch(t, cfg_.octaves, cfg_.include_input);
  if (tape) tape->activations.assign(1, h);
  for (const auto& layer : layers_) {
    h = nn::forward(params_, layer, h);
    if (tape) tape->activations.push_back(h);
  }
  return h;
}

template <typename Scalar>
void TimeEncoder<Scalar>::backward(const Tape& tape, const nn::Matrix<Scalar>& grad_latent,
                                   std::vector<Scalar>& grads) const {
  nn::Matrix<Scalar> g = grad_latent;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    g = nn::backward(params_, layers_[l], tape.activations[l], tape.activations[l + 1], g,
                     grads, l > 0);
  }
}

template class TimeEncoder<float>;
template class TimeEncoder<double>;

}  // namespace msnerf
