#pragma once

// Frequency features for coordinates and the learned latent time code.

#include "msnerf/nn.hpp"

#include <random>
#include <span>
#include <vector>

namespace msnerf {

struct FrequencyEncodingConfig {
  int l_pos = 10;
  int l_dir = 4;
  int l_time = 4;
  bool include_input = true;

  void validate() const;
};

// Length of the encoding of a k-vector with L octaves.
int encoded_dim(int k, int octaves, bool include_input = true);

// [x?, sin(2^0 π x), cos(2^0 π x), ..., sin(2^{L-1} π x), cos(2^{L-1} π x)],
// where each sin/cos block covers all k components.
std::vector<double> positional_encode(std::span<const double> x, int octaves,
                                      bool include_input = true);

// Batch version: x is k x N, the result encoded_dim(k, L) x N. The
// trigonometry runs in double precision whatever Scalar is.
template <typename Scalar>
nn::Matrix<Scalar> encode_batch(const nn::Matrix<Scalar>& x, int octaves,
                                bool include_input);

// dL/dx from dL/d(encoding), using the stored encoding for the derivatives.
template <typename Scalar>
nn::Matrix<Scalar> encode_batch_backward(const nn::Matrix<Scalar>& grad_encoded,
                                         const nn::Matrix<Scalar>& encoded, int k,
                                         int octaves, bool include_input);

struct TimeEncoderConfig {
  int octaves = 4;
  int hidden_layers = 2;
  int hidden_width = 64;
  int latent_dim = 8;
  bool include_input = true;

  void validate() const;
};

// t' = W(t): t is frequency-encoded, then mapped through a small tanh MLP
// with a linear output of size latent_dim.
template <typename Scalar>
class TimeEncoder {
 public:
  struct Tape {
    std::vector<nn::Matrix<Scalar>> activations;  // input encoding, then each layer
  };

  TimeEncoder() = default;
  TimeEncoder(const TimeEncoderConfig& cfg, std::mt19937_64& rng);

  const TimeEncoderConfig& config() const { return cfg_; }
  int latent_dim() const { return cfg_.latent_dim; }

  std::vector<Scalar>& params() { return params_; }
  const std::vector<Scalar>& params() const { return params_; }
  const std::vector<nn::Dense>& layers() const { return layers_; }

  // Times outside [0, 1] are clamped with a warning.
  nn::Vector<Scalar> encode(double t) const;

  // latent_dim x times.size(). Records activations when tape is non-null.
  nn::Matrix<Scalar> forward(std::span<const double> times, Tape* tape) const;

  // Accumulates dL/dparams given dL/dt' (latent_dim x M) for the same batch.
  void backward(const Tape& tape, const nn::Matrix<Scalar>& grad_latent,
                std::vector<Scalar>& grads) const;

 private:
  TimeEncoderConfig cfg_;
  std::vector<nn::Dense> layers_;
  std::vector<Scalar> params_;
};

}  // namespace msnerf
