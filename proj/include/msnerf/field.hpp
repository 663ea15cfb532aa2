#pragma once

// Two-stage space-time radiance network.
//
//   x0      = [γ(p̃), t']                  p̃ = (p - center) / scale
//   h_1..L  = ReLU trunk over x0, with x0 re-injected at skip_layer
//   σ       = softplus(w_σ · h_L + b_σ)
//   c       = sigmoid(W_c ReLU(W_h [h_L, γ(d)] + b_h) + b_c)
//
// h_L is the feature vector l_c. σ never sees the direction.

#include "msnerf/encoding.hpp"
#include "msnerf/geometry.hpp"
#include "msnerf/nn.hpp"

#include <cstdint>
#include <vector>

namespace msnerf {

struct FieldConfig {
  FrequencyEncodingConfig encoding;
  int hidden_layers = 8;
  int hidden_width = 256;
  int skip_layer = 5;  // 1-based layer receiving x0 again; 0 disables
  int color_width = 128;
  int time_hidden_layers = 2;
  int time_hidden_width = 64;
  int time_latent_dim = 8;
  bool use_time = true;
  Vec3 position_center = Vec3::Zero();
  double position_scale = 1.0;
  std::uint64_t seed = 0;

  TimeEncoderConfig time_config() const;
  void validate() const;
};

struct FieldOutput {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
};

template <typename Scalar>
class RadianceField {
 public:
  using Matrix = nn::Matrix<Scalar>;

  struct Output {
    Matrix sigma;  // 1 x N
    Matrix rgb;    // 3 x N
  };

  struct Tape {
    Matrix position_encoding;
    Matrix direction_encoding;
    std::vector<Matrix> layer_inputs;  // trunk layer inputs (x0 first)
    Matrix feature;                    // h_L
    Matrix color_input;
    Matrix color_hidden;
    Output out;
  };

  struct InputGradients {
    Matrix positions;   // 3 x N
    Matrix directions;  // 3 x N
    Matrix latents;     // latent_input_dim x N
  };

  RadianceField() = default;
  explicit RadianceField(const FieldConfig& cfg);

  const FieldConfig& config() const { return cfg_; }

  // Rows expected in the latents matrix: time_latent_dim, or 0 without time.
  int latent_input_dim() const { return cfg_.use_time ? cfg_.time_latent_dim : 0; }

  std::vector<Scalar>& network_params() { return network_; }
  const std::vector<Scalar>& network_params() const { return network_; }
  TimeEncoder<Scalar>& time_encoder() { return time_; }
  const TimeEncoder<Scalar>& time_encoder() const { return time_; }

  const std::vector<nn::Dense>& trunk_layers() const { return trunk_; }
  const nn::Dense& density_layer() const { return density_; }
  const nn::Dense& color_hidden_layer() const { return color_hidden_; }
  const nn::Dense& color_layer() const { return color_; }

  // positions, directions: 3 x N (world frame); latents: latent_input_dim x N.
  // Throws std::invalid_argument on shape mismatch.
  Output forward(const Matrix& positions, const Matrix& directions, const Matrix& latents,
                 Tape* tape) const;

  // Accumulates dL/d(network params) into grad_network. Input gradients are
  // returned only when want_inputs is set.
  InputGradients backward(const Tape& tape, const Matrix& grad_sigma, const Matrix& grad_rgb,
                          std::vector<Scalar>& grad_network, bool want_inputs) const;

  // Single-point convenience wrapper.
  FieldOutput evaluate(const Vec3& p, const Eigen::VectorXd& latent, const Vec3& d) const;

 private:
  FieldConfig cfg_;
  std::vector<nn::Dense> trunk_;
  nn::Dense density_;
  nn::Dense color_hidden_;
  nn::Dense color_;
  std::vector<Scalar> network_;
  TimeEncoder<Scalar> time_;
};

}  // namespace msnerf
