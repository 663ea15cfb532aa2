#include "msnerf/field.hpp"

#include <sstream>
#include <stdexcept>

namespace msnerf {

TimeEncoderConfig FieldConfig::time_config() const {
  TimeEncoderConfig t;
  t.octaves = encoding.l_time;
  t.hidden_layers = time_hidden_layers;
  t.hidden_width = time_hidden_width;
  t.latent_dim = time_latent_dim;
  t.include_input = encoding.include_input;
  return t;
}

void FieldConfig::validate() const {
  encoding.validate();
  if (hidden_layers < 1 || hidden_width < 1 || color_width < 1) {
    throw std::invalid_argument("field layer counts and widths must be positive");
  }
  if (skip_layer != 0 && (skip_layer < 2 || skip_layer > hidden_layers)) {
    throw std::invalid_argument("skip_layer must be 0 or in [2, hidden_layers]");
  }
  if (!(position_scale > 0.0)) throw std::invalid_argument("position_scale must be positive");
  if (encoded_dim(3, encoding.l_pos, encoding.include_input) == 0 ||
      encoded_dim(3, encoding.l_dir, encoding.include_input) == 0) {
    throw std::invalid_argument("position and direction encodings must be non-empty");
  }
  if (use_time) time_config().validate();
}

template <typename Scalar>
RadianceField<Scalar>::RadianceField(const FieldConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int pos_dim = encoded_dim(3, cfg_.encoding.l_pos, cfg_.encoding.include_input);
  const int dir_dim = encoded_dim(3, cfg_.encoding.l_dir, cfg_.encoding.include_input);
  const int x0_dim = pos_dim + latent_input_dim();
  const int w = cfg_.hidden_width;

  std::size_t cursor = 0;
  for (int l = 1; l <= cfg_.hidden_layers; ++l) {
    int in = l == 1 ? x0_dim : w;
    if (l == cfg_.skip_layer) in += x0_dim;
    trunk_.push_back(nn::append_layer(cursor, in, w, nn::Activation::Relu));
  }
  density_ = nn::append_layer(cursor, w, 1, nn::Activation::Softplus);
  color_hidden_ =
      nn::append_layer(cursor, w + dir_dim, cfg_.color_width, nn::Activation::Relu);
  color_ = nn::append_layer(cursor, cfg_.color_width, 3, nn::Activation::Sigmoid);

  network_.assign(cursor, Scalar(0));
  std::mt19937_64 rng(cfg_.seed);
  for (const auto& layer : trunk_) nn::kaiming_uniform(network_, layer, rng);
  nn::kaiming_uniform(network_, density_, rng);
  nn::kaiming_uniform(network_, color_hidden_, rng);
  nn::kaiming_uniform(network_, color_, rng);

  std::mt19937_64 time_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
  TimeEncoderConfig tcfg = cfg_.time_config();
  if (!cfg_.use_time) {
    // Keeps a well-formed (unused) encoder so checkpoints stay uniform.
    tcfg.include_input = true;
  }
  time_ = TimeEncoder<Scalar>(tcfg, time_rng);
}

namespace {

template <typename Matrix>
Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

template <typename Scalar>
typename RadianceField<Scalar>::Output RadianceField<Scalar>::forward(
    const Matrix& positions, const Matrix& directions, const Matrix& latents,
    Tape* tape) const {
  const Eigen::Index n = positions.cols();
  if (positions.rows() != 3 || directions.rows() != 3 || directions.cols() != n ||
      latents.rows() != latent_input_dim() || (latents.rows() > 0 && latents.cols() != n)) {
    std::ostringstream msg;
    msg << "field input shapes: positions " << positions.rows() << "x" << n
        << ", directions " << directions.rows() << "x" << directions.cols() << ", latents "
        << latents.rows() << "x" << latents.cols() << " (expected " << latent_input_dim()
        << " latent rows)";
    throw std::invalid_argument(msg.str());
  }
  const auto& enc = cfg_.encoding;
  const Scalar inv_scale = static_cast<Scalar>(1.0 / cfg_.position_scale);
  Matrix normalized =
      (positions.colwise() - cfg_.position_center.cast<Scalar>()) * inv_scale;
  Matrix pos_enc = encode_batch(normalized, enc.l_pos, enc.include_input);
  Matrix dir_enc = encode_batch(directions, enc.l_dir, enc.include_input);

  Matrix x0 = latents.rows() > 0 ? vstack(pos_enc, latents) : pos_enc;
  Tape local;
  Tape& t = tape ? *tape : local;
  t.layer_inputs.clear();
  Matrix h = x0;
  for (int l = 1; l <= cfg_.hidden_layers; ++l) {
    Matrix in = l == cfg_.skip_layer ? vstack(h, x0) : std::move(h);
    h = nn::forward(network_, trunk_[l - 1], in);
    if (tape) t.layer_inputs.push_back(std::move(in));
  }
  Output out;
  out.sigma = nn::forward(network_, density_, h);
  Matrix color_in = vstack(h, dir_enc);
  Matrix color_hidden = nn::forward(network_, color_hidden_, color_in);
  out.rgb = nn::forward(network_, color_, color_hidden);
  if (tape) {
    t.position_encoding = std::move(pos_enc);
    t.direction_encoding = std::move(dir_enc);
    t.feature = std::move(h);
    t.color_input = std::move(color_in);
    t.color_hidden = std::move(color_hidden);
    t.out = out;
  }
  return out;
}

template <typename Scalar>
typename RadianceField<Scalar>::InputGradients RadianceField<Scalar>::backward(
    const Tape& tape, const Matrix& grad_sigma, const Matrix& grad_rgb,
    std::vector<Scalar>& grad_network, bool want_inputs) const {
  const auto& enc = cfg_.encoding;
  const int w = cfg_.hidden_width;

  Matrix g_rgb = grad_rgb;
  Matrix g_color_hidden =
      nn::backward(network_, color_, tape.color_hidden, tape.out.rgb, g_rgb, grad_network);
  Matrix g_color_in = nn::backward(network_, color_hidden_, tape.color_input,
                                   tape.color_hidden, g_color_hidden, grad_network);
  Matrix g_h = g_color_in.topRows(w);
  Matrix g_sigma = grad_sigma;
  g_h += nn::backward(network_, density_, tape.feature, tape.out.sigma, g_sigma, grad_network);

  const Eigen::Index x0_dim = tape.layer_inputs.front().rows();
  Matrix g_x0 = Matrix::Zero(want_inputs ? x0_dim : 0, g_h.cols());
  for (int l = cfg_.hidden_layers; l >= 1; --l) {
    // Output of layer l is the input of layer l + 1 (or the feature).
    const Matrix& y = l == cfg_.hidden_layers ? tape.feature
                                              : tape.layer_inputs[l].topRows(w).eval();
    const bool need_input = l > 1 || want_inputs;
    Matrix g_in = nn::backward(network_, trunk_[l - 1], tape.layer_inputs[l - 1], y, g_h,
                               grad_network, need_input);
    if (!need_input) break;
    if (l == cfg_.skip_layer) {
      if (want_inputs) g_x0 += g_in.bottomRows(x0_dim);
      g_h = g_in.topRows(g_in.rows() - x0_dim);
    } else if (l == 1) {
      g_x0 += g_in;
    } else {
      g_h = std::move(g_in);
    }
  }

  InputGradients out;
  if (!want_inputs) return out;
  const Eigen::Index pos_dim = tape.position_encoding.rows();
  out.positions = encode_batch_backward<Scalar>(g_x0.topRows(pos_dim), tape.position_encoding,
                                                3, enc.l_pos, enc.include_input) *
                  static_cast<Scalar>(1.0 / cfg_.position_scale);
  out.latents = g_x0.bottomRows(x0_dim - pos_dim);
  out.directions = encode_batch_backward<Scalar>(g_color_in.bottomRows(g_color_in.rows() - w),
                                                 tape.direction_encoding, 3, enc.l_dir,
                                                 enc.include_input);
  return out;
}

template <typename Scalar>
FieldOutput RadianceField<Scalar>::evaluate(const Vec3& p, const Eigen::VectorXd& latent,
                                            const Vec3& d) const {
  Matrix pos = p.cast<Scalar>();
  Matrix dir = d.cast<Scalar>();
  Matrix lat = latent.cast<Scalar>();
  if (latent.size() == 0) lat.resize(0, 1);
  Output o = forward(pos, dir, lat, nullptr);
  FieldOutput r;
  r.sigma = static_cast<double>(o.sigma(0, 0));
  r.rgb = o.rgb.col(0).template cast<double>();
  return r;
}

template class RadianceField<float>;
template class RadianceField<double>;

}  // namespace msnerf
