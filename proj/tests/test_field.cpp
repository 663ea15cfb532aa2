#include "msnerf/field.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace msnerf;
using msnerf::test::central_difference;
using msnerf::test::relative_error;

namespace {

FieldConfig tiny_config(bool use_time) {
  FieldConfig c;
  c.hidden_layers = 3;
  c.hidden_width = 8;
  c.skip_layer = 2;
  c.color_width = 8;
  c.time_hidden_width = 8;
  c.time_latent_dim = 4;
  c.encoding.l_pos = 3;
  c.encoding.l_dir = 2;
  c.encoding.l_time = 2;
  c.use_time = use_time;
  c.position_center = Vec3(0.1, 0.0, -2.0);
  c.position_scale = 3.0;
  c.seed = 17;
  return c;
}

struct Batch {
  nn::Matrix<double> positions, directions, latents, w_sigma, w_rgb;
};

Batch make_batch(int n, int latent_dim) {
  Batch b;
  b.positions.resize(3, n);
  b.directions.resize(3, n);
  b.latents.resize(latent_dim, n);
  b.w_sigma.resize(1, n);
  b.w_rgb.resize(3, n);
  for (int i = 0; i < n; ++i) {
    b.positions.col(i) = Vec3(0.4 * std::sin(i), -0.3 + 0.1 * i, -2.0 - 0.2 * std::cos(i));
    b.directions.col(i) = Vec3(0.1 * i - 0.2, 0.05, -1.0).normalized();
    for (int r = 0; r < latent_dim; ++r) b.latents(r, i) = 0.3 * std::sin(r + 2.0 * i);
    b.w_sigma(0, i) = 0.5 + 0.1 * i;
    b.w_rgb.col(i) = Vec3(std::cos(i), -0.6, 0.3 * i);
  }
  return b;
}

double weighted_output(const RadianceField<double>& f, const Batch& b) {
  const auto o = f.forward(b.positions, b.directions, b.latents, nullptr);
  return (o.sigma.array() * b.w_sigma.array()).sum() + (o.rgb.array() * b.w_rgb.array()).sum();
}

}  // namespace

TEST(Field, LayoutAndShapes) {
  RadianceField<double> f(tiny_config(true));
  ASSERT_EQ(f.trunk_layers().size(), 3u);
  const int x0 = encoded_dim(3, 3) + 4;
  EXPECT_EQ(f.trunk_layers()[0].in, x0);
  EXPECT_EQ(f.trunk_layers()[1].in, 8 + x0);
  EXPECT_EQ(f.trunk_layers()[2].in, 8);
  EXPECT_EQ(f.color_hidden_layer().in, 8 + encoded_dim(3, 2));
  EXPECT_EQ(f.color_layer().out, 3);
  const Batch b = make_batch(5, 4);
  const auto o = f.forward(b.positions, b.directions, b.latents, nullptr);
  EXPECT_EQ(o.sigma.rows(), 1);
  EXPECT_EQ(o.rgb.rows(), 3);
  EXPECT_TRUE((o.sigma.array() >= 0.0).all());
  EXPECT_TRUE((o.rgb.array() > 0.0).all() && (o.rgb.array() < 1.0).all());
}

TEST(Field, DensityIgnoresDirection) {
  RadianceField<double> f(tiny_config(true));
  Batch b = make_batch(6, 4);
  const auto a = f.forward(b.positions, b.directions, b.latents, nullptr);
  b.directions.row(0).array() += 0.5;
  const auto c = f.forward(b.positions, b.directions, b.latents, nullptr);
  EXPECT_EQ(a.sigma, c.sigma);
  EXPECT_NE(a.rgb, c.rgb);
}

TEST(Field, RejectsShapeMismatch) {
  RadianceField<double> f(tiny_config(true));
  const Batch b = make_batch(4, 3);
  EXPECT_THROW(f.forward(b.positions, b.directions, b.latents, nullptr), std::invalid_argument);
}

TEST(Field, SeedDeterminesInitialisation) {
  RadianceField<double> a(tiny_config(true)), b(tiny_config(true));
  EXPECT_EQ(a.network_params(), b.network_params());
  EXPECT_EQ(a.time_encoder().params(), b.time_encoder().params());
  FieldConfig other = tiny_config(true);
  other.seed = 18;
  EXPECT_NE(a.network_params(), RadianceField<double>(other).network_params());
}

TEST(Field, ValidatesConfig) {
  FieldConfig c = tiny_config(true);
  c.skip_layer = 4;
  EXPECT_THROW(RadianceField<double> f(c), std::invalid_argument);
  c = tiny_config(true);
  c.position_scale = 0.0;
  EXPECT_THROW(RadianceField<double> f(c), std::invalid_argument);
}

class FieldGradient : public ::testing::TestWithParam<bool> {};

TEST_P(FieldGradient, ParametersMatchFiniteDifferences) {
  RadianceField<double> f(tiny_config(GetParam()));
  const Batch b = make_batch(6, f.latent_input_dim());
  typename RadianceField<double>::Tape tape;
  f.forward(b.positions, b.directions, b.latents, &tape);
  std::vector<double> grads(f.network_params().size(), 0.0);
  f.backward(tape, b.w_sigma, b.w_rgb, grads, false);
  ASSERT_GE(grads.size(), 100u);
  double worst = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto loss = [&](double v) {
      RadianceField<double> g = f;
      g.network_params()[i] = v;
      return weighted_output(g, b);
    };
    worst = std::max(worst, relative_error(grads[i], central_difference(loss, f.network_params()[i])));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST_P(FieldGradient, InputsMatchFiniteDifferences) {
  RadianceField<double> f(tiny_config(GetParam()));
  const Batch b = make_batch(4, f.latent_input_dim());
  typename RadianceField<double>::Tape tape;
  f.forward(b.positions, b.directions, b.latents, &tape);
  std::vector<double> grads(f.network_params().size(), 0.0);
  const auto gi = f.backward(tape, b.w_sigma, b.w_rgb, grads, true);
  auto check = [&](nn::Matrix<double> Batch::*member, const nn::Matrix<double>& analytic) {
    for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
      for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
        auto loss = [&](double v) {
          Batch p = b;
          (p.*member)(r, c) = v;
          return weighted_output(f, p);
        };
        EXPECT_LT(relative_error(analytic(r, c), central_difference(loss, (b.*member)(r, c))),
                  1e-3);
      }
    }
  };
  check(&Batch::positions, gi.positions);
  check(&Batch::directions, gi.directions);
  if (GetParam()) check(&Batch::latents, gi.latents);
}

INSTANTIATE_TEST_SUITE_P(WithAndWithoutTime, FieldGradient, ::testing::Bool());

TEST(Field, FloatTracksDouble) {
  const FieldConfig cfg = tiny_config(true);
  RadianceField<double> d(cfg);
  RadianceField<float> s(cfg);
  const Batch b = make_batch(5, 4);
  const auto od = d.forward(b.positions, b.directions, b.latents, nullptr);
  const auto os = s.forward(b.positions.cast<float>(), b.directions.cast<float>(),
                            b.latents.cast<float>(), nullptr);
  EXPECT_LT((od.rgb - os.rgb.cast<double>()).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((od.sigma - os.sigma.cast<double>()).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Field, EvaluateMatchesBatch) {
  RadianceField<double> f(tiny_config(true));
  const Batch b = make_batch(3, 4);
  const auto o = f.forward(b.positions, b.directions, b.latents, nullptr);
  const FieldOutput one = f.evaluate(b.positions.col(1), b.latents.col(1), b.directions.col(1));
  EXPECT_NEAR(one.sigma, o.sigma(0, 1), 1e-12);
  EXPECT_LT((one.rgb - o.rgb.col(1)).norm(), 1e-12);
}

TEST(Dense, BackwardIndependentOfBufferAddress) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 1.0f);
  const int in = 37, out = 21, cols = 300;
  nn::Matrix<float> x(in, cols), y(out, cols), gy(out, cols);
  for (float& v : x.reshaped()) v = n(rng);
  for (float& v : y.reshaped()) v = n(rng);
  for (float& v : gy.reshaped()) v = n(rng);
  std::vector<float> reference;
  for (std::size_t shift = 0; shift < 16; ++shift) {
    const nn::Dense d{shift, in, out, nn::Activation::Identity};
    std::vector<float> params(shift + d.size(), 0.5f);
    std::vector<float> grads(shift + d.size(), 0.0f);
    nn::Matrix<float> g = gy;
    nn::backward(params, d, x, y, g, grads, false);
    const std::vector<float> got(grads.begin() + static_cast<std::ptrdiff_t>(shift), grads.end());
    if (shift == 0) {
      reference = got;
    } else {
      ASSERT_EQ(got, reference) << "shift " << shift;
    }
  }
}
