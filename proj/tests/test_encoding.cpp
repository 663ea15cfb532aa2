#include "msnerf/encoding.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace msnerf;
using msnerf::test::relative_error;

TEST(Encoding, Dimensions) {
  EXPECT_EQ(encoded_dim(3, 10), 63);
  EXPECT_EQ(encoded_dim(3, 4), 27);
  EXPECT_EQ(encoded_dim(1, 4), 9);
  EXPECT_EQ(encoded_dim(3, 10, false), 60);
}

TEST(Encoding, LayoutAndValues) {
  const std::vector<double> x{0.1, -0.7, 0.35};
  const auto e = positional_encode(x, 3);
  ASSERT_EQ(e.size(), 21u);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(e[c], x[c]);
  for (int j = 0; j < 3; ++j) {
    const double f = std::pow(2.0, j) * M_PI;
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(e[3 + 6 * j + c], std::sin(f * x[c]), 1e-15);
      EXPECT_NEAR(e[3 + 6 * j + 3 + c], std::cos(f * x[c]), 1e-15);
    }
  }
  const auto bare = positional_encode(x, 3, false);
  ASSERT_EQ(bare.size(), 18u);
  EXPECT_EQ(bare[0], e[3]);
}

TEST(Encoding, ZeroOctaves) {
  const std::vector<double> x{0.25, 0.5};
  EXPECT_EQ(positional_encode(x, 0), x);
  EXPECT_TRUE(positional_encode(x, 0, false).empty());
}

TEST(Encoding, RejectsNonFinite) {
  const std::vector<double> x{0.0, NAN};
  EXPECT_THROW(positional_encode(x, 2), std::invalid_argument);
}

TEST(Encoding, BatchMatchesScalarForm) {
  nn::Matrix<double> x(3, 4);
  x << 0.1, -0.9, 0.33, 2.4, 0.0, 0.5, -0.25, 1.7, -1.3, 0.8, 0.01, -0.6;
  const auto enc = encode_batch<double>(x, 10, true);
  for (int col = 0; col < 4; ++col) {
    const std::vector<double> xv{x(0, col), x(1, col), x(2, col)};
    const auto ref = positional_encode(xv, 10);
    for (std::size_t r = 0; r < ref.size(); ++r) EXPECT_NEAR(enc(r, col), ref[r], 1e-12);
  }
}

TEST(Encoding, BatchBackwardMatchesFiniteDifferences) {
  nn::Matrix<double> x(3, 2);
  x << 0.12, -0.4, 0.77, 0.05, -0.31, 0.6;
  const int octaves = 5;
  const int dim = encoded_dim(3, octaves);
  nn::Matrix<double> weights(dim, 2);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < 2; ++c) weights(r, c) = std::sin(1.3 * r + 0.7 * c);
  }
  const auto enc = encode_batch<double>(x, octaves, true);
  const auto grad = encode_batch_backward<double>(weights, enc, 3, octaves, true);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) {
      auto f = [&](double v) {
        nn::Matrix<double> xp = x;
        xp(r, c) = v;
        return (encode_batch<double>(xp, octaves, true).array() * weights.array()).sum();
      };
      const double fd = msnerf::test::central_difference(f, x(r, c));
      EXPECT_LT(relative_error(grad(r, c), fd), 1e-6);
    }
  }
}

TEST(TimeEncoder, ShapeAndDeterminism) {
  TimeEncoderConfig cfg;
  std::mt19937_64 a(11), b(11);
  TimeEncoder<double> ea(cfg, a), eb(cfg, b);
  EXPECT_EQ(ea.params(), eb.params());
  const std::vector<double> times{0.0, 0.5, 1.0};
  const auto out = ea.forward(times, nullptr);
  EXPECT_EQ(out.rows(), cfg.latent_dim);
  EXPECT_EQ(out.cols(), 3);
  EXPECT_NE((out.col(0) - out.col(2)).norm(), 0.0);
}

TEST(TimeEncoder, ClampsOutOfRangeTimes) {
  TimeEncoderConfig cfg;
  std::mt19937_64 rng(1);
  TimeEncoder<double> enc(cfg, rng);
  EXPECT_EQ(enc.encode(1.5), enc.encode(1.0));
  EXPECT_EQ(enc.encode(-0.2), enc.encode(0.0));
}

TEST(TimeEncoder, BackwardMatchesFiniteDifferences) {
  TimeEncoderConfig cfg;
  cfg.hidden_width = 8;
  std::mt19937_64 rng(21);
  TimeEncoder<double> enc(cfg, rng);
  const std::vector<double> times{0.1, 0.45, 0.9};
  nn::Matrix<double> upstream(cfg.latent_dim, 3);
  for (int r = 0; r < cfg.latent_dim; ++r) {
    for (int c = 0; c < 3; ++c) upstream(r, c) = std::cos(0.9 * r - 1.7 * c);
  }
  typename TimeEncoder<double>::Tape tape;
  enc.forward(times, &tape);
  std::vector<double> grads(enc.params().size(), 0.0);
  enc.backward(tape, upstream, grads);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < enc.params().size(); ++i) {
    auto f = [&](double v) {
      TimeEncoder<double> e = enc;
      e.params()[i] = v;
      return (e.forward(times, nullptr).array() * upstream.array()).sum();
    };
    const double fd = msnerf::test::central_difference(f, enc.params()[i]);
    EXPECT_LT(relative_error(grads[i], fd), 1e-3) << "parameter " << i;
    ++checked;
  }
  EXPECT_GE(checked, 100u);
}

TEST(TimeEncoder, RejectsBadConfig) {
  TimeEncoderConfig cfg;
  cfg.latent_dim = 0;
  std::mt19937_64 rng(1);
  EXPECT_THROW(TimeEncoder<double>(cfg, rng), std::invalid_argument);
}
