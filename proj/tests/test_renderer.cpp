#include "msnerf/renderer.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace msnerf;
using msnerf::test::central_difference;
using msnerf::test::relative_error;

namespace {

RaySampleBatch uniform_medium(double sigma, int count, double near, double far, const Vec3& c) {
  Ray ray;
  ray.near = near;
  ray.far = far;
  RaySampleBatch b;
  b.depths = sample_along_ray(ray, count, false, std::uint64_t{0});
  b.spacings = sample_spacings(b.depths, near, far);
  b.sigma.assign(count, sigma);
  b.rgb.assign(count, c);
  return b;
}

RaySampleBatch varied_batch() {
  RaySampleBatch b;
  for (int i = 0; i < 7; ++i) {
    b.depths.push_back(1.0 + 0.3 * i);
    b.sigma.push_back(0.2 + 1.1 * std::abs(std::sin(1.7 * i)));
    b.rgb.push_back(Vec3(0.5 + 0.4 * std::sin(i), 0.3, 0.9 - 0.1 * i));
  }
  b.spacings = sample_spacings(b.depths, 1.0, 3.1);
  return b;
}

}  // namespace

TEST(Renderer, HomogeneousMediumMatchesClosedForm) {
  const auto start = std::chrono::steady_clock::now();
  const RaySampleBatch b = uniform_medium(2.0, 4096, 0.0, 1.0, Vec3::Ones());
  const CompositeResult r = composite(b);
  const double expected = 1.0 - std::exp(-2.0);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color[c], expected, 1e-3);
  EXPECT_NEAR(r.final_transmittance, std::exp(-2.0), 1e-9);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(elapsed, 1.0);
}

TEST(Renderer, EmptyRayShowsBackground) {
  const RaySampleBatch b = uniform_medium(0.0, 16, 0.5, 6.0, Vec3(1, 0, 0));
  const Vec3 bg(0.2, 0.4, 0.6);
  const CompositeResult r = composite(b, bg);
  EXPECT_LT((r.color - bg).norm(), 1e-15);
  EXPECT_NEAR(expected_depth(r.weights, b.depths, 6.0), 6.0, 0.0);
}

TEST(Renderer, WeightsSumWithTransmittanceToOne) {
  const RaySampleBatch b = varied_batch();
  const CompositeResult r = composite(b);
  double sum = r.final_transmittance;
  for (double w : r.weights) {
    EXPECT_GE(w, 0.0);
    sum += w;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(r.transmittance.front(), 1.0);
}

TEST(Renderer, OpaqueSlabDepth) {
  RaySampleBatch b = uniform_medium(0.0, 64, 0.0, 4.0, Vec3::Ones());
  for (std::size_t i = 0; i < b.depths.size(); ++i) {
    if (b.depths[i] > 2.5) b.sigma[i] = 1e4;
  }
  const CompositeResult r = composite(b);
  const double d = expected_depth(r.weights, b.depths, 4.0);
  EXPECT_NEAR(d, 2.53125, 1e-9);  // first sample centre beyond 2.5
}

TEST(Renderer, CompositeBackwardMatchesFiniteDifferences) {
  const RaySampleBatch b = varied_batch();
  const Vec3 bg(0.1, 0.7, 0.2);
  const Vec3 g(0.8, -0.5, 0.3);
  const CompositeResult r = composite(b, bg);
  const CompositeGradient grad = composite_backward(b, r, g, bg);
  for (std::size_t i = 0; i < b.sigma.size(); ++i) {
    auto fs = [&](double v) {
      RaySampleBatch p = b;
      p.sigma[i] = v;
      return composite(p, bg).color.dot(g);
    };
    EXPECT_LT(relative_error(grad.sigma[i], central_difference(fs, b.sigma[i])), 1e-6);
    for (int c = 0; c < 3; ++c) {
      auto fc = [&](double v) {
        RaySampleBatch p = b;
        p.rgb[i][c] = v;
        return composite(p, bg).color.dot(g);
      };
      EXPECT_LT(relative_error(grad.rgb[i][c], central_difference(fc, b.rgb[i][c])), 1e-6);
    }
  }
}

TEST(Renderer, StratifiedSamplesStayInBins) {
  Ray ray;
  ray.near = 0.5;
  ray.far = 6.0;
  const int n = 32;
  const auto z = sample_along_ray(ray, n, true, std::uint64_t{42});
  const double bin = (ray.far - ray.near) / n;
  for (int i = 0; i < n; ++i) {
    EXPECT_GE(z[i], ray.near + i * bin);
    EXPECT_LT(z[i], ray.near + (i + 1) * bin);
  }
  EXPECT_EQ(z, sample_along_ray(ray, n, true, std::uint64_t{42}));
  EXPECT_NE(z, sample_along_ray(ray, n, true, std::uint64_t{43}));
  const auto mid = sample_along_ray(ray, n, false, std::uint64_t{1});
  EXPECT_NEAR(mid[0], ray.near + 0.5 * bin, 1e-15);
  EXPECT_THROW(sample_along_ray(ray, 1, false, std::uint64_t{0}), std::invalid_argument);
}

TEST(Renderer, SpacingsUseMeanBinForLast) {
  const std::vector<double> z{1.0, 1.5, 2.5};
  const auto d = sample_spacings(z, 1.0, 4.0);
  EXPECT_DOUBLE_EQ(d[0], 0.5);
  EXPECT_DOUBLE_EQ(d[1], 1.0);
  EXPECT_DOUBLE_EQ(d[2], 1.0);
}

TEST(Renderer, RenderIndependentOfThreadsAndChunks) {
  FieldConfig fc;
  fc.hidden_layers = 2;
  fc.hidden_width = 16;
  fc.skip_layer = 0;
  fc.color_width = 8;
  fc.position_center = Vec3(0, 0, -2);
  fc.position_scale = 3.0;
  RadianceField<float> field(fc);
  const CameraIntrinsics intr{20.0, 24, 18};
  RenderSettings s;
  s.samples = 16;
  s.stratified = true;
  s.seed = 5;
  s.bounds = {0.5, 4.0};
  s.chunk_rays = 1000;
  s.threads = 1;
  const RenderedView a = render_image(field, intr, PoseSE3{}, 0.3, s);
  s.chunk_rays = 7;
  s.threads = 3;
  const RenderedView b = render_image(field, intr, PoseSE3{}, 0.3, s);
  EXPECT_EQ(a.rgb.pixels, b.rgb.pixels);
  EXPECT_EQ(a.depth.pixels, b.depth.pixels);
  EXPECT_EQ(a.rgb.width, 24);
  EXPECT_EQ(a.depth.channels, 1);
  for (float d : a.depth.pixels) {
    EXPECT_GE(d, 0.5f);
    EXPECT_LE(d, 4.0f);
  }
}

TEST(Renderer, PixelSeedsDiffer) {
  EXPECT_NE(pixel_seed(1, 0), pixel_seed(1, 1));
  EXPECT_NE(pixel_seed(1, 0), pixel_seed(2, 0));
  EXPECT_EQ(pixel_seed(9, 77), pixel_seed(9, 77));
}
