#pragma once

// Stratified ray sampling and emission-absorption compositing.

#include "msnerf/field.hpp"
#include "msnerf/geometry.hpp"
#include "msnerf/image.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace msnerf {

// Depths z_1 < ... < z_Z inside [near, far]: bin midpoints, or one uniform
// draw per bin when stratified. Throws std::invalid_argument for count < 2.
std::vector<double> sample_along_ray(const Ray& ray, int count, bool stratified,
                                     std::uint64_t seed);
std::vector<double> sample_along_ray(const Ray& ray, int count, bool stratified,
                                     std::mt19937_64& rng);

// Δ_i = z_{i+1} - z_i, with the final spacing set to the mean bin width
// (far - near) / Z.
std::vector<double> sample_spacings(std::span<const double> depths, double near, double far);

struct RaySampleBatch {
  std::vector<double> depths;
  std::vector<double> spacings;
  std::vector<double> sigma;
  std::vector<Vec3> rgb;
};

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  std::vector<double> weights;        // w_i = T_i (1 - exp(-σ_i Δ_i))
  std::vector<double> transmittance;  // T_i, with T_1 = 1
  double final_transmittance = 1.0;   // T_{Z+1}
};

// Ĉ = Σ w_i c_i + T_{Z+1} · background.
CompositeResult composite(const RaySampleBatch& samples, const Vec3& background = Vec3::Zero());

struct CompositeGradient {
  std::vector<double> sigma;
  std::vector<Vec3> rgb;
};

// dL/dσ_i and dL/dc_i from dL/dĈ.
CompositeGradient composite_backward(const RaySampleBatch& samples, const CompositeResult& result,
                                     const Vec3& grad_color,
                                     const Vec3& background = Vec3::Zero());

// Σ w_i z_i / max(Σ w_i, ε), or far when Σ w_i < ε (ε = 1e-10).
double expected_depth(std::span<const double> weights, std::span<const double> depths,
                      double far);

struct RenderSettings {
  int samples = 128;
  bool stratified = false;
  std::uint64_t seed = 0;
  int chunk_rays = 1024;
  DepthBounds bounds;
  Vec3 background = Vec3::Zero();
  int threads = 1;
};

struct RenderedView {
  Image rgb;    // 3 channels
  Image depth;  // 1 channel, meters along the ray
};

// Seed of the sampling stream for one pixel of a render; independent of the
// chunking and of the thread count.
std::uint64_t pixel_seed(std::uint64_t seed, std::uint64_t pixel_index);

template <typename Scalar>
RenderedView render_image(const RadianceField<Scalar>& field, const CameraIntrinsics& intr,
                          const PoseSE3& pose, double time, const RenderSettings& settings);

}  // namespace msnerf
