#include "msnerf/renderer.hpp"

#include "msnerf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msnerf {

namespace {

constexpr double kWeightEpsilon = 1e-10;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t pixel_seed(std::uint64_t seed, std::uint64_t pixel_index) {
  return splitmix64(seed ^ splitmix64(pixel_index));
}

std::vector<double> sample_along_ray(const Ray& ray, int count, bool stratified,
                                     std::mt19937_64& rng) {
  if (count < 2) throw std::invalid_argument("need at least 2 samples per ray");
  const double bin = (ray.far - ray.near) / count;
  std::vector<double> z(count);
  for (int i = 0; i < count; ++i) {
    const double offset = stratified ? nn::unit_uniform(rng) : 0.5;
    z[i] = ray.near + (i + offset) * bin;
  }
  return z;
}

std::vector<double> sample_along_ray(const Ray& ray, int count, bool stratified,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_along_ray(ray, count, stratified, rng);
}

std::vector<double> sample_spacings(std::span<const double> depths, double near, double far) {
  const std::size_t n = depths.size();
  std::vector<double> delta(n);
  for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = depths[i + 1] - depths[i];
  if (n > 0) delta[n - 1] = (far - near) / static_cast<double>(n);
  return delta;
}

CompositeResult composite(const RaySampleBatch& s, const Vec3& background) {
  const std::size_t n = s.sigma.size();
  CompositeResult r;
  r.weights.resize(n);
  r.transmittance.resize(n);
  double trans = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = s.sigma[i] * s.spacings[i];
    const double alpha = -std::expm1(-tau);
    r.transmittance[i] = trans;
    r.weights[i] = trans * alpha;
    r.color += r.weights[i] * s.rgb[i];
    trans *= std::exp(-tau);
  }
  r.final_transmittance = trans;
  r.color += trans * background;
  return r;
}

CompositeGradient composite_backward(const RaySampleBatch& s, const CompositeResult& r,
                                     const Vec3& grad_color, const Vec3& background) {
  const std::size_t n = s.sigma.size();
  CompositeGradient g;
  g.sigma.resize(n);
  g.rgb.resize(n);
  const double bg_term = r.final_transmittance * background.dot(grad_color);
  double suffix = 0.0;  // Σ_{k>i} w_k (c_k · g)
  for (std::size_t i = n; i-- > 0;) {
    const double cg = s.rgb[i].dot(grad_color);
    const double trans_next = i + 1 < n ? r.transmittance[i + 1] : r.final_transmittance;
    g.sigma[i] = s.spacings[i] * (trans_next * cg - suffix - bg_term);
    g.rgb[i] = r.weights[i] * grad_color;
    suffix += r.weights[i] * cg;
  }
  return g;
}

double expected_depth(std::span<const double> weights, std::span<const double> depths,
                      double far) {
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    acc += weights[i] * depths[i];
  }
  if (total < kWeightEpsilon) return far;
  return acc / std::max(total, kWeightEpsilon);
}

template <typename Scalar>
RenderedView render_image(const RadianceField<Scalar>& field, const CameraIntrinsics& intr,
                          const PoseSE3& pose, double time, const RenderSettings& settings) {
  using Matrix = nn::Matrix<Scalar>;
  intr.validate();
  if (settings.chunk_rays < 1) throw std::invalid_argument("chunk_rays must be positive");
  const int zcount = settings.samples;
  if (zcount < 2) throw std::invalid_argument("need at least 2 samples per ray");

  RenderedView view{Image(intr.width, intr.height, 3), Image(intr.width, intr.height, 1)};
  const int total = intr.width * intr.height;
  const int chunks = (total + settings.chunk_rays - 1) / settings.chunk_rays;
  const int latent_rows = field.latent_input_dim();
  nn::Vector<Scalar> latent;
  if (latent_rows > 0) latent = field.time_encoder().encode(time);

  parallel_for(chunks, settings.threads, [&](int chunk) {
    const int first = chunk * settings.chunk_rays;
    const int count = std::min(settings.chunk_rays, total - first);
    const Eigen::Index cols = static_cast<Eigen::Index>(count) * zcount;
    Matrix positions(3, cols);
    Matrix directions(3, cols);
    Matrix latents(latent_rows, cols);
    std::vector<std::vector<double>> depths(count);
    for (int r = 0; r < count; ++r) {
      const int pix = first + r;
      const PixelCoord pc{(pix % intr.width) + 0.5, (pix / intr.width) + 0.5};
      const Ray ray = generate_ray(intr, pose, pc, settings.bounds);
      depths[r] = sample_along_ray(ray, zcount, settings.stratified,
                                   pixel_seed(settings.seed, static_cast<std::uint64_t>(pix)));
      for (int i = 0; i < zcount; ++i) {
        const Eigen::Index c = static_cast<Eigen::Index>(r) * zcount + i;
        positions.col(c) = ray.at(depths[r][i]).template cast<Scalar>();
        directions.col(c) = ray.direction.template cast<Scalar>();
        if (latent_rows > 0) latents.col(c) = latent;
      }
    }
    const auto out = field.forward(positions, directions, latents, nullptr);
    RaySampleBatch batch;
    batch.sigma.resize(zcount);
    batch.rgb.resize(zcount);
    for (int r = 0; r < count; ++r) {
      const int pix = first + r;
      batch.depths = depths[r];
      batch.spacings = sample_spacings(batch.depths, settings.bounds.near, settings.bounds.far);
      for (int i = 0; i < zcount; ++i) {
        const Eigen::Index c = static_cast<Eigen::Index>(r) * zcount + i;
        batch.sigma[i] = static_cast<double>(out.sigma(0, c));
        batch.rgb[i] = out.rgb.col(c).template cast<double>();
      }
      const CompositeResult res = composite(batch, settings.background);
      const int x = pix % intr.width;
      const int y = pix / intr.width;
      for (int ch = 0; ch < 3; ++ch) view.rgb.at(x, y, ch) = static_cast<float>(res.color[ch]);
      view.depth.at(x, y) =
          static_cast<float>(expected_depth(res.weights, batch.depths, settings.bounds.far));
    }
  });
  return view;
}

template RenderedView render_image(const RadianceField<float>&, const CameraIntrinsics&,
                                   const PoseSE3&, double, const RenderSettings&);
template RenderedView render_image(const RadianceField<double>&, const CameraIntrinsics&,
                                   const PoseSE3&, double, const RenderSettings&);

}  // namespace msnerf
