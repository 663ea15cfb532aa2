#include "msnerf/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace msnerf {

namespace {

void check_shapes(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image dimensions differ");
  if (a.pixels.empty()) throw std::invalid_argument("empty image");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering of a w x h plane.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_shapes(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double psnr(const Image& a, const Image& b, double max_val) {
  if (!(max_val > 0.0)) throw std::invalid_argument("max_val must be positive");
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m));
}

double ssim(const Image& a, const Image& b, const SsimOptions& opts) {
  check_shapes(a, b);
  if (a.width < opts.window || a.height < opts.window) {
    throw std::invalid_argument("image smaller than the SSIM window");
  }
  const double c1 = std::pow(0.01 * opts.value_range, 2);
  const double c2 = std::pow(0.03 * opts.value_range, 2);
  const auto kernel = gaussian_kernel(opts.window, opts.sigma);
  const int w = a.width;
  const int h = a.height;
  const std::size_t plane = static_cast<std::size_t>(w) * h;

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a.pixels[i * a.channels + c];
      y[i] = b.pixels[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, kernel);
    const auto my = filter_valid(y, w, h, kernel);
    const auto sxx = filter_valid(xx, w, h, kernel);
    const auto syy = filter_valid(yy, w, h, kernel);
    const auto sxy = filter_valid(xy, w, h, kernel);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

}  // namespace msnerf
