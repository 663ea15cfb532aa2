#pragma once

// Reference PSNR and SSIM written straight from their definitions, sharing no
// code with the library versions.

#include "msnerf/image.hpp"

#include <cmath>
#include <vector>

namespace msnerf::test {

inline double direct_psnr(const Image& a, const Image& b, double peak) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const long double d = static_cast<long double>(a.pixels[i]) - b.pixels[i];
    acc += d * d;
  }
  const long double m = acc / a.pixels.size();
  return static_cast<double>(10.0L * std::log10((long double)peak * peak / m));
}

// SSIM with the windowed statistics computed directly from a normalised 2-D
// Gaussian at each window position.
inline double direct_ssim(const Image& a, const Image& b, int win, double sigma, double range) {
  std::vector<double> w2(win * win);
  double norm = 0.0;
  const double c = (win - 1) / 2.0;
  for (int j = 0; j < win; ++j) {
    for (int i = 0; i < win; ++i) {
      w2[j * win + i] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      norm += w2[j * win + i];
    }
  }
  for (double& v : w2) v /= norm;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    double acc = 0.0;
    int count = 0;
    for (int oy = 0; oy + win <= a.height; ++oy) {
      for (int ox = 0; ox + win <= a.width; ++ox) {
        double mx = 0, my = 0;
        for (int j = 0; j < win; ++j) {
          for (int i = 0; i < win; ++i) {
            mx += w2[j * win + i] * a.at(ox + i, oy + j, ch);
            my += w2[j * win + i] * b.at(ox + i, oy + j, ch);
          }
        }
        double vx = 0, vy = 0, cov = 0;
        for (int j = 0; j < win; ++j) {
          for (int i = 0; i < win; ++i) {
            const double dx = a.at(ox + i, oy + j, ch) - mx;
            const double dy = b.at(ox + i, oy + j, ch) - my;
            vx += w2[j * win + i] * dx * dx;
            vy += w2[j * win + i] * dy * dy;
            cov += w2[j * win + i] * dx * dy;
          }
        }
        acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / a.channels;
}

}  // namespace msnerf::test
