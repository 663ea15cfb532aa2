#pragma once

#include "msnerf/image.hpp"

namespace msnerf {

// For identical images (and anything scoring higher) psnr returns this cap.
inline constexpr double kPsnrCap = 99.0;

// 10·log10(max_val² / MSE) with the MSE taken over all channels jointly.
// Throws std::invalid_argument on shape mismatch or max_val <= 0.
double psnr(const Image& a, const Image& b, double max_val = 1.0);

// Mean squared error over all samples.
double mse(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double value_range = 1.0;  // L
};

// Gaussian-windowed SSIM over every fully contained window, computed per
// channel and averaged. Throws std::invalid_argument for images smaller
// than the window.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});

}  // namespace msnerf
