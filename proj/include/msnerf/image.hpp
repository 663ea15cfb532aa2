#pragma once

// Planar-interleaved float images and the on-disk formats used by the
// pipeline: binary PPM (P6) / PGM (P5) with 8-bit samples, and PFM.

#include <cstddef>
#include <string>
#include <vector>

namespace msnerf {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> pixels;  // row-major, channels interleaved

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// 8-bit quantisation used by the PPM/PGM writers: round(clamp(v) * 255).
unsigned char quantize8(float v);

// Rounds every sample through the 8-bit representation.
Image quantized(const Image& img);

Image read_pnm(const std::string& path);  // P5 or P6, maxval 255
void write_ppm(const std::string& path, const Image& rgb);
void write_pgm(const std::string& path, const Image& gray);

// Little-endian PFM ("Pf" for one channel, "PF" for three), rows stored
// bottom to top as the format prescribes.
Image read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image& img);

// 8-bit grayscale preview of a depth map mapping [near, far] to [1, 0].
Image depth_preview(const Image& depth, double near, double far);

// Bilinear sample with coordinates clamped to the image border. (x, y) are
// pixel-index coordinates: (0, 0) is the first pixel's center.
float sample_bilinear(const Image& img, double x, double y, int c);

}  // namespace msnerf
