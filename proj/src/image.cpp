#include "msnerf/image.hpp"

#include "msnerf/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace msnerf {

unsigned char quantize8(float v) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

Image quantized(const Image& img) {
  Image out = img;
  for (float& v : out.pixels) v = quantize8(v) / 255.0f;
  return out;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw DataError(path + ": truncated image header");
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    const int v = std::stoi(tok);
    if (v > 0) return v;
  } catch (const std::exception&) {
  }
  throw DataError(path + ": invalid image header value '" + tok + "'");
}

void write_pnm(const std::string& path, const Image& img, const char* magic) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path);
  out << magic << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), bytes.begin(), quantize8);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing image " + path);
}

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path);
  const std::string magic = next_token(in, path);
  int channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw DataError(path + ": unsupported image format '" + magic + "'");
  }
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  if (parse_dim(next_token(in, path), path) != 255) {
    throw DataError(path + ": only 8-bit images are supported");
  }
  Image img(w, h, channels);
  std::vector<unsigned char> bytes(img.pixels.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DataError(path + ": truncated pixel data");
  }
  std::transform(bytes.begin(), bytes.end(), img.pixels.begin(),
                 [](unsigned char b) { return b / 255.0f; });
  return img;
}

void write_ppm(const std::string& path, const Image& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("PPM needs a 3-channel image");
  write_pnm(path, rgb, "P6");
}

void write_pgm(const std::string& path, const Image& gray) {
  if (gray.channels != 1) throw std::invalid_argument("PGM needs a 1-channel image");
  write_pnm(path, gray, "P5");
}

Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open depth map " + path);
  const std::string magic = next_token(in, path);
  if (magic != "Pf" && magic != "PF") throw DataError(path + ": not a PFM file");
  const int channels = magic == "PF" ? 3 : 1;
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  const double scale = std::stod(next_token(in, path));
  const bool little = scale < 0.0;
  Image img(w, h, channels);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  std::vector<unsigned char> bytes(row * 4);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw DataError(path + ": truncated PFM data");
    for (std::size_t i = 0; i < row; ++i) {
      const unsigned char* b = &bytes[4 * i];
      const std::uint32_t u =
          little ? (std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                    std::uint32_t(b[3]) << 24)
                 : (std::uint32_t(b[3]) | std::uint32_t(b[2]) << 8 | std::uint32_t(b[1]) << 16 |
                    std::uint32_t(b[0]) << 24);
      img.pixels[static_cast<std::size_t>(y) * row + i] = std::bit_cast<float>(u);
    }
  }
  return img;
}

void write_pfm(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("PFM needs 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write depth map " + path);
  out << (img.channels == 3 ? "PF" : "Pf") << '\n'
      << img.width << ' ' << img.height << "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  std::vector<unsigned char> bytes(row * 4);
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      const auto u = std::bit_cast<std::uint32_t>(img.pixels[static_cast<std::size_t>(y) * row + i]);
      for (int k = 0; k < 4; ++k) bytes[4 * i + k] = static_cast<unsigned char>(u >> (8 * k));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw DataError("failed writing depth map " + path);
}

Image depth_preview(const Image& depth, double near, double far) {
  Image out(depth.width, depth.height, 1);
  const double span = far - near;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double d = depth.pixels[i * depth.channels];
    out.pixels[i] = static_cast<float>(1.0 - (d - near) / span);
  }
  return out;
}

float sample_bilinear(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = std::min(static_cast<int>(x), img.width - 1);
  const int y0 = std::min(static_cast<int>(y), img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return static_cast<float>((1.0 - fy) * top + fy * bot);
}

}  // namespace msnerf
