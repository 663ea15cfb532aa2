// Coarse-to-fine Horn–Schunck with iterative re-linearisation.

#include "msnerf/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace msnerf {

namespace {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int width, int height, double fill = 0.0)
      : w(width), h(height), v(static_cast<std::size_t>(width) * height, fill) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
  double clamped(int x, int y) const {
    return at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  }
  double bilinear(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x1, y0)) +
           fy * ((1 - fx) * at(x0, y1) + fx * at(x1, y1));
  }
};

Plane luminance(const Image& img) {
  Plane p(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels >= 3) {
        p.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      } else {
        p.at(x, y) = img.at(x, y, 0);
      }
    }
  }
  return p;
}

// Separable [1 4 6 4 1] / 16 low-pass, then every other sample.
Plane downsample(const Plane& p) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Plane rows(p.w, p.h);
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < p.w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * p.clamped(x + i, y);
      rows.at(x, y) = acc;
    }
  }
  Plane out((p.w + 1) / 2, (p.h + 1) / 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * rows.clamped(2 * x, 2 * y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

// Flow of a coarse level resampled onto a finer grid, scaled by 2.
Plane upsample(const Plane& p, int w, int h) {
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = 2.0 * p.bilinear(0.5 * x - 0.25, 0.5 * y - 0.25);
  }
  return out;
}

// Laplacian-style neighbourhood mean used by Horn–Schunck.
double neighbour_mean(const Plane& p, int x, int y) {
  return (p.clamped(x - 1, y) + p.clamped(x + 1, y) + p.clamped(x, y - 1) + p.clamped(x, y + 1)) /
             6.0 +
         (p.clamped(x - 1, y - 1) + p.clamped(x + 1, y - 1) + p.clamped(x - 1, y + 1) +
          p.clamped(x + 1, y + 1)) /
             12.0;
}

void refine_level(const Plane& a, const Plane& b, Plane& u, Plane& v,
                  const VariationalFlowOptions& opts) {
  const double alpha2 = opts.alpha * opts.alpha;
  const int w = a.w;
  const int h = a.h;
  for (int pass = 0; pass < opts.warps; ++pass) {
    Plane warped(w, h), ix(w, h), iy(w, h), it(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) warped.at(x, y) = b.bilinear(x + u.at(x, y), y + v.at(x, y));
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        ix.at(x, y) = 0.25 * (a.clamped(x + 1, y) - a.clamped(x - 1, y) +
                              warped.clamped(x + 1, y) - warped.clamped(x - 1, y));
        iy.at(x, y) = 0.25 * (a.clamped(x, y + 1) - a.clamped(x, y - 1) +
                              warped.clamped(x, y + 1) - warped.clamped(x, y - 1));
        it.at(x, y) = warped.at(x, y) - a.at(x, y);
      }
    }
    const Plane u0 = u;
    const Plane v0 = v;
    Plane un(w, h), vn(w, h);
    for (int iter = 0; iter < opts.iterations; ++iter) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double ub = neighbour_mean(u, x, y);
          const double vb = neighbour_mean(v, x, y);
          const double gx = ix.at(x, y);
          const double gy = iy.at(x, y);
          const double common =
              (gx * (ub - u0.at(x, y)) + gy * (vb - v0.at(x, y)) + it.at(x, y)) /
              (alpha2 + gx * gx + gy * gy);
          un.at(x, y) = ub - gx * common;
          vn.at(x, y) = vb - gy * common;
        }
      }
      std::swap(u, un);
      std::swap(v, vn);
    }
  }
}

}  // namespace

FlowField horn_schunck(const Image& from, const Image& to, const VariationalFlowOptions& opts) {
  if (!from.same_shape(to)) throw std::invalid_argument("frames differ in shape");
  if (opts.levels < 1 || opts.iterations < 1 || opts.warps < 1 || !(opts.alpha > 0.0)) {
    throw std::invalid_argument("invalid variational flow options");
  }
  std::vector<Plane> pa{luminance(from)};
  std::vector<Plane> pb{luminance(to)};
  while (static_cast<int>(pa.size()) < opts.levels &&
         std::min(pa.back().w, pa.back().h) >= 16) {
    pa.push_back(downsample(pa.back()));
    pb.push_back(downsample(pb.back()));
  }
  Plane u(pa.back().w, pa.back().h);
  Plane v(pa.back().w, pa.back().h);
  for (std::size_t l = pa.size(); l-- > 0;) {
    if (u.w != pa[l].w || u.h != pa[l].h) {
      u = upsample(u, pa[l].w, pa[l].h);
      v = upsample(v, pa[l].w, pa[l].h);
    }
    refine_level(pa[l], pb[l], u, v, opts);
  }
  FlowField flow(from.width, from.height);
  for (int y = 0; y < from.height; ++y) {
    for (int x = 0; x < from.width; ++x) {
      flow.dx(x, y) = static_cast<float>(u.at(x, y));
      flow.dy(x, y) = static_cast<float>(v.at(x, y));
    }
  }
  return flow;
}

BidirectionalFlow estimate_bidirectional_flow(const Image& start, const Image& end,
                                              const VariationalFlowOptions& opts) {
  return {horn_schunck(start, end, opts), horn_schunck(end, start, opts)};
}

}  // namespace msnerf
