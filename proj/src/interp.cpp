#include "msnerf/interp.hpp"

#include "msnerf/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace msnerf {

namespace {

constexpr float kFloTag = 202021.25f;
constexpr double kLambdaEpsilon = 1e-6;

void check_same(const FlowField& a, const FlowField& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument("flow fields differ in size");
  }
}

void check_delta(double delta) {
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in [0, 1)");
}

// e(x) = ‖near(x) + far_scale · bilinear(far, x + near(x))‖ mapped to [0, 1].
VisibilityMap consistency(const FlowField& near, const FlowField& far, double far_scale,
                          double threshold) {
  VisibilityMap v(near.width(), near.height());
  for (int y = 0; y < near.height(); ++y) {
    for (int x = 0; x < near.width(); ++x) {
      const double px = x + near.dx(x, y);
      const double py = y + near.dy(x, y);
      const double ex = near.dx(x, y) + far_scale * sample_bilinear(far.data, px, py, 0);
      const double ey = near.dy(x, y) + far_scale * sample_bilinear(far.data, px, py, 1);
      const double e = std::hypot(ex, ey);
      v.at(x, y) = e <= threshold ? 1.0f : static_cast<float>(std::exp(-(e - threshold)));
    }
  }
  return v;
}

}  // namespace

IntermediateFlow approximate_intermediate_flow(const FlowField& fwd, const FlowField& bwd,
                                               double delta) {
  check_delta(delta);
  check_same(fwd, bwd);
  const double a0 = -(1.0 - delta) * delta;
  const double b0 = delta * delta;
  const double a1 = (1.0 - delta) * (1.0 - delta);
  const double b1 = -delta * (1.0 - delta);
  IntermediateFlow out{FlowField(fwd.width(), fwd.height()),
                       FlowField(fwd.width(), fwd.height())};
  for (std::size_t i = 0; i < fwd.data.pixels.size(); ++i) {
    const double f = fwd.data.pixels[i];
    const double b = bwd.data.pixels[i];
    out.to_start.data.pixels[i] = static_cast<float>(a0 * f + b0 * b);
    out.to_end.data.pixels[i] = static_cast<float>(a1 * f + b1 * b);
  }
  return out;
}

Image warp(const Image& img, const FlowField& flow) {
  if (img.width != flow.width() || img.height != flow.height()) {
    throw std::invalid_argument("image and flow differ in size");
  }
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double sx = x + flow.dx(x, y);
      const double sy = y + flow.dy(x, y);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
    }
  }
  return out;
}

VisibilityPair visibility_maps(const FlowField& fwd, const FlowField& bwd, double delta,
                               double threshold_px) {
  const IntermediateFlow mid = approximate_intermediate_flow(fwd, bwd, delta);
  return {consistency(mid.to_start, fwd, delta, threshold_px),
          consistency(mid.to_end, bwd, 1.0 - delta, threshold_px)};
}

Image interpolate_frame(const Image& start, const Image& end, double delta,
                        const IntermediateFlow& flows, const VisibilityPair& vis) {
  check_delta(delta);
  if (!start.same_shape(end)) throw std::invalid_argument("frames differ in shape");
  const Image from_start = warp(start, flows.to_start);
  const Image from_end = warp(end, flows.to_end);
  Image out(start.width, start.height, start.channels);
  for (int y = 0; y < start.height; ++y) {
    for (int x = 0; x < start.width; ++x) {
      double w0 = (1.0 - delta) * vis.from_start.at(x, y);
      double w1 = delta * vis.from_end.at(x, y);
      double lambda = w0 + w1;
      if (lambda < kLambdaEpsilon) {
        w0 = 1.0 - delta;
        w1 = delta;
        lambda = 1.0;
      }
      for (int c = 0; c < start.channels; ++c) {
        const double v = (w0 * from_start.at(x, y, c) + w1 * from_end.at(x, y, c)) / lambda;
        out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image interpolate_frame(const Image& start, const Image& end, double delta,
                        const BidirectionalFlow& flows, double threshold_px) {
  return interpolate_frame(start, end, delta,
                           approximate_intermediate_flow(flows.forward, flows.backward, delta),
                           visibility_maps(flows.forward, flows.backward, delta, threshold_px));
}

FlowField read_flow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open flow file " + path);
  auto read_u32 = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError(path + ": truncated flow file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
  };
  if (std::bit_cast<float>(read_u32()) != kFloTag) throw DataError(path + ": bad flow tag");
  const auto w = static_cast<std::int32_t>(read_u32());
  const auto h = static_cast<std::int32_t>(read_u32());
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw DataError(path + ": bad flow dimensions");
  }
  FlowField flow(w, h);
  for (float& v : flow.data.pixels) v = std::bit_cast<float>(read_u32());
  return flow;
}

void write_flow(const std::string& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write flow file " + path);
  auto put = [&](std::uint32_t u) {
    const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                       static_cast<char>((u >> 16) & 0xff), static_cast<char>(u >> 24)};
    out.write(b, 4);
  };
  put(std::bit_cast<std::uint32_t>(kFloTag));
  put(static_cast<std::uint32_t>(flow.width()));
  put(static_cast<std::uint32_t>(flow.height()));
  for (float v : flow.data.pixels) put(std::bit_cast<std::uint32_t>(v));
  if (!out) throw DataError("failed writing flow file " + path);
}

FlowMethod parse_flow_method(const std::string& name) {
  if (name == "ground-truth" || name == "gt") return FlowMethod::GroundTruth;
  if (name == "variational" || name == "horn-schunck") return FlowMethod::Variational;
  throw std::invalid_argument("unknown flow method '" + name + "'");
}

BidirectionalFlow estimate_bidirectional_flow(const Image& start, const Image& end,
                                              FlowMethod method,
                                              const BidirectionalFlow* ground_truth,
                                              const VariationalFlowOptions& opts) {
  if (!start.same_shape(end)) throw std::invalid_argument("frames differ in shape");
  if (method == FlowMethod::GroundTruth) {
    if (!ground_truth) throw DataError("ground-truth flow requested but not available");
    if (ground_truth->forward.width() != start.width ||
        ground_truth->forward.height() != start.height) {
      throw DataError("ground-truth flow does not match the frame size");
    }
    return *ground_truth;
  }
  return estimate_bidirectional_flow(start, end, opts);
}

}  // namespace msnerf
