#pragma once

// Flow-based intermediate frame synthesis.
//
// Flow convention: F_{a→b}(x) is the displacement, in pixels, that carries the
// content of frame a at pixel x to its position in frame b. Backward warping
// g(I_b, F_{a→b}) therefore resamples I_b at x + F_{a→b}(x) and yields an
// estimate of frame a.

#include "msnerf/image.hpp"

#include <string>
#include <utility>

namespace msnerf {

struct FlowField {
  Image data;  // 2 channels: dx, dy

  FlowField() = default;
  FlowField(int w, int h) : data(w, h, 2) {}

  int width() const { return data.width; }
  int height() const { return data.height; }
  float& dx(int x, int y) { return data.at(x, y, 0); }
  float& dy(int x, int y) { return data.at(x, y, 1); }
  float dx(int x, int y) const { return data.at(x, y, 0); }
  float dy(int x, int y) const { return data.at(x, y, 1); }
};

struct VisibilityMap {
  Image data;  // 1 channel in [0, 1]

  VisibilityMap() = default;
  VisibilityMap(int w, int h, float fill = 1.0f) : data(w, h, 1, fill) {}
  float& at(int x, int y) { return data.at(x, y); }
  float at(int x, int y) const { return data.at(x, y); }
};

struct BidirectionalFlow {
  FlowField forward;   // F_{t→t+1}
  FlowField backward;  // F_{t+1→t}
};

struct IntermediateFlow {
  FlowField to_start;  // F̂_{t+δ→t}
  FlowField to_end;    // F̂_{t+δ→t+1}
};

struct VisibilityPair {
  VisibilityMap from_start;  // V_{t→t+δ}
  VisibilityMap from_end;    // V_{t+1→t+δ}
};

// Super SloMo style weighting of the bidirectional flows (linear in both):
//   F̂_{t+δ→t}   = -(1-δ)δ F_fwd + δ² F_bwd
//   F̂_{t+δ→t+1} = (1-δ)² F_fwd - δ(1-δ) F_bwd
// Throws std::invalid_argument unless δ ∈ [0, 1) and shapes match.
IntermediateFlow approximate_intermediate_flow(const FlowField& fwd, const FlowField& bwd,
                                               double delta);

// Backward warp: out(x) = bilinear(I, x + F(x)), clamped at the border.
Image warp(const Image& img, const FlowField& flow);

// Round-trip consistency between the target frame t+δ and each source frame,
//   e(x) = ‖F̂(x) + bilinear(F_s, x + F̂(x))‖,
// where F̂ is the intermediate flow towards the source and F_s the source
// flow rescaled to reach t+δ (δ·F_fwd for frame t, (1-δ)·F_bwd for t+1).
// V = 1 where e ≤ τ and exp(-(e - τ)) above.
VisibilityPair visibility_maps(const FlowField& fwd, const FlowField& bwd, double delta,
                               double threshold_px);

// Weighted blend of the two warped source frames, normalised by
// λ = (1-δ)V_{t→t+δ} + δV_{t+1→t+δ}; where λ < 1e-6 the plain
// (1-δ)/δ blend is used instead.
Image interpolate_frame(const Image& start, const Image& end, double delta,
                        const IntermediateFlow& flows, const VisibilityPair& visibility);

// Convenience: approximate flows, visibility and blend in one call.
Image interpolate_frame(const Image& start, const Image& end, double delta,
                        const BidirectionalFlow& flows, double threshold_px = 1.0);

// Middlebury .flo: float 202021.25 tag, int32 width, int32 height, then
// little-endian float32 (dx, dy) pairs row-major.
FlowField read_flow(const std::string& path);
void write_flow(const std::string& path, const FlowField& flow);

// ---------------------------------------------------------------------------
// Flow providers

enum class FlowMethod { GroundTruth, Variational };

FlowMethod parse_flow_method(const std::string& name);

// Coarse-to-fine Horn–Schunck on luminance. Intensities are in [0, 1].
struct VariationalFlowOptions {
  double alpha = 0.1;      // smoothness weight
  int iterations = 150;    // Jacobi sweeps per warp
  int warps = 3;           // re-linearisations per pyramid level
  int levels = 4;          // pyramid depth (coarsest level at least 8 px)
};

FlowField horn_schunck(const Image& from, const Image& to,
                       const VariationalFlowOptions& opts = {});

// Both directions with the variational solver.
BidirectionalFlow estimate_bidirectional_flow(const Image& start, const Image& end,
                                              const VariationalFlowOptions& opts = {});

// Dispatching form. GroundTruth passes *ground_truth through and throws
// DataError when it is null.
BidirectionalFlow estimate_bidirectional_flow(const Image& start, const Image& end,
                                              FlowMethod method,
                                              const BidirectionalFlow* ground_truth,
                                              const VariationalFlowOptions& opts = {});

}  // namespace msnerf
