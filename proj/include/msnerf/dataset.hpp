#pragma once

// On-disk dataset layout and loading.
//
//   manifest.txt                 key = value settings plus a [files] table
//   poses.txt                    ground-truth cameras
//   train_poses.txt              cameras handed to the trainer (maybe noisy)
//   rgb/<view>/<t>.ppm           frames
//   rgb_mid/<view>/<t>.ppm       ground truth at (t + 0.5) / (T - 1), optional
//   depth/<view>/<t>.pfm         distance along the ray
//   flow/<view>/<t>_fwd.flo      F_{t→t+1}; _bwd is F_{t+1→t}
//   flow/<view>/<t>_fwd_occ.pgm  occlusion masks for the flows above
//   interp/<view>/<t>_<delta>.ppm  cached interpolated frames
//
// <view> is the rig view name (bottom, center, left, right, top).

#include "msnerf/geometry.hpp"
#include "msnerf/image.hpp"
#include "msnerf/interp.hpp"

#include <array>
#include <string>
#include <vector>

namespace msnerf {

struct DatasetManifest {
  int views = kRigViews;
  int frames = 0;
  int width = 0;
  int height = 0;
  double focal = 0.0;
  double baseline = 0.0;
  DepthBounds bounds;
  Vec3 background = Vec3::Zero();
  bool has_depth = false;
  bool has_flow = false;
  bool has_mid_frames = false;
  std::array<PoseSE3, kRigViews> poses;        // ground truth
  std::array<PoseSE3, kRigViews> train_poses;  // initialisation for training
  std::vector<std::string> files;              // relative to the dataset root

  CameraIntrinsics intrinsics() const { return {focal, width, height}; }
  double time(int frame) const;

  static std::string rgb_path(int view, int frame);
  static std::string mid_path(int view, int frame);
  static std::string depth_path(int view, int frame);
  static std::string flow_path(int view, int frame, bool forward);
  static std::string occlusion_path(int view, int frame, bool forward);
  static std::string interp_path(int view, int frame, double delta);

  // Writes manifest.txt, poses.txt and train_poses.txt into dir.
  void write(const std::string& dir) const;
  // Reads and validates; every listed file must exist. Throws DataError.
  static DatasetManifest read(const std::string& dir);
};

struct Dataset {
  std::string root;
  DatasetManifest manifest;
  std::vector<std::vector<Image>> rgb;  // [view][frame]

  static Dataset load(const std::string& dir);

  std::string path(const std::string& relative) const { return root + "/" + relative; }
  BidirectionalFlow ground_truth_flow(int view, int pair) const;
  Image mid_frame(int view, int pair) const;
  Image depth(int view, int frame) const;
};

struct InterpolationSettings {
  FlowMethod method = FlowMethod::GroundTruth;
  std::vector<double> deltas{0.2, 0.4, 0.6, 0.8};
  double visibility_threshold = 1.0;  // pixels
  VariationalFlowOptions variational;
  int threads = 1;
};

struct InterpolatedFrame {
  int view = 0;
  int pair = 0;  // between frames pair and pair + 1
  double delta = 0.0;
  double time = 0.0;
  Image rgb;
};

// Loads the cached frames under interp/, computing and storing any that are
// missing or were produced with different settings. Views in `views` only.
std::vector<InterpolatedFrame> prepare_interpolated_frames(const Dataset& data,
                                                           const std::vector<int>& views,
                                                           const InterpolationSettings& settings);

}  // namespace msnerf
