#pragma once

// Training checkpoints.
//
//   bytes 0..7   "MSNERF01"
//   u64          header length in bytes
//   header       text in the config grammar: the training configuration
//                ([train], [field], [encoding], [interp]) followed by
//                [checkpoint] counters and dataset facts and a [layers] table
//                (one "layer = offset in out activation" line per dense layer,
//                network first, then the time encoder)
//   arrays       each as u64 count then count little-endian f64 values, in
//                this order: network, time encoder, focal, rotations (3 per
//                camera), translations (3 per camera), ground-truth poses
//                (6 per rig view), then for each Adam group (network, time,
//                focal, rotation, translation): step, m, v
//
// Nothing time-dependent is written, so equal training runs give equal files.

#include "msnerf/field.hpp"
#include "msnerf/trainer.hpp"

#include <array>
#include <string>
#include <vector>

namespace msnerf {

struct Checkpoint {
  TrainConfig config;
  std::vector<double> network;
  std::vector<double> time;
  CameraState cameras;
  std::array<PoseSE3, kRigViews> true_poses;
  int frames = 2;
  DepthBounds bounds;
  Vec3 background = Vec3::Zero();
  std::array<AdamState, 5> adam;  // network, time, focal, rotation, translation
  int epoch = 0;
  int step_in_epoch = 0;
  std::int64_t step = 0;
  std::int64_t skipped = 0;
  double epoch_mse = 0.0;
  double epoch_temporal = 0.0;
};

// Text form of a training configuration; train_config_from reads it back.
std::string train_config_text(const TrainConfig& cfg);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Throws DataError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::string& path);

// Field with the checkpoint's architecture and weights.
template <typename Scalar>
RadianceField<Scalar> field_from_checkpoint(const Checkpoint& ckpt);

// Camera for a rig view: the learned pose for training views (nearest
// frame when poses are per frame), otherwise the ground-truth pose mapped
// through the alignment of the training cameras.
PoseSE3 checkpoint_view_pose(const Checkpoint& ckpt, int view, double time);

}  // namespace msnerf
