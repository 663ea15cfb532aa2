#pragma once

// Joint optimisation of the radiance field, the time encoder and the rig
// cameras from a multiscopic dataset.

#include "msnerf/dataset.hpp"
#include "msnerf/field.hpp"
#include "msnerf/geometry.hpp"
#include "msnerf/renderer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msnerf {

class Config;

enum class Precision { Float, Double };

struct TrainConfig {
  int rays_per_step = 6400;
  int samples_per_ray = 128;
  double lr0 = 1e-3;
  double lr_floor = 1e-5;
  int decay_period = 100;  // epochs
  double decay_factor = 0.631;
  int epochs = 1200;
  int max_steps_per_epoch = 200;
  double temporal_weight = 0.1;
  double temporal_ray_ratio = 0.25;  // temporal rays per photometric ray
  bool optimize_field = true;  // network and time encoder
  bool optimize_cameras = true;
  bool optimize_focal = true;
  bool per_frame_poses = false;
  double camera_lr_scale = 1.0;
  int camera_warmup_epochs = 0;  // cameras stay fixed for these first epochs
  bool stratified = true;
  int holdout_view = -1;  // -1 trains on all five views
  int eval_every = 1;     // epochs between held-out evaluations (0: last only)
  int checkpoint_every = 0;
  int chunk_rays = 128;
  int threads = 1;
  Precision precision = Precision::Float;
  std::uint64_t seed = 0;
  FieldConfig field;
  InterpolationSettings interp;

  void validate() const;
};

// Reads [train], [field], [encoding] and [interp] sections over `base`.
TrainConfig train_config_from(const Config& cfg, TrainConfig base = {});

// Full-scale defaults scaled down for a single CPU core.
TrainConfig desk_train_config();

enum class Ablation { None, NoTime, NoCameraOptimization, NoTemporal };
Ablation parse_ablation(const std::string& name);
void apply_ablation(TrainConfig& cfg, Ablation a);

// max(lr0 · γ^⌊epoch / period⌋, lr_floor).
double lr_schedule(int epoch, const TrainConfig& cfg);

// ⌈pixels / rays_per_step⌉ capped at max_steps_per_epoch.
int steps_per_epoch(long long training_pixels, const TrainConfig& cfg);

struct LossResult {
  double value = 0.0;
  std::vector<Vec3> gradient;  // d value / d rendered
};

// Mean over every colour channel of every ray of the squared difference.
// Throws std::invalid_argument for empty or mismatched batches.
LossResult mse_loss(std::span<const Vec3> rendered, std::span<const Vec3> target);

// The same estimator against flow-interpolated pixels; the target carries
// no gradient.
LossResult temporal_loss(std::span<const Vec3> rendered, std::span<const Vec3> interpolated);

// Adam with bias correction. Moments are kept in double precision.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void resize(std::size_t n);
};

template <typename Scalar>
void adam_update(std::span<Scalar> params, std::span<const Scalar> grads, AdamState& state,
                 double lr);

// Learnable camera parameters: one pose per view, or per (view, frame) when
// per-frame poses are on, and a single focal length stored as f / width.
struct CameraState {
  int views = kRigViews;
  int frames = 1;
  bool per_frame = false;
  int width = 1;
  int height = 1;
  double focal_normalized = 1.0;
  std::vector<PoseSE3> poses;

  int count() const { return static_cast<int>(poses.size()); }
  int index(int view, int frame) const { return per_frame ? view * frames + frame : view; }
  const PoseSE3& pose(int view, int frame) const { return poses.at(index(view, frame)); }
  CameraIntrinsics intrinsics() const { return {focal_normalized * width, width, height}; }
};

// Similarity transform x_learned ≈ s · R · x_true + t.
struct Alignment {
  Mat3 rotation = Mat3::Identity();
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  PoseSE3 apply(const PoseSE3& true_pose) const;
};

// Rotation from the chordal mean of R_learned R_trueᵀ, then scale and
// translation by least squares over the camera centers.
Alignment align_cameras(std::span<const PoseSE3> learned, std::span<const PoseSE3> truth);

struct PoseErrors {
  double mean_rotation_deg = 0.0;
  double max_rotation_deg = 0.0;
  double mean_translation_m = 0.0;
  double max_translation_m = 0.0;
};

// Errors after alignment, in the ground-truth metric.
PoseErrors pose_errors(std::span<const PoseSE3> learned, std::span<const PoseSE3> truth);

struct StepLosses {
  double mse = 0.0;
  double temporal = 0.0;
  double total = 0.0;
  bool skipped = false;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double l_mse = 0.0;
  double l_temporal = 0.0;
  double psnr_holdout = 0.0;  // NaN when not evaluated
};

struct Checkpoint;

template <typename Scalar>
class Trainer {
 public:
  Trainer(const Dataset& data, const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  RadianceField<Scalar>& field() { return field_; }
  const RadianceField<Scalar>& field() const { return field_; }
  CameraState& cameras() { return cameras_; }
  const CameraState& cameras() const { return cameras_; }
  int epoch() const { return epoch_; }
  std::int64_t global_step() const { return step_; }
  std::int64_t skipped_steps() const { return skipped_; }
  int steps_per_epoch() const { return steps_per_epoch_; }
  const std::vector<int>& training_views() const { return train_views_; }
  const std::vector<InterpolatedFrame>& interpolated_frames() const { return interp_; }

  // One optimisation step at the current global step and learning rate.
  StepLosses step(double lr);

  // Runs the remaining steps of the current epoch and evaluates if due.
  EpochMetrics run_epoch();

  // Trains until cfg.epochs, calling on_epoch after each epoch.
  void train(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  // Losses of the step the trainer would take next, without updating.
  StepLosses evaluate_step() const;

  // Gradient of the total loss of the next step with respect to every
  // parameter group, in the order network, time encoder, focal, rotations,
  // translations.
  struct Gradients {
    std::vector<Scalar> network;
    std::vector<Scalar> time;
    double focal = 0.0;
    std::vector<Vec3> rotation;
    std::vector<Vec3> translation;
    StepLosses losses;
  };
  Gradients compute_gradients() const;

  // Pose of any rig view in the learned frame: ground truth mapped through
  // the alignment of the training cameras.
  PoseSE3 aligned_pose(int view) const;
  RenderSettings render_settings() const;
  RenderedView render_view(int view, double time, bool use_training_camera) const;

  // Mean PSNR over all frames of the held-out view; NaN without one.
  double holdout_psnr() const;
  // Mean PSNR over all frames of the training views with the learned cameras.
  double training_psnr() const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  struct RaySpec {
    int camera = 0;
    PixelCoord pixel;
    int slot = 0;  // index into the step's distinct times
    Vec3 target = Vec3::Zero();
    bool temporal = false;
  };
  struct StepPlan {
    std::vector<RaySpec> rays;
    std::vector<double> times;
    int photometric = 0;
    int temporal = 0;
    std::uint64_t seed = 0;
  };

  StepPlan plan_step(std::int64_t step) const;
  Gradients gradients_for(const StepPlan& plan, bool want_camera) const;
  double psnr_mean(const std::vector<int>& views, bool training_camera) const;

  const Dataset* data_;
  TrainConfig cfg_;
  RadianceField<Scalar> field_;
  CameraState cameras_;
  std::vector<int> train_views_;
  std::vector<InterpolatedFrame> interp_;
  int steps_per_epoch_ = 1;
  int epoch_ = 0;
  int step_in_epoch_ = 0;
  std::int64_t step_ = 0;
  std::int64_t skipped_ = 0;
  double epoch_mse_ = 0.0;
  double epoch_temporal_ = 0.0;
  AdamState adam_network_, adam_time_, adam_focal_, adam_rotation_, adam_translation_;
};

}  // namespace msnerf
