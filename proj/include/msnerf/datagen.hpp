#pragma once

// Procedural multiscopic scenes: analytic ray casting of spheres, boxes and
// planes with Lambertian shading, one linearly moving sphere, and exact
// per-pixel depth, flow and occlusion.

#include "msnerf/config.hpp"
#include "msnerf/geometry.hpp"
#include "msnerf/image.hpp"
#include "msnerf/interp.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace msnerf {

struct Material {
  Vec3 albedo = Vec3(0.7, 0.7, 0.7);
  double texture_frequency = 0.0;  // rad/m; 0 gives a flat colour
  double texture_amplitude = 0.25;
};

struct SpherePrim {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Material material;
};

struct BoxPrim {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
  Material material;
};

struct PlanePrim {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  Material material;
};

struct MovingSphere {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  double radius = 0.25;
  Material material;

  Vec3 center(double t) const { return start + t * (end - start); }
};

struct PosePerturbation {
  bool enabled = false;
  double rotation_deg = 0.5;  // magnitude of each camera's rotation offset
  double translation_m = 0.003;
  std::uint64_t seed = 1;
};

struct SceneSpec {
  int width = 1280;
  int height = 720;
  int frames = 24;
  double hfov_deg = 50.0;
  double baseline = 0.12;
  DepthBounds bounds{0.5, 6.0};
  Vec3 light_direction = Vec3(0.35, 0.8, 0.5);  // towards the light
  double ambient = 0.35;
  Vec3 background = Vec3::Zero();
  bool mid_frames = true;  // also render ground truth at (k + 0.5) / (T - 1)

  std::vector<SpherePrim> spheres;
  std::vector<BoxPrim> boxes;
  std::vector<PlanePrim> planes;
  std::optional<MovingSphere> mover;

  PosePerturbation perturbation;

  double focal() const;
  CameraIntrinsics intrinsics() const;
  void validate() const;
};

// Wall, floor, a few static objects and a sphere crossing left to right.
SceneSpec default_scene();

enum class Profile { Full, Desk };
Profile parse_profile(const std::string& name);
// Full: 1280x720, 24 frames. Desk: 160x120, 8 frames.
void apply_profile(SceneSpec& spec, Profile profile);

// Reads [scene], [sphere], [box], [plane], [mover] and [perturb] sections.
// When no primitive section is present the default scene is used.
SceneSpec scene_from_config(const Config& cfg);

struct SurfaceHit {
  double distance = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  const Material* material = nullptr;
  bool on_mover = false;
};

std::optional<SurfaceHit> cast_ray(const SceneSpec& spec, const Ray& ray, double time);

// Shaded colour of a hit; textures live in object space, so a point on the
// mover keeps its colour as it translates.
Vec3 shade(const SceneSpec& spec, const SurfaceHit& hit, double time);

struct FrameRender {
  Image rgb;    // 3 channels
  Image depth;  // distance along the ray, far where nothing is hit
  Image mover_mask;  // 1 where the pixel center sees the moving sphere
};

FrameRender render_frame(const SceneSpec& spec, int view, double time);

struct GroundTruthFlow {
  FlowField flow;
  Image occlusion;  // 1 where the pixel's surface point is hidden or leaves the frame at t_to
};

// Displacement of the surface point seen through each pixel center between
// t_from and t_to. Static and empty pixels get zero flow.
GroundTruthFlow ground_truth_flow(const SceneSpec& spec, int view, double t_from, double t_to);

// Camera-to-world poses of the rig, indexed by RigView.
std::array<PoseSE3, kRigViews> scene_poses(const SceneSpec& spec);

// Perturbed copies (fixed magnitude, seeded random directions).
std::array<PoseSE3, kRigViews> perturb_poses(const std::array<PoseSE3, kRigViews>& poses,
                                             const PosePerturbation& p);

inline double frame_time(int frame, int frames) {
  return frames > 1 ? static_cast<double>(frame) / (frames - 1) : 0.0;
}

struct DatasetManifest;

// Writes manifest.txt, poses.txt, train_poses.txt, rgb/, depth/, flow/ and,
// when enabled, rgb_mid/. Throws DataError naming the failing path.
DatasetManifest generate_dataset(const SceneSpec& spec, const std::string& out_dir,
                                 int threads = 1);

}  // namespace msnerf
