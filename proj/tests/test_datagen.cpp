#include "msnerf/datagen.hpp"

#include "msnerf/dataset.hpp"
#include "msnerf/error.hpp"
#include "msnerf/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace msnerf;
namespace fs = std::filesystem;

namespace {

SceneSpec small_scene() {
  SceneSpec s = default_scene();
  apply_profile(s, Profile::Desk);
  s.width = 80;
  s.height = 60;
  s.frames = 4;
  return s;
}

}  // namespace

TEST(Datagen, Profiles) {
  SceneSpec s = default_scene();
  apply_profile(s, Profile::Desk);
  EXPECT_EQ(s.width, 160);
  EXPECT_EQ(s.height, 120);
  EXPECT_EQ(s.frames, 8);
  apply_profile(s, Profile::Full);
  EXPECT_EQ(s.width, 1280);
  EXPECT_EQ(s.height, 720);
  EXPECT_EQ(s.frames, 24);
  EXPECT_EQ(parse_profile("desk"), Profile::Desk);
  EXPECT_THROW(parse_profile("tiny"), std::invalid_argument);
}

TEST(Datagen, FocalFromFieldOfView) {
  SceneSpec s = default_scene();
  s.width = 200;
  s.hfov_deg = 90.0;
  EXPECT_NEAR(s.focal(), 100.0, 1e-9);
}

TEST(Datagen, RayCastSphere) {
  SceneSpec s;
  s.spheres.push_back({Vec3(0, 0, -5), 1.0, {}});
  Ray r;
  r.origin = Vec3::Zero();
  r.direction = Vec3(0, 0, -1);
  r.near = 0.1;
  r.far = 10.0;
  const auto hit = cast_ray(s, r, 0.0);
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(hit->distance, 4.0, 1e-12);
  EXPECT_LT((hit->normal - Vec3(0, 0, 1)).norm(), 1e-12);
  r.direction = Vec3(0, 1, 0);
  EXPECT_FALSE(cast_ray(s, r, 0.0).has_value());
}

TEST(Datagen, DepthMatchesGeometryAcrossViews) {
  // A surface point seen by the center camera projects into the right camera
  // at the pixel whose depth is its distance from that camera, on the same row.
  const SceneSpec s = small_scene();
  const auto poses = scene_poses(s);
  const CameraIntrinsics intr = s.intrinsics();
  const int center = static_cast<int>(RigView::Center);
  const int right = static_cast<int>(RigView::Right);
  const FrameRender a = render_frame(s, center, 0.0);
  const FrameRender b = render_frame(s, right, 0.0);
  int checked = 0, agree = 0;
  for (int y = 2; y < s.height - 2; y += 3) {
    for (int x = 2; x < s.width - 2; x += 3) {
      const double d = a.depth.at(x, y);
      if (d >= s.bounds.far) continue;
      const Ray ray = generate_ray(intr, poses[center], {x + 0.5, y + 0.5}, s.bounds);
      const Vec3 p = ray.at(d);
      const auto px = project(intr, poses[right], p);
      ASSERT_TRUE(px.has_value());
      EXPECT_NEAR(px->v, y + 0.5, 1e-6);
      // Parallel cameras: disparity f·b/z_cam.
      const double zc = -(p - poses[center].translation).z();
      EXPECT_NEAR(x + 0.5 - px->u, s.focal() * s.baseline / zc, 1e-6);
      const int u = static_cast<int>(std::floor(px->u));
      if (u < 0 || u >= s.width) continue;
      ++checked;
      const double expect = (p - poses[right].translation).norm();
      if (std::abs(b.depth.at(u, y) - expect) < 0.02 * expect) ++agree;
    }
  }
  ASSERT_GT(checked, 200);
  EXPECT_GT(static_cast<double>(agree) / checked, 0.9);
}

TEST(Datagen, GroundTruthFlowWarpsFramesTogether) {
  const SceneSpec s = small_scene();
  const int view = static_cast<int>(RigView::Center);
  const double t0 = frame_time(1, s.frames), t1 = frame_time(2, s.frames);
  const FrameRender a = render_frame(s, view, t0);
  const FrameRender b = render_frame(s, view, t1);
  const GroundTruthFlow gt = ground_truth_flow(s, view, t0, t1);
  const Image back = warp(quantized(b.rgb), gt.flow);
  const Image qa = quantized(a.rgb);
  double acc = 0.0;
  int n = 0;
  int moving = 0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (gt.occlusion.at(x, y) > 0.5f) continue;
      if (gt.flow.dx(x, y) != 0.0f || gt.flow.dy(x, y) != 0.0f) ++moving;
      for (int c = 0; c < 3; ++c) acc += std::abs(back.at(x, y, c) - qa.at(x, y, c));
      ++n;
    }
  }
  EXPECT_GT(moving, 20);
  EXPECT_LT(acc / (3.0 * n), 2.0 / 255.0);
}

TEST(Datagen, FlowOfStaticSceneIsZeroAndMoverFlowMatchesProjection) {
  const SceneSpec s = small_scene();
  const int view = static_cast<int>(RigView::Left);
  const GroundTruthFlow gt = ground_truth_flow(s, view, 0.0, 1.0 / 3.0);
  const FrameRender f = render_frame(s, view, 0.0);
  const CameraIntrinsics intr = s.intrinsics();
  const PoseSE3 pose = scene_poses(s)[view];
  const Vec3 motion = s.mover->center(1.0 / 3.0) - s.mover->center(0.0);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (f.mover_mask.at(x, y) < 0.5f) {
        EXPECT_EQ(gt.flow.dx(x, y), 0.0f);
        EXPECT_EQ(gt.flow.dy(x, y), 0.0f);
        continue;
      }
      const Ray r = generate_ray(intr, pose, {x + 0.5, y + 0.5}, s.bounds);
      const auto to = project(intr, pose, r.at(f.depth.at(x, y)) + motion);
      ASSERT_TRUE(to.has_value());
      EXPECT_NEAR(gt.flow.dx(x, y), to->u - (x + 0.5), 1e-2);
      EXPECT_NEAR(gt.flow.dy(x, y), to->v - (y + 0.5), 1e-2);
    }
  }
}

TEST(Datagen, PerturbationHasFixedMagnitude) {
  const auto poses = rig_layout(0.12);
  PosePerturbation p;
  p.enabled = true;
  const auto noisy = perturb_poses(poses, p);
  for (int v = 0; v < kRigViews; ++v) {
    const Mat3 rel = noisy[v].rotation_matrix() * poses[v].rotation_matrix().transpose();
    EXPECT_NEAR(rotation_angle(rel) * 180.0 / M_PI, 0.5, 1e-9);
    EXPECT_NEAR((noisy[v].translation - poses[v].translation).norm(), 0.003, 1e-12);
  }
  const auto again = perturb_poses(poses, p);
  EXPECT_EQ(noisy[2].translation, again[2].translation);
  p.seed = 2;
  EXPECT_NE(perturb_poses(poses, p)[2].translation, noisy[2].translation);
}

TEST(Datagen, GeneratedDatasetLoads) {
  const fs::path dir = fs::temp_directory_path() / "msnerf_datagen_test";
  fs::remove_all(dir);
  SceneSpec s = small_scene();
  s.width = 32;
  s.height = 24;
  s.frames = 3;
  s.perturbation.enabled = true;
  const DatasetManifest m = generate_dataset(s, dir.string(), 2);
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  const Dataset d = Dataset::load(dir.string());
  EXPECT_EQ(d.manifest.frames, 3);
  EXPECT_EQ(d.manifest.width, 32);
  EXPECT_NEAR(d.manifest.focal, s.focal(), 1e-9);
  EXPECT_TRUE(d.manifest.has_flow && d.manifest.has_depth && d.manifest.has_mid_frames);
  EXPECT_EQ(d.rgb.size(), 5u);
  EXPECT_EQ(d.rgb[1].size(), 3u);
  EXPECT_NE(d.manifest.poses[0].translation, d.manifest.train_poses[0].translation);
  EXPECT_LT((d.manifest.poses[3].translation - m.poses[3].translation).norm(), 1e-15);
  const BidirectionalFlow f = d.ground_truth_flow(1, 0);
  EXPECT_EQ(f.forward.width(), 32);
  const Image mid = d.mid_frame(1, 1);
  EXPECT_EQ(mid.width, 32);
  EXPECT_EQ(d.depth(0, 2).channels, 1);
  // psnr of a frame against itself through the loader
  EXPECT_EQ(psnr(d.rgb[2][1], read_pnm(d.path(DatasetManifest::rgb_path(2, 1)))), kPsnrCap);

  fs::remove(dir / DatasetManifest::rgb_path(4, 2));
  EXPECT_THROW(Dataset::load(dir.string()), DataError);
  fs::remove_all(dir);
  EXPECT_THROW(Dataset::load(dir.string()), DataError);
}

TEST(Datagen, InterpolationCacheIsStable) {
  const fs::path dir = fs::temp_directory_path() / "msnerf_interp_cache_test";
  fs::remove_all(dir);
  SceneSpec s = small_scene();
  s.width = 40;
  s.height = 30;
  s.frames = 3;
  generate_dataset(s, dir.string(), 1);
  const Dataset d = Dataset::load(dir.string());
  InterpolationSettings is;
  is.deltas = {0.5};
  const auto fresh = prepare_interpolated_frames(d, {1, 2}, is);
  ASSERT_EQ(fresh.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / DatasetManifest::interp_path(1, 0, 0.5)));
  const auto cached = prepare_interpolated_frames(d, {1, 2}, is);
  ASSERT_EQ(cached.size(), fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    EXPECT_EQ(cached[i].view, fresh[i].view);
    EXPECT_DOUBLE_EQ(cached[i].time, fresh[i].time);
    EXPECT_EQ(cached[i].rgb.pixels, fresh[i].rgb.pixels);
  }
  EXPECT_NEAR(fresh[1].time, 0.75, 1e-12);
  is.deltas = {0.0};
  EXPECT_THROW(prepare_interpolated_frames(d, {1}, is), std::invalid_argument);
  fs::remove_all(dir);
}
