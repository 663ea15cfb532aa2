#include "msnerf/datagen.hpp"

#include "msnerf/dataset.hpp"
#include "msnerf/error.hpp"
#include "msnerf/nn.hpp"
#include "msnerf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>

namespace msnerf {

namespace {

constexpr double kHitEpsilon = 1e-9;

std::optional<double> intersect_sphere(const Ray& ray, const Vec3& center, double radius) {
  const Vec3 oc = ray.origin - center;
  const double b = ray.direction.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  double t = -b - root;
  if (t <= kHitEpsilon) t = -b + root;
  if (t <= kHitEpsilon) return std::nullopt;
  return t;
}

std::optional<std::pair<double, Vec3>> intersect_box(const Ray& ray, const BoxPrim& box) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  int exit_axis = -1;
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    const double o = ray.origin[a];
    if (std::abs(d) < 1e-300) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[a] - o) / d;
    double t1 = (box.max[a] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_enter) {
      t_enter = t0;
      enter_axis = a;
    }
    if (t1 < t_exit) {
      t_exit = t1;
      exit_axis = a;
    }
  }
  if (t_enter > t_exit) return std::nullopt;
  double t = t_enter;
  int axis = enter_axis;
  if (t <= kHitEpsilon) {
    t = t_exit;
    axis = exit_axis;
  }
  if (t <= kHitEpsilon || axis < 0) return std::nullopt;
  Vec3 n = Vec3::Zero();
  n[axis] = ray.direction[axis] > 0.0 ? -1.0 : 1.0;
  return std::make_pair(t, n);
}

std::optional<double> intersect_plane(const Ray& ray, const PlanePrim& plane) {
  const double denom = ray.direction.dot(plane.normal);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (plane.point - ray.origin).dot(plane.normal) / denom;
  if (t <= kHitEpsilon) return std::nullopt;
  return t;
}

double texture(const Material& m, const Vec3& p) {
  if (m.texture_frequency <= 0.0 || m.texture_amplitude == 0.0) return 1.0;
  const double w = m.texture_frequency;
  const double s = (std::sin(w * p.x() + 0.3) * std::cos(w * p.y() + 1.1) +
                    std::sin(w * p.z() + 2.3) * std::cos(0.7 * w * p.x() + 0.5) +
                    std::sin(1.3 * w * p.y() + 0.9) * std::cos(0.8 * w * p.z() + 0.2)) /
                   3.0;
  return 1.0 + m.texture_amplitude * s;
}

double gaussian(std::mt19937_64& rng) {
  const double u1 = std::max(nn::unit_uniform(rng), 1e-300);
  const double u2 = nn::unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec3 random_unit(std::mt19937_64& rng) {
  Vec3 v;
  do {
    v = Vec3(gaussian(rng), gaussian(rng), gaussian(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Material read_material(const ConfigSection& s, const Material& fallback) {
  Material m = fallback;
  m.albedo = s.get_vec3("albedo", m.albedo);
  m.texture_frequency = s.get_double("texture_frequency", m.texture_frequency);
  m.texture_amplitude = s.get_double("texture_amplitude", m.texture_amplitude);
  return m;
}

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

}  // namespace

double SceneSpec::focal() const {
  return 0.5 * width / std::tan(0.5 * hfov_deg * std::numbers::pi / 180.0);
}

CameraIntrinsics SceneSpec::intrinsics() const { return {focal(), width, height}; }

void SceneSpec::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("scene resolution must be positive");
  if (frames < 2) throw std::invalid_argument("scene needs at least 2 frames");
  if (!(hfov_deg > 0.0 && hfov_deg < 179.0)) throw std::invalid_argument("hfov out of range");
  if (!(baseline > 0.0)) throw std::invalid_argument("baseline must be positive");
  if (!(bounds.near > 0.0 && bounds.near < bounds.far)) {
    throw std::invalid_argument("scene bounds must satisfy 0 < near < far");
  }
  if (light_direction.norm() == 0.0) throw std::invalid_argument("light direction is zero");
  for (const auto& s : spheres) {
    if (!(s.radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  }
  for (const auto& b : boxes) {
    if (!(b.min.array() < b.max.array()).all()) {
      throw std::invalid_argument("box min must be below max");
    }
  }
  for (const auto& p : planes) {
    if (p.normal.norm() == 0.0) throw std::invalid_argument("plane normal is zero");
  }
  if (mover && !(mover->radius > 0.0)) throw std::invalid_argument("mover radius must be positive");
}

SceneSpec default_scene() {
  SceneSpec s;
  s.planes.push_back({Vec3(0, 0, -4.0), Vec3::UnitZ(), {Vec3(0.55, 0.6, 0.7), 7.0, 0.35}});
  s.planes.push_back({Vec3(0, -0.8, 0), Vec3::UnitY(), {Vec3(0.6, 0.55, 0.45), 8.0, 0.35}});
  s.spheres.push_back({Vec3(-0.75, -0.4, -2.6), 0.4, {Vec3(0.3, 0.75, 0.35), 14.0, 0.3}});
  s.spheres.push_back({Vec3(0.45, 0.4, -1.5), 0.14, {Vec3(0.85, 0.8, 0.3), 30.0, 0.3}});
  s.boxes.push_back({Vec3(0.4, -0.8, -3.0), Vec3(1.0, -0.15, -2.4), {Vec3(0.75, 0.45, 0.3), 12.0, 0.3}});
  MovingSphere m;
  m.start = Vec3(-0.33, 0.05, -2.0);
  m.end = Vec3(0.33, 0.05, -2.0);
  m.radius = 0.24;
  m.material = {Vec3(0.9, 0.35, 0.3), 18.0, 0.3};
  s.mover = m;
  return s;
}

Profile parse_profile(const std::string& name) {
  if (name == "desk") return Profile::Desk;
  if (name == "full") return Profile::Full;
  throw std::invalid_argument("unknown profile '" + name + "' (expected desk or full)");
}

void apply_profile(SceneSpec& spec, Profile profile) {
  if (profile == Profile::Desk) {
    spec.width = 160;
    spec.height = 120;
    spec.frames = 8;
  } else {
    spec.width = 1280;
    spec.height = 720;
    spec.frames = 24;
  }
}

SceneSpec scene_from_config(const Config& cfg) {
  cfg.reject_unknown_sections({"scene", "sphere", "box", "plane", "mover", "perturb"});
  const bool custom = !cfg.sections("sphere").empty() || !cfg.sections("box").empty() ||
                      !cfg.sections("plane").empty() || !cfg.sections("mover").empty();
  SceneSpec spec = custom ? SceneSpec{} : default_scene();

  const ConfigSection& sc = cfg.section("scene");
  if (sc.has("profile")) apply_profile(spec, parse_profile(sc.get_string("profile", "")));
  spec.width = sc.get_int("width", spec.width);
  spec.height = sc.get_int("height", spec.height);
  spec.frames = sc.get_int("frames", spec.frames);
  spec.hfov_deg = sc.get_double("hfov_deg", spec.hfov_deg);
  spec.baseline = sc.get_double("baseline", spec.baseline);
  spec.bounds.near = sc.get_double("near", spec.bounds.near);
  spec.bounds.far = sc.get_double("far", spec.bounds.far);
  spec.light_direction = sc.get_vec3("light", spec.light_direction);
  spec.ambient = sc.get_double("ambient", spec.ambient);
  spec.background = sc.get_vec3("background", spec.background);
  spec.mid_frames = sc.get_bool("mid_frames", spec.mid_frames);
  sc.reject_unknown();
  cfg.section("").reject_unknown();

  const Material base;
  for (const auto* s : cfg.sections("sphere")) {
    SpherePrim p;
    p.center = s->get_vec3("center", p.center);
    p.radius = s->get_double("radius", p.radius);
    p.material = read_material(*s, base);
    s->reject_unknown();
    spec.spheres.push_back(p);
  }
  for (const auto* s : cfg.sections("box")) {
    BoxPrim p;
    p.min = s->get_vec3("min", p.min);
    p.max = s->get_vec3("max", p.max);
    p.material = read_material(*s, base);
    s->reject_unknown();
    spec.boxes.push_back(p);
  }
  for (const auto* s : cfg.sections("plane")) {
    PlanePrim p;
    p.point = s->get_vec3("point", p.point);
    p.normal = s->get_vec3("normal", p.normal);
    p.material = read_material(*s, base);
    s->reject_unknown();
    spec.planes.push_back(p);
  }
  const auto movers = cfg.sections("mover");
  if (movers.size() > 1) {
    throw ConfigError("only one [mover] section is supported (second at line " +
                      std::to_string(movers[1]->line()) + ")");
  }
  if (!movers.empty()) {
    const ConfigSection& s = *movers.front();
    MovingSphere m;
    m.start = s.get_vec3("start", m.start);
    m.end = s.get_vec3("end", m.end);
    m.radius = s.get_double("radius", m.radius);
    m.material = read_material(s, base);
    s.reject_unknown();
    spec.mover = m;
  }
  const ConfigSection& pp = cfg.section("perturb");
  spec.perturbation.enabled = pp.get_bool("enabled", spec.perturbation.enabled);
  spec.perturbation.rotation_deg = pp.get_double("rotation_deg", spec.perturbation.rotation_deg);
  spec.perturbation.translation_m =
      pp.get_double("translation_mm", spec.perturbation.translation_m * 1e3) * 1e-3;
  spec.perturbation.seed =
      static_cast<std::uint64_t>(pp.get_int("seed", static_cast<int>(spec.perturbation.seed)));
  pp.reject_unknown();
  spec.validate();
  return spec;
}

std::optional<SurfaceHit> cast_ray(const SceneSpec& spec, const Ray& ray, double time) {
  std::optional<SurfaceHit> best;
  auto offer = [&](double t, const Vec3& normal, const Material* m, bool mover) {
    if (best && t >= best->distance) return;
    SurfaceHit h;
    h.distance = t;
    h.point = ray.origin + t * ray.direction;
    h.normal = normal;
    h.material = m;
    h.on_mover = mover;
    best = h;
  };
  for (const auto& s : spec.spheres) {
    if (auto t = intersect_sphere(ray, s.center, s.radius)) {
      offer(*t, (ray.origin + *t * ray.direction - s.center).normalized(), &s.material, false);
    }
  }
  for (const auto& b : spec.boxes) {
    if (auto hit = intersect_box(ray, b)) offer(hit->first, hit->second, &b.material, false);
  }
  for (const auto& p : spec.planes) {
    if (auto t = intersect_plane(ray, p)) {
      Vec3 n = p.normal.normalized();
      if (n.dot(ray.direction) > 0.0) n = -n;
      offer(*t, n, &p.material, false);
    }
  }
  if (spec.mover) {
    const Vec3 c = spec.mover->center(time);
    if (auto t = intersect_sphere(ray, c, spec.mover->radius)) {
      offer(*t, (ray.origin + *t * ray.direction - c).normalized(), &spec.mover->material, true);
    }
  }
  return best;
}

Vec3 shade(const SceneSpec& spec, const SurfaceHit& hit, double time) {
  const Vec3 p = hit.on_mover ? Vec3(hit.point - spec.mover->center(time)) : hit.point;
  const double tex = texture(*hit.material, p);
  const double lambert = std::max(0.0, hit.normal.dot(spec.light_direction.normalized()));
  const double light = spec.ambient + (1.0 - spec.ambient) * lambert;
  Vec3 c = hit.material->albedo * (tex * light);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::array<PoseSE3, kRigViews> scene_poses(const SceneSpec& spec) {
  return rig_layout(spec.baseline);
}

std::array<PoseSE3, kRigViews> perturb_poses(const std::array<PoseSE3, kRigViews>& poses,
                                             const PosePerturbation& p) {
  std::mt19937_64 rng(p.seed);
  std::array<PoseSE3, kRigViews> out = poses;
  const double angle = p.rotation_deg * std::numbers::pi / 180.0;
  for (auto& pose : out) {
    const Vec3 axis = random_unit(rng);
    const Vec3 shift = random_unit(rng);
    const Mat3 r = rodrigues_to_matrix({angle * axis}) * pose.rotation_matrix();
    pose.rotation = matrix_to_rotation_vec(r);
    pose.translation += p.translation_m * shift;
  }
  return out;
}

FrameRender render_frame(const SceneSpec& spec, int view, double time) {
  if (!(time >= 0.0 && time <= 1.0)) throw std::invalid_argument("render time must lie in [0, 1]");
  const CameraIntrinsics intr = spec.intrinsics();
  const PoseSE3 pose = scene_poses(spec).at(static_cast<std::size_t>(view));
  FrameRender out{Image(spec.width, spec.height, 3), Image(spec.width, spec.height, 1),
                  Image(spec.width, spec.height, 1)};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Ray ray = generate_ray(intr, pose, {x + 0.5, y + 0.5}, spec.bounds);
      const auto hit = cast_ray(spec, ray, time);
      Vec3 c = spec.background;
      float depth = static_cast<float>(spec.bounds.far);
      if (hit) {
        c = shade(spec, *hit, time);
        depth = static_cast<float>(hit->distance);
        out.mover_mask.at(x, y) = hit->on_mover ? 1.0f : 0.0f;
      }
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = static_cast<float>(c[ch]);
      out.depth.at(x, y) = depth;
    }
  }
  return out;
}

GroundTruthFlow ground_truth_flow(const SceneSpec& spec, int view, double t_from, double t_to) {
  const CameraIntrinsics intr = spec.intrinsics();
  const PoseSE3 pose = scene_poses(spec).at(static_cast<std::size_t>(view));
  GroundTruthFlow out{FlowField(spec.width, spec.height), Image(spec.width, spec.height, 1)};
  const Vec3 shift = spec.mover ? Vec3(spec.mover->center(t_to) - spec.mover->center(t_from))
                                : Vec3::Zero();
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Ray ray = generate_ray(intr, pose, {x + 0.5, y + 0.5}, spec.bounds);
      const auto hit = cast_ray(spec, ray, t_from);
      if (!hit) continue;
      bool occluded = false;
      if (!hit->on_mover) {
        const auto later = cast_ray(spec, ray, t_to);
        occluded = !later || later->distance < hit->distance * (1.0 - 1e-9) - 1e-9;
      } else {
        const Vec3 moved = hit->point + shift;
        const auto q = project(intr, pose, moved);
        if (!q) {
          occluded = true;
        } else {
          out.flow.dx(x, y) = static_cast<float>(q->u - (x + 0.5));
          out.flow.dy(x, y) = static_cast<float>(q->v - (y + 0.5));
          if (q->u < 0.0 || q->u >= spec.width || q->v < 0.0 || q->v >= spec.height) {
            occluded = true;
          } else {
            const Vec3 to = moved - pose.translation;
            const double dist = to.norm();
            Ray r{pose.translation, to / dist, spec.bounds.near, spec.bounds.far};
            const auto seen = cast_ray(spec, r, t_to);
            occluded = !seen || !seen->on_mover || seen->distance < dist * (1.0 - 1e-9) - 1e-9;
          }
        }
      }
      out.occlusion.at(x, y) = occluded ? 1.0f : 0.0f;
    }
  }
  return out;
}

DatasetManifest generate_dataset(const SceneSpec& spec, const std::string& out_dir, int threads) {
  spec.validate();
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  ensure_dir(root);
  for (int v = 0; v < kRigViews; ++v) {
    const std::string name = rig_view_name(v);
    ensure_dir(root / "rgb" / name);
    ensure_dir(root / "depth" / name);
    ensure_dir(root / "flow" / name);
    if (spec.mid_frames) ensure_dir(root / "rgb_mid" / name);
  }

  DatasetManifest m;
  m.views = kRigViews;
  m.frames = spec.frames;
  m.width = spec.width;
  m.height = spec.height;
  m.focal = spec.focal();
  m.baseline = spec.baseline;
  m.bounds = spec.bounds;
  m.background = spec.background;
  m.has_depth = true;
  m.has_flow = true;
  m.has_mid_frames = spec.mid_frames;
  m.poses = scene_poses(spec);
  m.train_poses = spec.perturbation.enabled ? perturb_poses(m.poses, spec.perturbation) : m.poses;

  const int frames = spec.frames;
  parallel_for(kRigViews * frames, threads, [&](int job) {
    const int v = job / frames;
    const int k = job % frames;
    const FrameRender f = render_frame(spec, v, frame_time(k, frames));
    write_ppm((root / DatasetManifest::rgb_path(v, k)).string(), f.rgb);
    write_pfm((root / DatasetManifest::depth_path(v, k)).string(), f.depth);
  });
  const int pairs = frames - 1;
  parallel_for(kRigViews * pairs, threads, [&](int job) {
    const int v = job / pairs;
    const int k = job % pairs;
    const double t0 = frame_time(k, frames);
    const double t1 = frame_time(k + 1, frames);
    for (bool fwd : {true, false}) {
      const GroundTruthFlow g = fwd ? ground_truth_flow(spec, v, t0, t1)
                                    : ground_truth_flow(spec, v, t1, t0);
      write_flow((root / DatasetManifest::flow_path(v, k, fwd)).string(), g.flow);
      write_pgm((root / DatasetManifest::occlusion_path(v, k, fwd)).string(), g.occlusion);
    }
    if (spec.mid_frames) {
      const FrameRender mid = render_frame(spec, v, 0.5 * (t0 + t1));
      write_ppm((root / DatasetManifest::mid_path(v, k)).string(), mid.rgb);
    }
  });

  for (int v = 0; v < kRigViews; ++v) {
    for (int k = 0; k < frames; ++k) {
      m.files.push_back(DatasetManifest::rgb_path(v, k));
      m.files.push_back(DatasetManifest::depth_path(v, k));
    }
    for (int k = 0; k < pairs; ++k) {
      for (bool fwd : {true, false}) {
        m.files.push_back(DatasetManifest::flow_path(v, k, fwd));
        m.files.push_back(DatasetManifest::occlusion_path(v, k, fwd));
      }
      if (spec.mid_frames) m.files.push_back(DatasetManifest::mid_path(v, k));
    }
  }
  m.write(out_dir);
  return m;
}

}  // namespace msnerf
