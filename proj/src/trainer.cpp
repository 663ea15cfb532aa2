#include "msnerf/trainer.hpp"

#include "msnerf/checkpoint.hpp"
#include "msnerf/config.hpp"
#include "msnerf/error.hpp"
#include "msnerf/log.hpp"
#include "msnerf/metrics.hpp"
#include "msnerf/parallel.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace msnerf {

namespace {

constexpr std::uint64_t kStepStream = 0x7f4a7c15e3779b97ULL;

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

bool all_finite(const std::vector<Vec3>& v) {
  for (const Vec3& x : v) {
    if (!x.allFinite()) return false;
  }
  return true;
}

std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

}  // namespace

void TrainConfig::validate() const {
  if (rays_per_step < 1) throw std::invalid_argument("rays_per_step must be positive");
  if (samples_per_ray < 2) throw std::invalid_argument("samples_per_ray must be at least 2");
  if (!(lr0 > lr_floor && lr_floor > 0.0)) {
    throw std::invalid_argument("learning rates must satisfy lr0 > lr_floor > 0");
  }
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw std::invalid_argument("decay_factor must lie in (0, 1)");
  }
  if (decay_period < 1) throw std::invalid_argument("decay_period must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (max_steps_per_epoch < 1) throw std::invalid_argument("max_steps_per_epoch must be positive");
  if (!(temporal_weight >= 0.0)) throw std::invalid_argument("temporal_weight must be >= 0");
  if (!(temporal_ray_ratio >= 0.0)) throw std::invalid_argument("temporal_ray_ratio must be >= 0");
  if (!(camera_lr_scale >= 0.0)) throw std::invalid_argument("camera_lr_scale must be >= 0");
  if (camera_warmup_epochs < 0) throw std::invalid_argument("camera_warmup_epochs must be >= 0");
  if (holdout_view < -1 || holdout_view >= kRigViews) {
    throw std::invalid_argument("holdout view out of range");
  }
  if (chunk_rays < 1) throw std::invalid_argument("chunk_rays must be positive");
  if (eval_every < 0 || checkpoint_every < 0) {
    throw std::invalid_argument("eval_every and checkpoint_every must be non-negative");
  }
  field.validate();
}

TrainConfig train_config_from(const Config& cfg, TrainConfig base) {
  cfg.reject_unknown_sections({"train", "field", "encoding", "interp"});
  TrainConfig c = base;
  const ConfigSection& t = cfg.section("train");
  c.rays_per_step = t.get_int("rays_per_step", c.rays_per_step);
  c.samples_per_ray = t.get_int("samples_per_ray", c.samples_per_ray);
  c.lr0 = t.get_double("lr0", c.lr0);
  c.lr_floor = t.get_double("lr_floor", c.lr_floor);
  c.decay_period = t.get_int("decay_period", c.decay_period);
  c.decay_factor = t.get_double("decay_factor", c.decay_factor);
  c.epochs = t.get_int("epochs", c.epochs);
  c.max_steps_per_epoch = t.get_int("max_steps_per_epoch", c.max_steps_per_epoch);
  c.temporal_weight = t.get_double("temporal_weight", c.temporal_weight);
  c.temporal_ray_ratio = t.get_double("temporal_ray_ratio", c.temporal_ray_ratio);
  c.optimize_cameras = t.get_bool("optimize_cameras", c.optimize_cameras);
  c.optimize_focal = t.get_bool("optimize_focal", c.optimize_focal);
  c.optimize_field = t.get_bool("optimize_field", c.optimize_field);
  c.per_frame_poses = t.get_bool("per_frame_poses", c.per_frame_poses);
  c.camera_lr_scale = t.get_double("camera_lr_scale", c.camera_lr_scale);
  c.camera_warmup_epochs = t.get_int("camera_warmup_epochs", c.camera_warmup_epochs);
  c.stratified = t.get_bool("stratified", c.stratified);
  if (t.has("holdout")) {
    const std::string h = t.get_string("holdout", "none");
    c.holdout_view = h == "none" ? -1 : parse_rig_view(h);
  }
  c.eval_every = t.get_int("eval_every", c.eval_every);
  c.checkpoint_every = t.get_int("checkpoint_every", c.checkpoint_every);
  c.chunk_rays = t.get_int("chunk_rays", c.chunk_rays);
  if (t.has("precision")) {
    const std::string p = t.get_string("precision", "float");
    if (p == "float") {
      c.precision = Precision::Float;
    } else if (p == "double") {
      c.precision = Precision::Double;
    } else {
      throw ConfigError("precision must be float or double (got '" + p + "')");
    }
  }
  c.seed = static_cast<std::uint64_t>(t.get_double("seed", static_cast<double>(c.seed)));
  t.reject_unknown();

  const ConfigSection& f = cfg.section("field");
  c.field.hidden_layers = f.get_int("hidden_layers", c.field.hidden_layers);
  c.field.hidden_width = f.get_int("hidden_width", c.field.hidden_width);
  c.field.skip_layer = f.get_int("skip_layer", c.field.skip_layer);
  c.field.color_width = f.get_int("color_width", c.field.color_width);
  c.field.time_hidden_layers = f.get_int("time_hidden_layers", c.field.time_hidden_layers);
  c.field.time_hidden_width = f.get_int("time_hidden_width", c.field.time_hidden_width);
  c.field.use_time = f.get_bool("use_time", c.field.use_time);
  c.field.position_center = f.get_vec3("position_center", c.field.position_center);
  c.field.position_scale = f.get_double("position_scale", c.field.position_scale);
  f.reject_unknown();

  const ConfigSection& e = cfg.section("encoding");
  c.field.encoding.l_pos = e.get_int("l_pos", c.field.encoding.l_pos);
  c.field.encoding.l_dir = e.get_int("l_dir", c.field.encoding.l_dir);
  c.field.encoding.l_time = e.get_int("l_time", c.field.encoding.l_time);
  c.field.encoding.include_input = e.get_bool("include_input", c.field.encoding.include_input);
  c.field.time_latent_dim = e.get_int("time_latent_dim", c.field.time_latent_dim);
  e.reject_unknown();

  const ConfigSection& i = cfg.section("interp");
  if (i.has("flow")) {
    try {
      c.interp.method = parse_flow_method(i.get_string("flow", ""));
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(std::string("[interp] flow: ") + ex.what());
    }
  }
  c.interp.deltas = i.get_doubles("deltas", c.interp.deltas);
  c.interp.visibility_threshold = i.get_double("threshold", c.interp.visibility_threshold);
  c.interp.variational.alpha = i.get_double("hs_alpha", c.interp.variational.alpha);
  c.interp.variational.iterations = i.get_int("hs_iterations", c.interp.variational.iterations);
  c.interp.variational.warps = i.get_int("hs_warps", c.interp.variational.warps);
  c.interp.variational.levels = i.get_int("hs_levels", c.interp.variational.levels);
  i.reject_unknown();
  cfg.section("").reject_unknown();
  c.validate();
  return c;
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.rays_per_step = 512;
  c.samples_per_ray = 32;
  c.lr0 = 5e-3;
  c.lr_floor = 1e-5;
  c.decay_period = 10;
  c.decay_factor = 0.631;
  c.epochs = 50;
  c.eval_every = 5;
  c.camera_lr_scale = 0.02;
  c.camera_warmup_epochs = 5;
  c.field.hidden_layers = 4;
  c.field.hidden_width = 64;
  c.field.skip_layer = 3;
  c.field.color_width = 64;
  return c;
}

Ablation parse_ablation(const std::string& name) {
  if (name == "none") return Ablation::None;
  if (name == "no-time") return Ablation::NoTime;
  if (name == "no-cam-opt") return Ablation::NoCameraOptimization;
  if (name == "no-temporal") return Ablation::NoTemporal;
  throw std::invalid_argument("unknown ablation '" + name +
                              "' (expected no-time, no-cam-opt or no-temporal)");
}

void apply_ablation(TrainConfig& cfg, Ablation a) {
  switch (a) {
    case Ablation::None:
      break;
    case Ablation::NoTime:
      cfg.field.use_time = false;
      break;
    case Ablation::NoCameraOptimization:
      cfg.optimize_cameras = false;
      cfg.optimize_focal = false;
      break;
    case Ablation::NoTemporal:
      cfg.temporal_weight = 0.0;
      break;
  }
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  const double lr = cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_period);
  return std::max(lr, cfg.lr_floor);
}

int steps_per_epoch(long long training_pixels, const TrainConfig& cfg) {
  const long long steps = (training_pixels + cfg.rays_per_step - 1) / cfg.rays_per_step;
  return static_cast<int>(std::clamp<long long>(steps, 1, cfg.max_steps_per_epoch));
}

LossResult mse_loss(std::span<const Vec3> rendered, std::span<const Vec3> target) {
  if (rendered.empty()) throw std::invalid_argument("empty loss batch");
  if (rendered.size() != target.size()) throw std::invalid_argument("loss batch sizes differ");
  const double n = 3.0 * static_cast<double>(rendered.size());
  LossResult r;
  r.gradient.resize(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Vec3 d = rendered[i] - target[i];
    r.value += d.squaredNorm();
    r.gradient[i] = (2.0 / n) * d;
  }
  r.value /= n;
  return r;
}

LossResult temporal_loss(std::span<const Vec3> rendered, std::span<const Vec3> interpolated) {
  return mse_loss(rendered, interpolated);
}

void AdamState::resize(std::size_t n) {
  m.assign(n, 0.0);
  v.assign(n, 0.0);
  step = 0;
}

template <typename Scalar>
void adam_update(std::span<Scalar> params, std::span<const Scalar> grads, AdamState& s,
                 double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: size mismatch");
  if (s.m.size() != params.size()) s.resize(params.size());
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] = static_cast<Scalar>(static_cast<double>(params[i]) -
                                    lr * mhat / (std::sqrt(vhat) + s.epsilon));
  }
}

template void adam_update(std::span<float>, std::span<const float>, AdamState&, double);
template void adam_update(std::span<double>, std::span<const double>, AdamState&, double);

PoseSE3 Alignment::apply(const PoseSE3& p) const {
  PoseSE3 out;
  out.rotation = matrix_to_rotation_vec(rotation * p.rotation_matrix());
  out.translation = scale * (rotation * p.translation) + translation;
  return out;
}

Alignment align_cameras(std::span<const PoseSE3> learned, std::span<const PoseSE3> truth) {
  if (learned.size() != truth.size() || learned.empty()) {
    throw std::invalid_argument("alignment needs matching non-empty camera sets");
  }
  Mat3 acc = Mat3::Zero();
  for (std::size_t i = 0; i < learned.size(); ++i) {
    acc += learned[i].rotation_matrix() * truth[i].rotation_matrix().transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(acc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Alignment a;
  a.rotation = svd.matrixU() * d * svd.matrixV().transpose();

  const double n = static_cast<double>(learned.size());
  Vec3 mu_l = Vec3::Zero();
  Vec3 mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < learned.size(); ++i) {
    mu_l += learned[i].translation / n;
    mu_t += truth[i].translation / n;
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < learned.size(); ++i) {
    const Vec3 rt = a.rotation * (truth[i].translation - mu_t);
    num += (learned[i].translation - mu_l).dot(rt);
    den += rt.squaredNorm();
  }
  a.scale = den > 0.0 && num > 0.0 ? num / den : 1.0;
  a.translation = mu_l - a.scale * (a.rotation * mu_t);
  return a;
}

PoseErrors pose_errors(std::span<const PoseSE3> learned, std::span<const PoseSE3> truth) {
  const Alignment a = align_cameras(learned, truth);
  PoseErrors e;
  const double n = static_cast<double>(learned.size());
  for (std::size_t i = 0; i < learned.size(); ++i) {
    const PoseSE3 mapped = a.apply(truth[i]);
    const double rot = rotation_angle(learned[i].rotation_matrix().transpose() *
                                      mapped.rotation_matrix()) *
                       180.0 / 3.14159265358979323846;
    const double trans = (mapped.translation - learned[i].translation).norm() / a.scale;
    e.mean_rotation_deg += rot / n;
    e.mean_translation_m += trans / n;
    e.max_rotation_deg = std::max(e.max_rotation_deg, rot);
    e.max_translation_m = std::max(e.max_translation_m, trans);
  }
  return e;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Trainer<Scalar>::Trainer(const Dataset& data, const TrainConfig& cfg) : data_(&data), cfg_(cfg) {
  const DatasetManifest& m = data.manifest;
  cfg_.field.seed = cfg_.seed;
  if (cfg_.field.position_scale == 1.0 && cfg_.field.position_center.isZero()) {
    // Scene box in front of the rig: centered halfway between the bounds.
    const auto& center = m.train_poses[static_cast<int>(RigView::Center)];
    const Vec3 forward = -(center.rotation_matrix().col(2));
    cfg_.field.position_center =
        center.translation + 0.5 * (m.bounds.near + m.bounds.far) * forward;
    cfg_.field.position_scale = m.bounds.far;
  }
  cfg_.validate();
  field_ = RadianceField<Scalar>(cfg_.field);

  for (int v = 0; v < kRigViews; ++v) {
    if (v != cfg_.holdout_view) train_views_.push_back(v);
  }
  cameras_.views = kRigViews;
  cameras_.frames = m.frames;
  cameras_.per_frame = cfg_.per_frame_poses;
  cameras_.width = m.width;
  cameras_.height = m.height;
  cameras_.focal_normalized = m.focal / m.width;
  for (int v = 0; v < kRigViews; ++v) {
    const int copies = cfg_.per_frame_poses ? m.frames : 1;
    for (int k = 0; k < copies; ++k) cameras_.poses.push_back(m.train_poses[v]);
  }

  const long long pixels =
      static_cast<long long>(train_views_.size()) * m.frames * m.width * m.height;
  steps_per_epoch_ = msnerf::steps_per_epoch(pixels, cfg_);

  if (cfg_.temporal_weight > 0.0 && !cfg_.interp.deltas.empty()) {
    InterpolationSettings is = cfg_.interp;
    is.threads = cfg_.threads;
    interp_ = prepare_interpolated_frames(data, train_views_, is);
  }

  adam_network_.resize(field_.network_params().size());
  adam_time_.resize(field_.time_encoder().params().size());
  adam_focal_.resize(1);
  adam_rotation_.resize(3 * cameras_.poses.size());
  adam_translation_.resize(3 * cameras_.poses.size());
}

template <typename Scalar>
typename Trainer<Scalar>::StepPlan Trainer<Scalar>::plan_step(std::int64_t step) const {
  const DatasetManifest& m = data_->manifest;
  std::mt19937_64 rng(pixel_seed(cfg_.seed ^ kStepStream, static_cast<std::uint64_t>(step)));
  StepPlan plan;
  for (int k = 0; k < m.frames; ++k) plan.times.push_back(m.time(k));
  const std::uint64_t per_frame = static_cast<std::uint64_t>(m.width) * m.height;
  const std::uint64_t per_view = per_frame * m.frames;
  const std::uint64_t total = per_view * train_views_.size();

  plan.photometric = cfg_.rays_per_step;
  plan.rays.reserve(plan.photometric);
  for (int i = 0; i < plan.photometric; ++i) {
    const std::uint64_t idx = draw_index(rng, total);
    const int view = train_views_[idx / per_view];
    const int frame = static_cast<int>((idx % per_view) / per_frame);
    const int pix = static_cast<int>(idx % per_frame);
    const int x = pix % m.width;
    const int y = pix / m.width;
    const Image& img = data_->rgb[view][frame];
    RaySpec r;
    r.camera = cameras_.index(view, frame);
    r.pixel = {x + 0.5, y + 0.5};
    r.slot = frame;
    r.target = Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
    plan.rays.push_back(r);
  }

  if (cfg_.temporal_weight > 0.0 && !interp_.empty()) {
    const InterpolatedFrame& f = interp_[draw_index(rng, interp_.size())];
    plan.times.push_back(f.time);
    const int slot = static_cast<int>(plan.times.size()) - 1;
    const int nearest = f.delta < 0.5 ? f.pair : f.pair + 1;
    plan.temporal = std::max(1, static_cast<int>(std::lround(cfg_.temporal_ray_ratio *
                                                             plan.photometric)));
    for (int i = 0; i < plan.temporal; ++i) {
      const int pix = static_cast<int>(draw_index(rng, per_frame));
      const int x = pix % m.width;
      const int y = pix / m.width;
      RaySpec r;
      r.camera = cameras_.index(f.view, nearest);
      r.pixel = {x + 0.5, y + 0.5};
      r.slot = slot;
      r.target = Vec3(f.rgb.at(x, y, 0), f.rgb.at(x, y, 1), f.rgb.at(x, y, 2));
      r.temporal = true;
      plan.rays.push_back(r);
    }
  }
  plan.seed = rng();
  return plan;
}

template <typename Scalar>
typename Trainer<Scalar>::Gradients Trainer<Scalar>::gradients_for(const StepPlan& plan,
                                                                   bool want_camera) const {
  using Matrix = nn::Matrix<Scalar>;
  const DatasetManifest& m = data_->manifest;
  const int z = cfg_.samples_per_ray;
  const int latent_rows = field_.latent_input_dim();
  const bool use_time = latent_rows > 0;
  const CameraIntrinsics intr = cameras_.intrinsics();
  const DepthBounds bounds = m.bounds;

  typename TimeEncoder<Scalar>::Tape time_tape;
  Matrix latents;
  if (use_time) latents = field_.time_encoder().forward(plan.times, &time_tape);

  struct Chunk {
    int first = 0;
    int count = 0;
    typename RadianceField<Scalar>::Tape tape;
    std::vector<RaySampleBatch> samples;
    std::vector<CompositeResult> results;
    std::vector<Ray> rays;
    std::vector<Scalar> grad_network;
    Matrix grad_slots;
    std::vector<CameraGradient> grad_cameras;
  };
  const int total = static_cast<int>(plan.rays.size());
  const int nchunks = (total + cfg_.chunk_rays - 1) / cfg_.chunk_rays;
  std::vector<Chunk> chunks(nchunks);
  std::vector<Vec3> colors(total);

  parallel_for(nchunks, cfg_.threads, [&](int c) {
    Chunk& ch = chunks[c];
    ch.first = c * cfg_.chunk_rays;
    ch.count = std::min(cfg_.chunk_rays, total - ch.first);
    const Eigen::Index cols = static_cast<Eigen::Index>(ch.count) * z;
    Matrix positions(3, cols);
    Matrix directions(3, cols);
    Matrix lat(latent_rows, cols);
    ch.samples.resize(ch.count);
    ch.rays.resize(ch.count);
    for (int r = 0; r < ch.count; ++r) {
      const int ray_index = ch.first + r;
      const RaySpec& spec = plan.rays[ray_index];
      const Ray ray = generate_ray(intr, cameras_.poses[spec.camera], spec.pixel, bounds);
      ch.rays[r] = ray;
      RaySampleBatch& s = ch.samples[r];
      s.depths = sample_along_ray(ray, z, cfg_.stratified,
                                  pixel_seed(plan.seed, static_cast<std::uint64_t>(ray_index)));
      s.spacings = sample_spacings(s.depths, bounds.near, bounds.far);
      for (int i = 0; i < z; ++i) {
        const Eigen::Index col = static_cast<Eigen::Index>(r) * z + i;
        positions.col(col) = ray.at(s.depths[i]).template cast<Scalar>();
        directions.col(col) = ray.direction.template cast<Scalar>();
        if (use_time) lat.col(col) = latents.col(spec.slot);
      }
    }
    const auto out = field_.forward(positions, directions, lat, &ch.tape);
    ch.results.resize(ch.count);
    for (int r = 0; r < ch.count; ++r) {
      RaySampleBatch& s = ch.samples[r];
      s.sigma.resize(z);
      s.rgb.resize(z);
      for (int i = 0; i < z; ++i) {
        const Eigen::Index col = static_cast<Eigen::Index>(r) * z + i;
        s.sigma[i] = static_cast<double>(out.sigma(0, col));
        s.rgb[i] = out.rgb.col(col).template cast<double>();
      }
      ch.results[r] = composite(s, m.background);
      colors[ch.first + r] = ch.results[r].color;
    }
  });

  std::vector<Vec3> photo_rgb, photo_target, temp_rgb, temp_target;
  for (int i = 0; i < total; ++i) {
    if (plan.rays[i].temporal) {
      temp_rgb.push_back(colors[i]);
      temp_target.push_back(plan.rays[i].target);
    } else {
      photo_rgb.push_back(colors[i]);
      photo_target.push_back(plan.rays[i].target);
    }
  }
  Gradients g;
  const LossResult photo = mse_loss(photo_rgb, photo_target);
  LossResult temp;
  if (!temp_rgb.empty()) temp = temporal_loss(temp_rgb, temp_target);
  g.losses.mse = photo.value;
  g.losses.temporal = temp.value;
  g.losses.total = photo.value + cfg_.temporal_weight * temp.value;
  std::vector<Vec3> grad_color(total);
  {
    std::size_t ip = 0;
    std::size_t it = 0;
    for (int i = 0; i < total; ++i) {
      grad_color[i] = plan.rays[i].temporal ? Vec3(cfg_.temporal_weight * temp.gradient[it++])
                                            : photo.gradient[ip++];
    }
  }

  const int slots = static_cast<int>(plan.times.size());
  const int ncams = cameras_.count();
  const bool want_inputs = use_time || want_camera;
  parallel_for(nchunks, cfg_.threads, [&](int c) {
    Chunk& ch = chunks[c];
    const Eigen::Index cols = static_cast<Eigen::Index>(ch.count) * z;
    Matrix gs(1, cols);
    Matrix grgb(3, cols);
    for (int r = 0; r < ch.count; ++r) {
      const CompositeGradient cg =
          composite_backward(ch.samples[r], ch.results[r], grad_color[ch.first + r], m.background);
      for (int i = 0; i < z; ++i) {
        const Eigen::Index col = static_cast<Eigen::Index>(r) * z + i;
        gs(0, col) = static_cast<Scalar>(cg.sigma[i]);
        grgb.col(col) = cg.rgb[i].template cast<Scalar>();
      }
    }
    ch.grad_network.assign(field_.network_params().size(), Scalar(0));
    const auto gin = field_.backward(ch.tape, gs, grgb, ch.grad_network, want_inputs);
    ch.tape = {};
    if (use_time) {
      ch.grad_slots = Matrix::Zero(latent_rows, slots);
      for (int r = 0; r < ch.count; ++r) {
        const int slot = plan.rays[ch.first + r].slot;
        ch.grad_slots.col(slot) +=
            gin.latents.middleCols(static_cast<Eigen::Index>(r) * z, z).rowwise().sum();
      }
    }
    if (want_camera) {
      ch.grad_cameras.assign(ncams, CameraGradient{});
      for (int r = 0; r < ch.count; ++r) {
        const RaySpec& spec = plan.rays[ch.first + r];
        Vec3 go = Vec3::Zero();
        Vec3 gd = Vec3::Zero();
        for (int i = 0; i < z; ++i) {
          const Eigen::Index col = static_cast<Eigen::Index>(r) * z + i;
          const Vec3 gp = gin.positions.col(col).template cast<double>();
          go += gp;
          gd += ch.samples[r].depths[i] * gp + gin.directions.col(col).template cast<double>();
        }
        ch.grad_cameras[spec.camera] +=
            ray_backward(intr, cameras_.poses[spec.camera], spec.pixel, go, gd);
      }
    }
  });

  g.network.assign(field_.network_params().size(), Scalar(0));
  g.time.assign(field_.time_encoder().params().size(), Scalar(0));
  g.rotation.assign(ncams, Vec3::Zero());
  g.translation.assign(ncams, Vec3::Zero());
  Matrix slot_grads = Matrix::Zero(latent_rows, slots);
  std::vector<CameraGradient> cams(ncams);
  for (const Chunk& ch : chunks) {
    for (std::size_t i = 0; i < g.network.size(); ++i) g.network[i] += ch.grad_network[i];
    if (use_time) slot_grads += ch.grad_slots;
    if (want_camera) {
      for (int k = 0; k < ncams; ++k) cams[k] += ch.grad_cameras[k];
    }
  }
  if (use_time) field_.time_encoder().backward(time_tape, slot_grads, g.time);
  if (want_camera) {
    for (int k = 0; k < ncams; ++k) {
      g.rotation[k] = cams[k].rotation;
      g.translation[k] = cams[k].translation;
      g.focal += cams[k].focal * m.width;  // d/d(f / width)
    }
  }
  return g;
}

template <typename Scalar>
typename Trainer<Scalar>::Gradients Trainer<Scalar>::compute_gradients() const {
  return gradients_for(plan_step(step_), true);
}

template <typename Scalar>
StepLosses Trainer<Scalar>::evaluate_step() const {
  return gradients_for(plan_step(step_), false).losses;
}

template <typename Scalar>
StepLosses Trainer<Scalar>::step(double lr) {
  const StepPlan plan = plan_step(step_);
  const bool move_cameras = cfg_.optimize_cameras && epoch_ >= cfg_.camera_warmup_epochs;
  Gradients g = gradients_for(plan, move_cameras);
  ++step_;
  if (!std::isfinite(g.losses.total)) {
    throw NumericError("non-finite loss at step " + std::to_string(step_ - 1));
  }
  const bool finite = all_finite(g.network) && all_finite(g.time) && std::isfinite(g.focal) &&
                      all_finite(g.rotation) && all_finite(g.translation);
  if (!finite) {
    ++skipped_;
    log::warn("skipped step " + std::to_string(step_ - 1) + " with non-finite gradient (" +
              std::to_string(skipped_) + " so far)");
    g.losses.skipped = true;
    return g.losses;
  }
  if (cfg_.optimize_field) {
    adam_update<Scalar>(field_.network_params(), g.network, adam_network_, lr);
    if (field_.latent_input_dim() > 0) {
      adam_update<Scalar>(field_.time_encoder().params(), g.time, adam_time_, lr);
    }
  }
  if (move_cameras) {
    const double clr = lr * cfg_.camera_lr_scale;
    const std::size_t n = cameras_.poses.size();
    std::vector<double> rot(3 * n), trans(3 * n), grot(3 * n), gtrans(3 * n);
    for (std::size_t k = 0; k < n; ++k) {
      for (int a = 0; a < 3; ++a) {
        rot[3 * k + a] = cameras_.poses[k].rotation.r[a];
        trans[3 * k + a] = cameras_.poses[k].translation[a];
        grot[3 * k + a] = g.rotation[k][a];
        gtrans[3 * k + a] = g.translation[k][a];
      }
    }
    adam_update<double>(rot, grot, adam_rotation_, clr);
    adam_update<double>(trans, gtrans, adam_translation_, clr);
    for (std::size_t k = 0; k < n; ++k) {
      for (int a = 0; a < 3; ++a) {
        cameras_.poses[k].rotation.r[a] = rot[3 * k + a];
        cameras_.poses[k].translation[a] = trans[3 * k + a];
      }
    }
    if (cfg_.optimize_focal) {
      std::vector<double> phi{cameras_.focal_normalized};
      const std::vector<double> gphi{g.focal};
      adam_update<double>(phi, gphi, adam_focal_, clr);
      if (phi[0] > 0.0) cameras_.focal_normalized = phi[0];
    }
  }
  return g.losses;
}

template <typename Scalar>
EpochMetrics Trainer<Scalar>::run_epoch() {
  const double lr = lr_schedule(epoch_, cfg_);
  while (step_in_epoch_ < steps_per_epoch_) {
    const StepLosses l = step(lr);
    epoch_mse_ += l.mse;
    epoch_temporal_ += l.temporal;
    ++step_in_epoch_;
  }
  EpochMetrics e;
  e.epoch = epoch_;
  e.lr = lr;
  e.l_mse = epoch_mse_ / steps_per_epoch_;
  e.l_temporal = epoch_temporal_ / steps_per_epoch_;
  ++epoch_;
  step_in_epoch_ = 0;
  epoch_mse_ = 0.0;
  epoch_temporal_ = 0.0;
  const bool due = (cfg_.eval_every > 0 && epoch_ % cfg_.eval_every == 0) || epoch_ == cfg_.epochs;
  e.psnr_holdout = due ? holdout_psnr() : std::numeric_limits<double>::quiet_NaN();
  return e;
}

template <typename Scalar>
void Trainer<Scalar>::train(const std::function<void(const EpochMetrics&)>& on_epoch) {
  while (epoch_ < cfg_.epochs) {
    const EpochMetrics e = run_epoch();
    if (on_epoch) on_epoch(e);
  }
}

template <typename Scalar>
PoseSE3 Trainer<Scalar>::aligned_pose(int view) const {
  std::vector<PoseSE3> learned;
  std::vector<PoseSE3> truth;
  for (int v : train_views_) {
    for (int k = 0; k < (cameras_.per_frame ? cameras_.frames : 1); ++k) {
      learned.push_back(cameras_.pose(v, k));
      truth.push_back(data_->manifest.poses[v]);
    }
  }
  return align_cameras(learned, truth).apply(data_->manifest.poses.at(view));
}

template <typename Scalar>
RenderSettings Trainer<Scalar>::render_settings() const {
  RenderSettings s;
  s.samples = cfg_.samples_per_ray;
  s.stratified = false;
  s.seed = cfg_.seed;
  s.bounds = data_->manifest.bounds;
  s.background = data_->manifest.background;
  s.threads = cfg_.threads;
  return s;
}

template <typename Scalar>
RenderedView Trainer<Scalar>::render_view(int view, double time, bool use_training_camera) const {
  PoseSE3 pose;
  if (use_training_camera) {
    const int frames = data_->manifest.frames;
    const int nearest =
        std::clamp(static_cast<int>(std::lround(time * (frames - 1))), 0, frames - 1);
    pose = cameras_.pose(view, nearest);
  } else {
    pose = aligned_pose(view);
  }
  return render_image(field_, cameras_.intrinsics(), pose, time, render_settings());
}

template <typename Scalar>
double Trainer<Scalar>::psnr_mean(const std::vector<int>& views, bool training_camera) const {
  double acc = 0.0;
  int n = 0;
  for (int v : views) {
    for (int k = 0; k < data_->manifest.frames; ++k) {
      const RenderedView r = render_view(v, data_->manifest.time(k), training_camera);
      acc += psnr(r.rgb, data_->rgb[v][k], 1.0);
      ++n;
    }
  }
  return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

template <typename Scalar>
double Trainer<Scalar>::holdout_psnr() const {
  if (cfg_.holdout_view < 0) return std::numeric_limits<double>::quiet_NaN();
  return psnr_mean({cfg_.holdout_view}, false);
}

template <typename Scalar>
double Trainer<Scalar>::training_psnr() const {
  return psnr_mean(train_views_, true);
}

template <typename Scalar>
Checkpoint Trainer<Scalar>::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.network.assign(field_.network_params().begin(), field_.network_params().end());
  c.time.assign(field_.time_encoder().params().begin(), field_.time_encoder().params().end());
  c.cameras = cameras_;
  c.true_poses = data_->manifest.poses;
  c.frames = data_->manifest.frames;
  c.bounds = data_->manifest.bounds;
  c.background = data_->manifest.background;
  c.adam = {adam_network_, adam_time_, adam_focal_, adam_rotation_, adam_translation_};
  c.epoch = epoch_;
  c.step_in_epoch = step_in_epoch_;
  c.step = step_;
  c.skipped = skipped_;
  c.epoch_mse = epoch_mse_;
  c.epoch_temporal = epoch_temporal_;
  return c;
}

template <typename Scalar>
void Trainer<Scalar>::restore(const Checkpoint& c) {
  if (c.network.size() != field_.network_params().size() ||
      c.time.size() != field_.time_encoder().params().size() ||
      c.cameras.poses.size() != cameras_.poses.size()) {
    throw DataError("checkpoint does not match the training configuration");
  }
  for (std::size_t i = 0; i < c.network.size(); ++i) {
    field_.network_params()[i] = static_cast<Scalar>(c.network[i]);
  }
  for (std::size_t i = 0; i < c.time.size(); ++i) {
    field_.time_encoder().params()[i] = static_cast<Scalar>(c.time[i]);
  }
  cameras_ = c.cameras;
  adam_network_ = c.adam[0];
  adam_time_ = c.adam[1];
  adam_focal_ = c.adam[2];
  adam_rotation_ = c.adam[3];
  adam_translation_ = c.adam[4];
  epoch_ = c.epoch;
  step_in_epoch_ = c.step_in_epoch;
  step_ = c.step;
  skipped_ = c.skipped;
  epoch_mse_ = c.epoch_mse;
  epoch_temporal_ = c.epoch_temporal;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace msnerf
