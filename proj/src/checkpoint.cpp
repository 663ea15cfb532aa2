#include "msnerf/checkpoint.hpp"

#include "msnerf/config.hpp"
#include "msnerf/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace msnerf {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'N', 'E', 'R', 'F', '0', '1'};

const char* activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::Identity: return "identity";
    case nn::Activation::Relu: return "relu";
    case nn::Activation::Tanh: return "tanh";
    case nn::Activation::Softplus: return "softplus";
    case nn::Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

std::string layer_line(const nn::Dense& d) {
  std::ostringstream s;
  s << d.offset << " " << d.in << " " << d.out << " " << activation_name(d.activation);
  return s.str();
}

template <typename Scalar>
std::vector<std::string> layer_table(const RadianceField<Scalar>& f) {
  std::vector<std::string> out;
  for (const auto& l : f.trunk_layers()) out.push_back("net " + layer_line(l));
  out.push_back("net " + layer_line(f.density_layer()));
  out.push_back("net " + layer_line(f.color_hidden_layer()));
  out.push_back("net " + layer_line(f.color_layer()));
  for (const auto& l : f.time_encoder().layers()) out.push_back("time " + layer_line(l));
  return out;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void array(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  std::uint64_t u64() {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), 8);
    if (!in_) throw DataError(path_ + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> array(std::size_t expected, const char* what) {
    const std::uint64_t n = u64();
    if (n != expected) {
      throw DataError(path_ + ": " + what + " has " + std::to_string(n) + " values, expected " +
                      std::to_string(expected));
    }
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

 private:
  std::istream& in_;
  std::string path_;
};

void write_adam(Writer& w, const AdamState& a) {
  w.f64(static_cast<double>(a.step));
  w.array(a.m);
  w.array(a.v);
}

AdamState read_adam(Reader& r, std::size_t n) {
  AdamState a;
  a.step = static_cast<std::int64_t>(r.f64());
  a.m = r.array(n, "optimizer moment");
  a.v = r.array(n, "optimizer moment");
  return a;
}

}  // namespace

std::string train_config_text(const TrainConfig& c) {
  std::ostringstream s;
  s << std::setprecision(17) << std::boolalpha;
  s << "[train]\n";
  s << "rays_per_step = " << c.rays_per_step << "\n";
  s << "samples_per_ray = " << c.samples_per_ray << "\n";
  s << "lr0 = " << c.lr0 << "\n";
  s << "lr_floor = " << c.lr_floor << "\n";
  s << "decay_period = " << c.decay_period << "\n";
  s << "decay_factor = " << c.decay_factor << "\n";
  s << "epochs = " << c.epochs << "\n";
  s << "max_steps_per_epoch = " << c.max_steps_per_epoch << "\n";
  s << "temporal_weight = " << c.temporal_weight << "\n";
  s << "temporal_ray_ratio = " << c.temporal_ray_ratio << "\n";
  s << "optimize_cameras = " << c.optimize_cameras << "\n";
  s << "optimize_focal = " << c.optimize_focal << "\n";
  s << "optimize_field = " << c.optimize_field << "\n";
  s << "camera_warmup_epochs = " << c.camera_warmup_epochs << "\n";
  s << "per_frame_poses = " << c.per_frame_poses << "\n";
  s << "camera_lr_scale = " << c.camera_lr_scale << "\n";
  s << "stratified = " << c.stratified << "\n";
  s << "holdout = " << (c.holdout_view < 0 ? "none" : rig_view_name(c.holdout_view)) << "\n";
  s << "eval_every = " << c.eval_every << "\n";
  s << "checkpoint_every = " << c.checkpoint_every << "\n";
  s << "chunk_rays = " << c.chunk_rays << "\n";
  s << "precision = " << (c.precision == Precision::Float ? "float" : "double") << "\n";
  s << "seed = " << c.seed << "\n";
  const FieldConfig& f = c.field;
  s << "\n[field]\n";
  s << "hidden_layers = " << f.hidden_layers << "\n";
  s << "hidden_width = " << f.hidden_width << "\n";
  s << "skip_layer = " << f.skip_layer << "\n";
  s << "color_width = " << f.color_width << "\n";
  s << "time_hidden_layers = " << f.time_hidden_layers << "\n";
  s << "time_hidden_width = " << f.time_hidden_width << "\n";
  s << "use_time = " << f.use_time << "\n";
  s << "position_center = " << f.position_center.x() << " " << f.position_center.y() << " "
    << f.position_center.z() << "\n";
  s << "position_scale = " << f.position_scale << "\n";
  s << "\n[encoding]\n";
  s << "l_pos = " << f.encoding.l_pos << "\n";
  s << "l_dir = " << f.encoding.l_dir << "\n";
  s << "l_time = " << f.encoding.l_time << "\n";
  s << "include_input = " << f.encoding.include_input << "\n";
  s << "time_latent_dim = " << f.time_latent_dim << "\n";
  s << "\n[interp]\n";
  s << "flow = " << (c.interp.method == FlowMethod::GroundTruth ? "ground-truth" : "variational")
    << "\n";
  s << "deltas =";
  for (double d : c.interp.deltas) s << " " << d;
  s << "\n";
  s << "threshold = " << c.interp.visibility_threshold << "\n";
  s << "hs_alpha = " << c.interp.variational.alpha << "\n";
  s << "hs_iterations = " << c.interp.variational.iterations << "\n";
  s << "hs_warps = " << c.interp.variational.warps << "\n";
  s << "hs_levels = " << c.interp.variational.levels << "\n";
  return s.str();
}

template <typename Scalar>
RadianceField<Scalar> field_from_checkpoint(const Checkpoint& ckpt) {
  RadianceField<Scalar> f(ckpt.config.field);
  if (f.network_params().size() != ckpt.network.size() ||
      f.time_encoder().params().size() != ckpt.time.size()) {
    throw DataError("checkpoint weights do not match its architecture");
  }
  for (std::size_t i = 0; i < ckpt.network.size(); ++i) {
    f.network_params()[i] = static_cast<Scalar>(ckpt.network[i]);
  }
  for (std::size_t i = 0; i < ckpt.time.size(); ++i) {
    f.time_encoder().params()[i] = static_cast<Scalar>(ckpt.time[i]);
  }
  return f;
}

template RadianceField<float> field_from_checkpoint(const Checkpoint&);
template RadianceField<double> field_from_checkpoint(const Checkpoint&);

PoseSE3 checkpoint_view_pose(const Checkpoint& c, int view, double time) {
  if (view < 0 || view >= kRigViews) throw std::invalid_argument("view out of range");
  const CameraState& cam = c.cameras;
  const int frames = cam.per_frame ? cam.frames : 1;
  if (view != c.config.holdout_view) {
    const int nearest =
        std::clamp(static_cast<int>(std::lround(std::clamp(time, 0.0, 1.0) * (c.frames - 1))), 0,
                   frames - 1);
    return cam.pose(view, cam.per_frame ? nearest : 0);
  }
  std::vector<PoseSE3> learned;
  std::vector<PoseSE3> truth;
  for (int v = 0; v < kRigViews; ++v) {
    if (v == c.config.holdout_view) continue;
    for (int k = 0; k < frames; ++k) {
      learned.push_back(cam.pose(v, k));
      truth.push_back(c.true_poses[v]);
    }
  }
  return align_cameras(learned, truth).apply(c.true_poses[view]);
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ostringstream h;
  h << std::setprecision(17) << std::boolalpha;
  h << train_config_text(c.config);
  const CameraState& cam = c.cameras;
  h << "\n[checkpoint]\n";
  h << "epoch = " << c.epoch << "\n";
  h << "step_in_epoch = " << c.step_in_epoch << "\n";
  h << "step = " << c.step << "\n";
  h << "skipped = " << c.skipped << "\n";
  h << "epoch_mse = " << c.epoch_mse << "\n";
  h << "epoch_temporal = " << c.epoch_temporal << "\n";
  h << "frames = " << c.frames << "\n";
  h << "near = " << c.bounds.near << "\n";
  h << "far = " << c.bounds.far << "\n";
  h << "background = " << c.background.x() << " " << c.background.y() << " " << c.background.z()
    << "\n";
  h << "width = " << cam.width << "\n";
  h << "height = " << cam.height << "\n";
  h << "camera_frames = " << cam.frames << "\n";
  h << "per_frame = " << cam.per_frame << "\n";
  h << "cameras = " << cam.poses.size() << "\n";
  h << "stored_precision = f64\n";
  h << "\n[layers]\n";
  const RadianceField<double> shape(c.config.field);
  for (const auto& l : layer_table(shape)) h << "layer = " << l << "\n";
  const std::string header = h.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  Writer w(out);
  w.u64(header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  w.array(c.network);
  w.array(c.time);
  w.array({cam.focal_normalized});
  std::vector<double> rot, trans, truth;
  for (const auto& p : cam.poses) {
    for (int a = 0; a < 3; ++a) rot.push_back(p.rotation.r[a]);
    for (int a = 0; a < 3; ++a) trans.push_back(p.translation[a]);
  }
  for (const auto& p : c.true_poses) {
    for (int a = 0; a < 3; ++a) truth.push_back(p.rotation.r[a]);
    for (int a = 0; a < 3; ++a) truth.push_back(p.translation[a]);
  }
  w.array(rot);
  w.array(trans);
  w.array(truth);
  for (const auto& a : c.adam) write_adam(w, a);
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path + ": not a checkpoint");
  Reader r(in, path);
  const std::uint64_t len = r.u64();
  if (len > (1u << 24)) throw DataError(path + ": implausible header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(path + ": truncated checkpoint header");

  Checkpoint c;
  try {
    Config cfg = Config::parse_string(header, path);
    Config train_only = Config::parse_string(header.substr(0, header.find("\n[checkpoint]")), path);
    c.config = train_config_from(train_only);
    const ConfigSection& s = cfg.section("checkpoint");
    c.epoch = s.get_int("epoch", 0);
    c.step_in_epoch = s.get_int("step_in_epoch", 0);
    c.step = static_cast<std::int64_t>(s.get_double("step", 0));
    c.skipped = static_cast<std::int64_t>(s.get_double("skipped", 0));
    c.epoch_mse = s.get_double("epoch_mse", 0.0);
    c.epoch_temporal = s.get_double("epoch_temporal", 0.0);
    c.frames = s.get_int("frames", 2);
    c.bounds.near = s.get_double("near", 0.0);
    c.bounds.far = s.get_double("far", 1.0);
    c.background = s.get_vec3("background", Vec3::Zero());
    c.cameras.width = s.get_int("width", 1);
    c.cameras.height = s.get_int("height", 1);
    c.cameras.frames = s.get_int("camera_frames", 1);
    c.cameras.per_frame = s.get_bool("per_frame", false);
    c.cameras.poses.resize(static_cast<std::size_t>(s.get_int("cameras", kRigViews)));
    if (s.get_string("stored_precision", "") != "f64") {
      throw DataError(path + ": unsupported stored precision");
    }
    std::vector<std::string> stored;
    for (const auto& e : cfg.section("layers").entries()) stored.push_back(e.value);
    const RadianceField<double> shape(c.config.field);
    if (stored != layer_table(shape)) {
      throw DataError(path + ": layer table does not match the stored configuration");
    }
  } catch (const ConfigError& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }

  const RadianceField<double> shape(c.config.field);
  c.network = r.array(shape.network_params().size(), "network");
  c.time = r.array(shape.time_encoder().params().size(), "time encoder");
  c.cameras.focal_normalized = r.array(1, "focal").front();
  const std::size_t ncam = c.cameras.poses.size();
  const auto rot = r.array(3 * ncam, "rotations");
  const auto trans = r.array(3 * ncam, "translations");
  const auto truth = r.array(6 * kRigViews, "ground-truth poses");
  for (std::size_t k = 0; k < ncam; ++k) {
    c.cameras.poses[k].rotation.r = Vec3(rot[3 * k], rot[3 * k + 1], rot[3 * k + 2]);
    c.cameras.poses[k].translation = Vec3(trans[3 * k], trans[3 * k + 1], trans[3 * k + 2]);
  }
  for (int v = 0; v < kRigViews; ++v) {
    c.true_poses[v].rotation.r = Vec3(truth[6 * v], truth[6 * v + 1], truth[6 * v + 2]);
    c.true_poses[v].translation = Vec3(truth[6 * v + 3], truth[6 * v + 4], truth[6 * v + 5]);
  }
  const std::size_t sizes[5] = {c.network.size(), c.time.size(), 1, 3 * ncam, 3 * ncam};
  for (int g = 0; g < 5; ++g) c.adam[g] = read_adam(r, sizes[g]);
  return c;
}

}  // namespace msnerf
