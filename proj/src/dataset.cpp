#include "msnerf/dataset.hpp"

#include "msnerf/config.hpp"
#include "msnerf/error.hpp"
#include "msnerf/log.hpp"
#include "msnerf/parallel.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace msnerf {

namespace fs = std::filesystem;

namespace {

std::string frame_stem(int view, int frame) {
  return std::string(rig_view_name(view)) + "/" + std::to_string(frame);
}

std::string format_delta(double delta) {
  std::ostringstream s;
  s << std::setprecision(6) << delta;
  return s.str();
}

std::string interp_stamp(const InterpolationSettings& s) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "method = " << (s.method == FlowMethod::GroundTruth ? "ground-truth" : "variational")
      << "\n";
  out << "threshold = " << s.visibility_threshold << "\n";
  out << "deltas =";
  for (double d : s.deltas) out << " " << d;
  out << "\n";
  if (s.method == FlowMethod::Variational) {
    out << "alpha = " << s.variational.alpha << "\n";
    out << "iterations = " << s.variational.iterations << "\n";
    out << "warps = " << s.variational.warps << "\n";
    out << "levels = " << s.variational.levels << "\n";
  }
  return out.str();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return {};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<CameraRecord> records(const std::array<PoseSE3, kRigViews>& poses, double focal) {
  std::vector<CameraRecord> out;
  for (int v = 0; v < kRigViews; ++v) out.push_back({v, poses[v], focal});
  return out;
}

std::array<PoseSE3, kRigViews> poses_from(const std::string& path) {
  const auto recs = read_pose_file(path);
  std::array<PoseSE3, kRigViews> out;
  std::array<bool, kRigViews> seen{};
  for (const auto& r : recs) {
    if (r.id < 0 || r.id >= kRigViews) throw DataError(path + ": camera id out of range");
    out[r.id] = r.pose;
    seen[r.id] = true;
  }
  for (bool s : seen) {
    if (!s) throw DataError(path + ": expected one line per rig camera");
  }
  return out;
}

}  // namespace

double DatasetManifest::time(int frame) const {
  return frames > 1 ? static_cast<double>(frame) / (frames - 1) : 0.0;
}

std::string DatasetManifest::rgb_path(int view, int frame) {
  return "rgb/" + frame_stem(view, frame) + ".ppm";
}
std::string DatasetManifest::mid_path(int view, int frame) {
  return "rgb_mid/" + frame_stem(view, frame) + ".ppm";
}
std::string DatasetManifest::depth_path(int view, int frame) {
  return "depth/" + frame_stem(view, frame) + ".pfm";
}
std::string DatasetManifest::flow_path(int view, int frame, bool forward) {
  return "flow/" + frame_stem(view, frame) + (forward ? "_fwd.flo" : "_bwd.flo");
}
std::string DatasetManifest::occlusion_path(int view, int frame, bool forward) {
  return "flow/" + frame_stem(view, frame) + (forward ? "_fwd_occ.pgm" : "_bwd_occ.pgm");
}
std::string DatasetManifest::interp_path(int view, int frame, double delta) {
  return "interp/" + frame_stem(view, frame) + "_" + format_delta(delta) + ".ppm";
}

void DatasetManifest::write(const std::string& dir) const {
  const fs::path root(dir);
  const fs::path path = root / "manifest.txt";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "# msnerf dataset manifest\n";
  out << "format = 1\n";
  out << "views = " << views << "\n";
  out << "frames = " << frames << "\n";
  out << "width = " << width << "\n";
  out << "height = " << height << "\n";
  out << "focal = " << focal << "\n";
  out << "baseline = " << baseline << "\n";
  out << "near = " << bounds.near << "\n";
  out << "far = " << bounds.far << "\n";
  out << "background = " << background.x() << " " << background.y() << " " << background.z()
      << "\n";
  out << "depth = " << (has_depth ? "true" : "false") << "\n";
  out << "flow = " << (has_flow ? "true" : "false") << "\n";
  out << "mid_frames = " << (has_mid_frames ? "true" : "false") << "\n";
  out << "poses = poses.txt\n";
  out << "train_poses = train_poses.txt\n";
  out << "\n[files]\n";
  for (const auto& f : files) out << "file = " << f << "\n";
  if (!out) throw DataError("failed writing " + path.string());
  write_pose_file((root / "poses.txt").string(), records(poses, focal));
  write_pose_file((root / "train_poses.txt").string(), records(train_poses, focal));
}

DatasetManifest DatasetManifest::read(const std::string& dir) {
  const fs::path root(dir);
  const fs::path path = root / "manifest.txt";
  if (!fs::exists(path)) throw DataError("dataset manifest not found: " + path.string());
  Config cfg = [&] {
    try {
      return Config::load(path.string());
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
  }();
  DatasetManifest m;
  try {
    const ConfigSection& s = cfg.section("");
    if (s.get_int("format", 1) != 1) throw DataError(path.string() + ": unsupported format");
    m.views = s.get_int("views", kRigViews);
    m.frames = s.get_int("frames", 0);
    m.width = s.get_int("width", 0);
    m.height = s.get_int("height", 0);
    m.focal = s.get_double("focal", 0.0);
    m.baseline = s.get_double("baseline", 0.0);
    m.bounds.near = s.get_double("near", 0.0);
    m.bounds.far = s.get_double("far", 0.0);
    m.background = s.get_vec3("background", Vec3::Zero());
    m.has_depth = s.get_bool("depth", false);
    m.has_flow = s.get_bool("flow", false);
    m.has_mid_frames = s.get_bool("mid_frames", false);
    const std::string poses = s.get_string("poses", "poses.txt");
    const std::string train = s.get_string("train_poses", poses);
    m.poses = poses_from((root / poses).string());
    m.train_poses = poses_from((root / train).string());
    for (const auto& e : cfg.section("files").entries()) {
      if (e.key != "file") {
        throw DataError(path.string() + ":" + std::to_string(e.line) + ": unexpected key '" +
                        e.key + "' in [files]");
      }
      m.files.push_back(e.value);
    }
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  if (m.views != kRigViews) throw DataError(path.string() + ": expected 5 views");
  if (m.frames < 2) throw DataError(path.string() + ": at least 2 frames required");
  if (m.width < 1 || m.height < 1 || !(m.focal > 0.0)) {
    throw DataError(path.string() + ": invalid image size or focal");
  }
  if (!(m.bounds.near > 0.0 && m.bounds.near < m.bounds.far)) {
    throw DataError(path.string() + ": invalid near/far bounds");
  }
  for (const auto& f : m.files) {
    if (!fs::exists(root / f)) throw DataError("missing dataset file " + (root / f).string());
  }
  for (int v = 0; v < m.views; ++v) {
    for (int k = 0; k < m.frames; ++k) {
      const fs::path p = root / rgb_path(v, k);
      if (!fs::exists(p)) throw DataError("missing dataset file " + p.string());
    }
  }
  return m;
}

Dataset Dataset::load(const std::string& dir) {
  Dataset d;
  d.root = dir;
  d.manifest = DatasetManifest::read(dir);
  d.rgb.resize(d.manifest.views);
  for (int v = 0; v < d.manifest.views; ++v) {
    for (int k = 0; k < d.manifest.frames; ++k) {
      Image img = read_pnm(d.path(DatasetManifest::rgb_path(v, k)));
      if (img.width != d.manifest.width || img.height != d.manifest.height ||
          img.channels != 3) {
        throw DataError(d.path(DatasetManifest::rgb_path(v, k)) +
                        ": image does not match the manifest size");
      }
      d.rgb[v].push_back(std::move(img));
    }
  }
  return d;
}

BidirectionalFlow Dataset::ground_truth_flow(int view, int pair) const {
  if (!manifest.has_flow) throw DataError(root + ": dataset has no ground-truth flow");
  return {read_flow(path(DatasetManifest::flow_path(view, pair, true))),
          read_flow(path(DatasetManifest::flow_path(view, pair, false)))};
}

Image Dataset::mid_frame(int view, int pair) const {
  if (!manifest.has_mid_frames) throw DataError(root + ": dataset has no mid-frame ground truth");
  return read_pnm(path(DatasetManifest::mid_path(view, pair)));
}

Image Dataset::depth(int view, int frame) const {
  if (!manifest.has_depth) throw DataError(root + ": dataset has no depth maps");
  return read_pfm(path(DatasetManifest::depth_path(view, frame)));
}

std::vector<InterpolatedFrame> prepare_interpolated_frames(const Dataset& data,
                                                           const std::vector<int>& views,
                                                           const InterpolationSettings& settings) {
  for (double d : settings.deltas) {
    if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("interpolation deltas must lie in (0, 1)");
  }
  const DatasetManifest& m = data.manifest;
  const int pairs = m.frames - 1;
  const fs::path root(data.root);
  const std::string stamp = interp_stamp(settings);
  const fs::path stamp_path = root / "interp" / "settings.txt";
  const bool stamp_ok = read_text(stamp_path) == stamp;

  std::vector<InterpolatedFrame> frames;
  for (int v : views) {
    for (int k = 0; k < pairs; ++k) {
      for (double d : settings.deltas) {
        frames.push_back({v, k, d, (k + d) / pairs, Image()});
      }
    }
  }

  std::vector<char> have(frames.size(), 0);
  if (stamp_ok) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const fs::path p = root / DatasetManifest::interp_path(frames[i].view, frames[i].pair,
                                                             frames[i].delta);
      if (fs::exists(p)) {
        frames[i].rgb = read_pnm(p.string());
        have[i] = frames[i].rgb.same_shape(data.rgb[frames[i].view][frames[i].pair]);
      }
    }
  }
  bool missing = false;
  for (char h : have) missing = missing || !h;
  if (!missing) return frames;

  log::info("computing interpolated frames under " + (root / "interp").string());
  std::error_code ec;
  for (int v : views) {
    fs::create_directories(root / "interp" / rig_view_name(v), ec);
    if (ec) throw DataError("cannot create " + (root / "interp").string() + ": " + ec.message());
  }
  const int per_pair = static_cast<int>(settings.deltas.size());
  const int jobs = static_cast<int>(views.size()) * pairs;
  parallel_for(jobs, settings.threads, [&](int job) {
    const int v = views[job / pairs];
    const int k = job % pairs;
    const Image& a = data.rgb[v][k];
    const Image& b = data.rgb[v][k + 1];
    BidirectionalFlow gt;
    const BidirectionalFlow* gt_ptr = nullptr;
    if (settings.method == FlowMethod::GroundTruth) {
      gt = data.ground_truth_flow(v, k);
      gt_ptr = &gt;
    }
    const BidirectionalFlow flows =
        estimate_bidirectional_flow(a, b, settings.method, gt_ptr, settings.variational);
    const std::size_t base = static_cast<std::size_t>(job) * per_pair;
    for (int j = 0; j < per_pair; ++j) {
      InterpolatedFrame& f = frames[base + j];
      f.rgb = quantized(interpolate_frame(a, b, f.delta, flows, settings.visibility_threshold));
      write_ppm((root / DatasetManifest::interp_path(v, k, f.delta)).string(), f.rgb);
    }
  });
  std::ofstream out(stamp_path);
  out << stamp;
  if (!out) throw DataError("cannot write " + stamp_path.string());
  return frames;
}

}  // namespace msnerf
