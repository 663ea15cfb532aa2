// msnerf command-line interface.
//
//   msnerf datagen --out DIR [--config FILE] [--profile desk|full] [--perturb-poses]
//   msnerf train   --data DIR --out DIR [--config FILE] [--profile desk|full]
//                  [--ablate no-time|no-cam-opt|no-temporal] [--seed N] [--holdout VIEW]
//   msnerf render  --checkpoint FILE --time T [--view V | --between A B --alpha S |
//                  --pose "rx ry rz nx ny nz"] --out PREFIX [--depth]
//   msnerf eval    --checkpoint FILE --data DIR [--split holdout|train|all|mid]
//   msnerf eval    --compare A.ppm B.ppm
//
// Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include "msnerf/checkpoint.hpp"
#include "msnerf/config.hpp"
#include "msnerf/datagen.hpp"
#include "msnerf/dataset.hpp"
#include "msnerf/error.hpp"
#include "msnerf/log.hpp"
#include "msnerf/metrics.hpp"
#include "msnerf/parallel.hpp"
#include "msnerf/renderer.hpp"
#include "msnerf/trainer.hpp"

#include <CLI11.hpp>

#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace msnerf;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(8) << v;
  return s.str();
}

PoseSE3 parse_pose(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> v;
  double x = 0.0;
  while (in >> x) v.push_back(x);
  if (v.size() != 6 || !in.eof()) throw UsageError("--pose expects six numbers: rx ry rz nx ny nz");
  PoseSE3 p;
  p.rotation.r = Vec3(v[0], v[1], v[2]);
  p.translation = Vec3(v[3], v[4], v[5]);
  return p;
}

// Geodesic blend of rotations and linear blend of centers.
PoseSE3 blend(const PoseSE3& a, const PoseSE3& b, double s) {
  const Mat3 ra = a.rotation_matrix();
  const RotationVec rel = matrix_to_rotation_vec(ra.transpose() * b.rotation_matrix());
  PoseSE3 out;
  out.rotation = matrix_to_rotation_vec(ra * rodrigues_to_matrix({s * rel.r}));
  out.translation = (1.0 - s) * a.translation + s * b.translation;
  return out;
}

template <typename Scalar>
RenderedView render_with(const Checkpoint& c, const PoseSE3& pose, double time, int samples,
                         int threads) {
  const RadianceField<Scalar> field = field_from_checkpoint<Scalar>(c);
  RenderSettings s;
  s.samples = samples > 0 ? samples : c.config.samples_per_ray;
  s.seed = c.config.seed;
  s.bounds = c.bounds;
  s.background = c.background;
  s.threads = threads;
  return render_image(field, c.cameras.intrinsics(), pose, time, s);
}

RenderedView render_checkpoint(const Checkpoint& c, const PoseSE3& pose, double time,
                               int samples, int threads) {
  if (c.config.precision == Precision::Float) {
    return render_with<float>(c, pose, time, samples, threads);
  }
  return render_with<double>(c, pose, time, samples, threads);
}

template <typename Scalar>
void run_training(const Dataset& data, const TrainConfig& cfg, const std::string& out_dir,
                  const Checkpoint* resume) {
  namespace fs = std::filesystem;
  Trainer<Scalar> trainer(data, cfg);
  if (resume) trainer.restore(*resume);
  const fs::path metrics = fs::path(out_dir) / "metrics.csv";
  std::ofstream log_file;
  if (resume && fs::exists(metrics)) {
    log_file.open(metrics, std::ios::app);
  } else {
    log_file.open(metrics);
    log_file << "epoch,lr,l_mse,l_temporal,psnr_holdout\n";
  }
  if (!log_file) throw DataError("cannot write " + metrics.string());
  log::info("training " + std::to_string(cfg.epochs) + " epochs of " +
            std::to_string(trainer.steps_per_epoch()) + " steps");
  trainer.train([&](const EpochMetrics& e) {
    log_file << e.epoch << "," << format_number(e.lr) << "," << format_number(e.l_mse) << ","
             << format_number(e.l_temporal) << "," << format_number(e.psnr_holdout) << "\n";
    log_file.flush();
    log::info("epoch " + std::to_string(e.epoch) + " mse " + format_number(e.l_mse) +
              " temporal " + format_number(e.l_temporal) + " holdout psnr " +
              format_number(e.psnr_holdout));
    if (cfg.checkpoint_every > 0 && trainer.epoch() % cfg.checkpoint_every == 0 &&
        trainer.epoch() < cfg.epochs) {
      save_checkpoint(
          (fs::path(out_dir) / ("checkpoint_" + std::to_string(trainer.epoch()) + ".bin")).string(),
          trainer.checkpoint());
    }
  });
  save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), trainer.checkpoint());
  if (trainer.skipped_steps() > 0) {
    log::warn(std::to_string(trainer.skipped_steps()) + " steps skipped for non-finite gradients");
  }
}

int cmd_datagen(const std::string& config_path, const std::string& profile, bool perturb,
                long long seed, const std::string& out, int threads) {
  SceneSpec spec = default_scene();
  if (!config_path.empty()) spec = scene_from_config(Config::load(config_path));
  if (!profile.empty()) apply_profile(spec, parse_profile(profile));
  if (perturb) spec.perturbation.enabled = true;
  if (seed >= 0) spec.perturbation.seed = static_cast<std::uint64_t>(seed);
  const DatasetManifest m = generate_dataset(spec, out, threads);
  std::cout << "wrote " << m.views * m.frames << " images (" << m.width << "x" << m.height
            << ", " << m.frames << " frames) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& profile, const std::string& ablate, long long seed,
              const std::string& holdout, const std::string& out, int epochs,
              const std::string& resume, int threads) {
  const Dataset data = Dataset::load(data_dir);
  TrainConfig cfg;
  std::optional<Checkpoint> ckpt;
  if (!resume.empty()) {
    ckpt = load_checkpoint(resume);
    cfg = ckpt->config;
  } else {
    if (profile == "desk") {
      cfg = desk_train_config();
    } else if (!profile.empty() && profile != "full") {
      throw UsageError("unknown profile '" + profile + "'");
    }
    if (!config_path.empty()) cfg = train_config_from(Config::load(config_path), cfg);
    if (!ablate.empty()) apply_ablation(cfg, parse_ablation(ablate));
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!holdout.empty()) cfg.holdout_view = holdout == "none" ? -1 : parse_rig_view(holdout);
  }
  if (epochs >= 0) cfg.epochs = epochs;
  cfg.threads = threads;
  std::filesystem::create_directories(out);
  if (cfg.precision == Precision::Float) {
    run_training<float>(data, cfg, out, ckpt ? &*ckpt : nullptr);
  } else {
    run_training<double>(data, cfg, out, ckpt ? &*ckpt : nullptr);
  }
  return 0;
}

int cmd_render(const std::string& ckpt_path, double time, const std::string& view,
               const std::vector<std::string>& between, double alpha, const std::string& pose,
               const std::string& out, bool depth, int samples, int threads) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const int chosen = (!view.empty()) + (!between.empty()) + (!pose.empty());
  if (chosen != 1) throw UsageError("choose exactly one of --view, --between or --pose");
  PoseSE3 p;
  if (!view.empty()) {
    p = checkpoint_view_pose(c, parse_rig_view(view), time);
  } else if (!between.empty()) {
    if (between.size() != 2) throw UsageError("--between expects two views");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("--alpha must lie in [0, 1]");
    p = blend(checkpoint_view_pose(c, parse_rig_view(between[0]), time),
              checkpoint_view_pose(c, parse_rig_view(between[1]), time), alpha);
  } else {
    p = parse_pose(pose);
  }
  const RenderedView r = render_checkpoint(c, p, time, samples, threads);
  write_ppm(out + ".ppm", r.rgb);
  if (depth) {
    write_pfm(out + "_depth.pfm", r.depth);
    write_pgm(out + "_depth.pgm", depth_preview(r.depth, c.bounds.near, c.bounds.far));
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::vector<std::string>& compare, int samples, int threads) {
  std::cout << std::fixed << std::setprecision(4);
  if (!compare.empty()) {
    if (compare.size() != 2) throw UsageError("--compare expects two images");
    const Image a = read_pnm(compare[0]);
    const Image b = read_pnm(compare[1]);
    if (!a.same_shape(b)) throw DataError("images differ in shape");
    std::cout << "image,psnr,ssim\n";
    std::cout << compare[1] << "," << psnr(a, b, 1.0) << "," << ssim(a, b) << "\n";
    return 0;
  }
  if (ckpt_path.empty() || data_dir.empty()) {
    throw UsageError("eval needs --checkpoint and --data, or --compare");
  }
  const Checkpoint c = load_checkpoint(ckpt_path);
  const Dataset data = Dataset::load(data_dir);
  const DatasetManifest& m = data.manifest;
  std::vector<int> views;
  const bool mid = split == "mid";
  if (split == "holdout") {
    if (c.config.holdout_view < 0) throw UsageError("checkpoint was trained without a held-out view");
    views.push_back(c.config.holdout_view);
  } else if (split == "train") {
    for (int v = 0; v < kRigViews; ++v) {
      if (v != c.config.holdout_view) views.push_back(v);
    }
  } else if (split == "all" || mid) {
    for (int v = 0; v < kRigViews; ++v) views.push_back(v);
  } else {
    throw UsageError("unknown split '" + split + "' (holdout, train, all or mid)");
  }
  std::cout << "view,frame,time,psnr,ssim\n";
  double sum_psnr = 0.0;
  double sum_ssim = 0.0;
  int n = 0;
  for (int v : views) {
    const int count = mid ? m.frames - 1 : m.frames;
    for (int k = 0; k < count; ++k) {
      const double t = mid ? (k + 0.5) / (m.frames - 1) : m.time(k);
      const Image truth = mid ? data.mid_frame(v, k) : data.rgb[v][k];
      const RenderedView r =
          render_checkpoint(c, checkpoint_view_pose(c, v, t), t, samples, threads);
      const double p = psnr(r.rgb, truth, 1.0);
      const double s = ssim(r.rgb, truth);
      std::cout << rig_view_name(v) << "," << k << "," << t << "," << p << "," << s << "\n";
      sum_psnr += p;
      sum_ssim += s;
      ++n;
    }
  }
  std::cout << "mean,,," << sum_psnr / n << "," << sum_ssim / n << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees large tapes every step; keep them in the heap
  // instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Space-time radiance fields from multiscopic video"};
  app.require_subcommand(1);
  int threads = default_threads();
  bool quiet = false;
  bool verbose = false;
  app.add_option("--threads", threads, "Worker threads (default: MSNERF_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "Only print errors");
  app.add_flag("-v,--verbose", verbose, "Print progress");

  std::string config, profile, out, data, ablate, holdout, resume, ckpt, view, pose, split = "holdout";
  std::vector<std::string> between, compare;
  bool perturb = false;
  bool depth = false;
  long long seed = -1;
  int epochs = -1;
  int samples = 0;
  double time = 0.0;
  double alpha = 0.5;

  auto* datagen = app.add_subcommand("datagen", "Render a synthetic multiscopic dataset");
  datagen->add_option("--config", config, "Scene configuration file");
  datagen->add_option("--profile", profile, "desk (160x120, 8 frames) or full (1280x720, 24)");
  datagen->add_flag("--perturb-poses", perturb, "Hand noisy poses to the trainer");
  datagen->add_option("--seed", seed, "Pose perturbation seed");
  datagen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a radiance field on a dataset");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--config", config, "Training configuration file");
  train->add_option("--profile", profile, "desk or full defaults");
  train->add_option("--ablate", ablate, "no-time, no-cam-opt or no-temporal");
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--holdout", holdout, "View to withhold (bottom, center, left, right, top)");
  train->add_option("--epochs", epochs, "Override the epoch count");
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--out", out, "Output directory for checkpoints and metrics")->required();

  auto* render = app.add_subcommand("render", "Render an image from a checkpoint");
  render->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  render->add_option("--time", time, "Normalised time in [0, 1]")->required();
  render->add_option("--view", view, "Rig view to render from");
  render->add_option("--between", between, "Two rig views to blend")->expected(2);
  render->add_option("--alpha", alpha, "Blend factor for --between");
  render->add_option("--pose", pose, "Explicit camera: \"rx ry rz nx ny nz\"");
  render->add_option("--samples", samples, "Samples per ray (default: training value)");
  render->add_option("--out", out, "Output prefix")->required();
  render->add_flag("--depth", depth, "Also write the depth map");

  auto* eval = app.add_subcommand("eval", "Report PSNR and SSIM");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file");
  eval->add_option("--data", data, "Dataset directory");
  eval->add_option("--split", split, "holdout, train, all or mid");
  eval->add_option("--compare", compare, "Compare two images")->expected(2);
  eval->add_option("--samples", samples, "Samples per ray (default: training value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  log::level() = quiet ? log::Level::Quiet : verbose ? log::Level::Info : log::Level::Warn;

  try {
    if (*datagen) return cmd_datagen(config, profile, perturb, seed, out, threads);
    if (*train) {
      return cmd_train(data, config, profile, ablate, seed, holdout, out, epochs, resume, threads);
    }
    if (*render) {
      return cmd_render(ckpt, time, view, between, alpha, pose, out, depth, samples, threads);
    }
    if (*eval) return cmd_eval(ckpt, data, split, compare, samples, threads);
  } catch (const UsageError& e) {
    std::cerr << "msnerf: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "msnerf: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "msnerf: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "msnerf: numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "msnerf: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "msnerf: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
