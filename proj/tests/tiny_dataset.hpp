#pragma once

// A few-pixel dataset shared by the trainer and checkpoint tests.

#include "msnerf/datagen.hpp"
#include "msnerf/dataset.hpp"
#include "msnerf/trainer.hpp"

#include <filesystem>
#include <string>

namespace msnerf::test {

inline std::string tiny_dataset_dir(const std::string& name, int width, int height, int frames) {
  const auto dir = std::filesystem::temp_directory_path() / ("msnerf_" + name);
  std::filesystem::remove_all(dir);
  SceneSpec s = default_scene();
  s.width = width;
  s.height = height;
  s.frames = frames;
  s.hfov_deg = 20.0;  // a close-up on the moving sphere
  s.perturbation.enabled = true;
  generate_dataset(s, dir.string(), 1);
  return dir.string();
}

inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.rays_per_step = 16;
  c.samples_per_ray = 8;
  c.lr0 = 5e-3;
  c.decay_period = 2;
  c.epochs = 2;
  c.max_steps_per_epoch = 3;
  c.eval_every = 0;
  c.chunk_rays = 5;
  c.interp.deltas = {0.5};
  c.field.hidden_layers = 3;
  c.field.hidden_width = 8;
  c.field.skip_layer = 2;
  c.field.color_width = 8;
  c.field.time_hidden_width = 8;
  c.field.time_latent_dim = 3;
  c.field.encoding.l_pos = 3;
  c.field.encoding.l_dir = 2;
  c.field.encoding.l_time = 2;
  c.seed = 3;
  return c;
}

}  // namespace msnerf::test
