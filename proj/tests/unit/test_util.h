// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "lcnerf/config.h"
#include "lcnerf/model.h"

namespace lcnerf::testing {

inline ModelConfig tiny_model_config(int64_t regions = 3) {
  ModelConfig c;
  c.regions = regions;
  c.noise_dim = 8;
  c.style_dim = 8;
  c.hidden_dim = 8;
  c.geometry_feature_dim = 6;
  c.texture_feature_dim = 6;
  return c;
}

/// Toy run small enough for a unit test: 16x16, 6 samples, 8-wide networks.
inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model = tiny_model_config(0);
  c.render.resolution = 16;
  c.render.samples = 6;
  c.render.radius = 8.0;
  c.discriminator.base_channels = 4;
  c.discriminator.max_channels = 8;
  c.dataset.toy_count = 6;
  c.batch_size = 2;
  c.steps = 4;
  c.checkpoint_every = 2;
  c.eikonal_points = 16;
  c.sphere_init_steps = 5;
  c.lr_generator = 2e-4;
  return c;
}

inline at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.dtype() == b.dtype() &&
         std::memcmp(a.contiguous().data_ptr(), b.contiguous().data_ptr(),
                     a.numel() * a.element_size()) == 0;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() /
             ("lcnerf_" + name + "_" + std::to_string(rng() % 1000000007));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lcnerf::testing
