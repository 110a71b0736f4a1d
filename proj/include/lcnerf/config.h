// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace lcnerf {

/// Network sizes. `regions == 0` means "take K from the dataset schema".
struct ModelConfig {
  int64_t regions = 0;
  int64_t noise_dim = 256;
  int64_t style_dim = 128;
  int64_t hidden_dim = 64;
  int64_t geometry_feature_dim = 64;
  int64_t texture_feature_dim = 64;
  double first_omega = 30.0;
  double hidden_omega = 1.0;
  double beta_init = 0.1;
};

struct RenderConfig {
  int64_t resolution = 32;
  int64_t samples = 18;
  double radius = 1.0;
  double fov = 12.0 * std::numbers::pi / 180.0;
  /// Ray bounds as fractions of the camera radius.
  double near_scale = 0.88;
  double far_scale = 1.12;
};

struct DiscriminatorConfig {
  int64_t base_channels = 32;
  int64_t max_channels = 256;
};

struct LossWeights {
  double image_r1 = 10.0;
  double pose = 15.0;
  double image_mask = 0.5;
  double image_mask_r1 = 10.0;
  double eikonal = 0.1;
  double minimal_surface = 0.05;
};

enum class DatasetKind { toy, celeba };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::toy;
  std::string root;  // CelebAMask-HQ root, or toy cache directory (optional)
  int64_t toy_seed = 7;
  int64_t toy_regions = 3;
  int64_t toy_count = 64;
  int64_t celeba_count = 0;  // 0: all files under images/
  /// Toy pose ranges: uniform in [-range, range].
  double toy_azimuth_range = 0.5;
  double toy_elevation_range = 0.25;
  /// CelebA prior: Gaussian std truncated at two sigma.
  double celeba_azimuth_std = 0.3;
  double celeba_elevation_std = 0.15;
};

struct TrainConfig {
  ModelConfig model;
  RenderConfig render;
  DiscriminatorConfig discriminator;
  LossWeights weights;
  DatasetSpec dataset;

  double lr_generator = 2e-5;
  double lr_image_disc = 2e-4;
  double lr_image_mask_disc = 2e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  int64_t batch_size = 4;
  int64_t steps = 1000;
  int64_t seed = 0;
  bool deterministic = true;
  int64_t checkpoint_every = 100;
  /// Points per image for the SDF regularizers (half ray samples, half uniform).
  int64_t eikonal_points = 512;
  /// Sphere warm-up of the SDF before adversarial training. The radius is a
  /// fraction of the half extent visible at the look-at point.
  int64_t sphere_init_steps = 200;
  double sphere_init_radius = 0.6;
  std::string device = "cpu";
};

/// Region count after resolving `model.regions == 0` against the dataset.
int64_t resolved_regions(const TrainConfig& config);

/// Parses sectioned key/value text. Unknown sections or keys throw ConfigError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

/// Applies `section.key=value` overrides on top of `config`.
void apply_overrides(TrainConfig& config, const std::vector<std::string>& overrides);

/// Writes every field; parse_config(to_config_text(c)) reproduces c exactly.
std::string to_config_text(const TrainConfig& config);

void validate(const TrainConfig& config);

}  // namespace lcnerf
