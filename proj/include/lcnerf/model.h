// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "lcnerf/config.h"
#include "lcnerf/field_generators.h"
#include "lcnerf/fusion.h"

namespace lcnerf {

/// The full generator: two mapping networks, K geometry and K texture
/// generators and the fusion heads. `config.regions` must be resolved (> 0).
class LcNerfImpl : public torch::nn::Module {
 public:
  LcNerfImpl(const ModelConfig& config, uint64_t seed);

  /// z_g, z_t: (K, L_z) or (B, K, L_z). Rejects a region count other than K.
  LatentBank map_latents(const torch::Tensor& z_geometry,
                         const torch::Tensor& z_texture) const;

  /// Draws (K, L_z) noise pairs from `gen` and maps them.
  LatentBank sample_latents(at::Generator gen) const;

  /// points, directions: (B, P, 3); latents: (B, K, L_w).
  FieldSample field(const torch::Tensor& points, const torch::Tensor& directions,
                    const torch::Tensor& geometry_latents,
                    const torch::Tensor& texture_latents, bool with_texture = true) const;

  /// Geometry branch only: confidence, mask, fused feature, sdf, sigma.
  FieldSample geometry_field(const torch::Tensor& points,
                             const torch::Tensor& geometry_latents) const;

  const ModelConfig& config() const { return config_; }
  int64_t regions() const { return config_.regions; }

  /// Parameter groups used by gradient checks and logging.
  std::vector<std::pair<std::string, std::vector<torch::Tensor>>> parameter_groups() const;

  MappingNetwork geometry_mapping{nullptr};
  MappingNetwork texture_mapping{nullptr};
  GeometryGenerators geometry{nullptr};
  TextureGenerators texture{nullptr};
  Fusion fusion{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(LcNerf);

/// Deep copy (parameters cloned, autograd history dropped).
LcNerf clone_model(const LcNerf& model);

}  // namespace lcnerf
