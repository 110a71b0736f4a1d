// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/model.h"

#include <string>

#include "lcnerf/errors.h"

namespace lcnerf {

LcNerfImpl::LcNerfImpl(const ModelConfig& config, uint64_t seed) : config_(config) {
  if (config.regions <= 0) throw InvalidArgument("model region count must be resolved");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  geometry_mapping = register_module(
      "map_g", MappingNetwork(config.noise_dim, config.style_dim, gen));
  texture_mapping = register_module(
      "map_t", MappingNetwork(config.noise_dim, config.style_dim, gen));
  geometry = register_module("geo", GeometryGenerators(config, gen));
  texture = register_module("tex", TextureGenerators(config, gen));
  fusion = register_module("fuse", Fusion(config, gen));
}

LatentBank LcNerfImpl::map_latents(const torch::Tensor& z_geometry,
                                   const torch::Tensor& z_texture) const {
  if (z_geometry.sizes() != z_texture.sizes()) {
    throw InvalidArgument("geometry and texture noise shapes differ");
  }
  if (z_geometry.dim() < 2 || z_geometry.size(-2) != config_.regions) {
    throw InvalidArgument("noise must have K = " + std::to_string(config_.regions) +
                          " rows");
  }
  if (!torch::isfinite(z_geometry).all().item<bool>() ||
      !torch::isfinite(z_texture).all().item<bool>()) {
    throw InvalidArgument("noise contains non-finite values");
  }
  return {geometry_mapping->forward(z_geometry), texture_mapping->forward(z_texture)};
}

LatentBank LcNerfImpl::sample_latents(at::Generator gen) const {
  auto opts = torch::TensorOptions().dtype(fusion->rho.dtype());
  auto zg = torch::randn({config_.regions, config_.noise_dim}, gen, opts);
  auto zt = torch::randn({config_.regions, config_.noise_dim}, gen, opts);
  return map_latents(zg, zt);
}

FieldSample LcNerfImpl::geometry_field(const torch::Tensor& points,
                                       const torch::Tensor& geometry_latents) const {
  FieldSample out;
  auto geo = geometry->forward(points, geometry_latents);
  out.confidence = geo.confidence;
  out.mask = fuse_confidences(geo.confidence, config_.regions);
  out.geometry_feature = fuse_features(out.mask, geo.features);
  out.sdf = fusion->sdf(out.geometry_feature);
  out.sigma = sdf_to_density(out.sdf, fusion->beta());
  // Stash per-region features for the texture branch.
  out.texture_feature = geo.features;
  return out;
}

FieldSample LcNerfImpl::field(const torch::Tensor& points,
                              const torch::Tensor& directions,
                              const torch::Tensor& geometry_latents,
                              const torch::Tensor& texture_latents,
                              bool with_texture) const {
  FieldSample out = geometry_field(points, geometry_latents);
  auto region_features = out.texture_feature;
  out.texture_feature = torch::Tensor();
  if (!with_texture) return out;
  auto tex = texture->forward(region_features, directions, texture_latents);
  out.texture_feature = fuse_features(out.mask, tex);
  out.color = fusion->color(out.texture_feature);
  return out;
}

std::vector<std::pair<std::string, std::vector<torch::Tensor>>>
LcNerfImpl::parameter_groups() const {
  std::vector<std::pair<std::string, std::vector<torch::Tensor>>> groups;
  for (const auto& item : named_children()) {
    groups.emplace_back(item.key(), item.value()->parameters());
  }
  return groups;
}

LcNerf clone_model(const LcNerf& model) {
  LcNerf copy(model->config(), 0);
  copy->to(model->fusion->rho.scalar_type());
  torch::NoGradGuard guard;
  auto src = model->named_parameters();
  for (auto& item : copy->named_parameters()) {
    item.value().copy_(src[item.key()]);
  }
  return copy;
}

}  // namespace lcnerf
