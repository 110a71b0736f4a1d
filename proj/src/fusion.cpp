// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/fusion.h"

#include <cmath>
#include <string>

#include "lcnerf/errors.h"

namespace lcnerf {

torch::Tensor fuse_confidences(const torch::Tensor& confidence, int64_t regions) {
  if (regions > 0 && confidence.size(-1) != regions) {
    throw InvalidArgument("confidence has " + std::to_string(confidence.size(-1)) +
                          " regions, expected " + std::to_string(regions));
  }
  return torch::softmax(confidence, -1);
}

torch::Tensor fuse_features(const torch::Tensor& mask, const torch::Tensor& stack) {
  if (mask.dim() != 3 || stack.dim() != 4) {
    throw InvalidArgument("fuse_features expects mask (B, P, K) and stack (B, K, P, F)");
  }
  if (stack.size(0) != mask.size(0) || stack.size(1) != mask.size(2) ||
      stack.size(2) != mask.size(1)) {
    throw InvalidArgument("feature stack does not match mask layout");
  }
  // (B, P, 1, K) x (B, P, K, F) -> (B, P, F)
  return torch::matmul(mask.unsqueeze(-2), stack.transpose(1, 2)).squeeze(-2);
}

torch::Tensor sdf_to_density(const torch::Tensor& sdf, const torch::Tensor& beta) {
  return torch::sigmoid(-sdf / beta) / beta;
}

torch::Tensor sdf_to_density(const torch::Tensor& sdf, double beta) {
  if (!(beta > 0.0)) {
    throw InvalidArgument("density sharpness beta must be positive, got " +
                          std::to_string(beta));
  }
  return torch::sigmoid(-sdf / beta) / beta;
}

FusionImpl::FusionImpl(const ModelConfig& config, at::Generator gen) {
  const double gb = 1.0 / std::sqrt(static_cast<double>(config.geometry_feature_dim));
  const double tb = 1.0 / std::sqrt(static_cast<double>(config.texture_feature_dim));
  auto u = [&gen](std::vector<int64_t> shape, double b) {
    return torch::empty(shape, torch::kFloat32).uniform_(-b, b, gen);
  };
  sdf_weight = register_parameter("sdf_head_weight", u({config.geometry_feature_dim, 1}, gb));
  sdf_bias = register_parameter("sdf_head_bias", u({1}, gb));
  color_weight =
      register_parameter("color_head_weight", u({config.texture_feature_dim, 3}, tb));
  color_bias = register_parameter("color_head_bias", u({3}, tb));
  rho = register_parameter("rho", torch::full({}, std::log(config.beta_init),
                                               torch::kFloat32));
}

torch::Tensor FusionImpl::sdf(const torch::Tensor& geometry_feature) const {
  return (torch::matmul(geometry_feature, sdf_weight) + sdf_bias).squeeze(-1);
}

torch::Tensor FusionImpl::color(const torch::Tensor& texture_feature) const {
  return torch::sigmoid(torch::matmul(texture_feature, color_weight) + color_bias);
}

}  // namespace lcnerf
