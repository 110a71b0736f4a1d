// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include "lcnerf/config.h"

namespace lcnerf {

/// Softmax over the last (region) axis: m_i = exp(s_i) / sum_k exp(s_k).
/// `regions` > 0 additionally checks the axis length.
torch::Tensor fuse_confidences(const torch::Tensor& confidence, int64_t regions = 0);

/// Confidence-weighted blend sum_i m_i f_i.
/// mask: (B, P, K); stack: (B, K, P, F). Returns (B, P, F).
torch::Tensor fuse_features(const torch::Tensor& mask, const torch::Tensor& stack);

/// sigma = sigmoid(-d / beta) / beta. Decreasing in d, bounded by 1/beta.
torch::Tensor sdf_to_density(const torch::Tensor& sdf, const torch::Tensor& beta);
torch::Tensor sdf_to_density(const torch::Tensor& sdf, double beta);

/// Heads applied after fusion plus the learnable density sharpness.
/// beta = exp(rho) keeps it positive without clipping.
class FusionImpl : public torch::nn::Module {
 public:
  FusionImpl(const ModelConfig& config, at::Generator gen);

  /// (..., F_g) -> (...) signed distance, negative inside.
  torch::Tensor sdf(const torch::Tensor& geometry_feature) const;
  /// (..., F_t) -> (..., 3) logistic-squashed color.
  torch::Tensor color(const torch::Tensor& texture_feature) const;
  torch::Tensor beta() const { return torch::exp(rho); }

  torch::Tensor sdf_weight;    // (F_g, 1)
  torch::Tensor sdf_bias;      // (1)
  torch::Tensor color_weight;  // (F_t, 3)
  torch::Tensor color_bias;    // (3)
  torch::Tensor rho;           // scalar
};
TORCH_MODULE(Fusion);

/// Everything the field produces at a batch of points.
struct FieldSample {
  torch::Tensor confidence;        // (B, P, K)
  torch::Tensor mask;              // (B, P, K)
  torch::Tensor geometry_feature;  // (B, P, F_g)
  torch::Tensor sdf;               // (B, P)
  torch::Tensor sigma;             // (B, P)
  torch::Tensor texture_feature;   // (B, P, F_t), undefined for geometry-only
  torch::Tensor color;             // (B, P, 3), undefined for geometry-only
};

}  // namespace lcnerf
