// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

#include "lcnerf/config.h"
#include "lcnerf/model.h"

namespace lcnerf {

struct DiscriminatorOutput {
  torch::Tensor score;  // (B)
  torch::Tensor pose;   // (B, 2), undefined without a pose head
};

/// Strided conv pyramid: a 3x3 stem, then 3x3 stride-2 stages halving the
/// resolution down to 4x4 with widths doubling up to `max_channels`, leaky
/// slope 0.2 throughout, and a linear head on the flattened 4x4 map.
class ConvDiscriminatorImpl : public torch::nn::Module {
 public:
  ConvDiscriminatorImpl(int64_t in_channels, int64_t resolution,
                        const DiscriminatorConfig& config, int64_t pose_outputs,
                        uint64_t seed);

  /// input: (B, C, H, W) with H = W = resolution.
  DiscriminatorOutput forward(const torch::Tensor& input);

  int64_t in_channels() const { return in_channels_; }
  int64_t resolution() const { return resolution_; }
  bool has_pose_head() const { return pose_outputs_ > 0; }

 private:
  int64_t in_channels_;
  int64_t resolution_;
  int64_t pose_outputs_;
  torch::nn::ModuleList convs_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ConvDiscriminator);

/// D_I: RGB in, realness + (azimuth, elevation) out.
ConvDiscriminator make_image_discriminator(int64_t resolution,
                                           const DiscriminatorConfig& config,
                                           uint64_t seed);
/// D_IM: RGB + K one-hot mask channels in, realness out.
ConvDiscriminator make_image_mask_discriminator(int64_t regions, int64_t resolution,
                                                const DiscriminatorConfig& config,
                                                uint64_t seed);

/// log(1 + exp(x)) elementwise, stable for large |x|.
torch::Tensor gan_softplus(const torch::Tensor& score);
double gan_softplus(double score);

/// Smooth-L1 (transition at 1) per component, summed over components and
/// averaged over the batch. theta, theta_prime: (B, 2).
torch::Tensor pose_loss(const torch::Tensor& theta, const torch::Tensor& theta_prime);

/// Batch mean of ||grad_x score(x)||^2 evaluated at `real` (graph kept so the
/// penalty can be differentiated w.r.t. the discriminator).
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& score,
                         const torch::Tensor& real);

/// mean (||g|| - 1)^2 over rows of (M, 3) gradients.
torch::Tensor eikonal_loss(const torch::Tensor& sdf_gradients);

/// mean exp(-100 |d|).
torch::Tensor minimal_surface_loss(const torch::Tensor& sdf);

struct LossTerm {
  std::string name;
  double weight = 1.0;
  torch::Tensor value;  // scalar, unweighted
};

/// A weighted sum that remembers its parts.
struct LossTerms {
  std::vector<LossTerm> terms;
  torch::Tensor total;

  void add(std::string name, double weight, torch::Tensor value);
  /// Throws NumericError naming the first non-finite term.
  void check_finite() const;
  double value(const std::string& name) const;
};

LossTerms discriminator_image_loss(ConvDiscriminator disc,
                                   const torch::Tensor& fake_image,
                                   const torch::Tensor& real_image,
                                   const torch::Tensor& theta, const LossWeights& weights);

LossTerms discriminator_image_mask_loss(ConvDiscriminator disc,
                                        const torch::Tensor& fake_image,
                                        const torch::Tensor& fake_mask,
                                        const torch::Tensor& real_image,
                                        const torch::Tensor& real_mask,
                                        const LossWeights& weights);

/// SDF values and their spatial gradients at `points` (B, M, 3); the
/// gradients carry a graph for the eikonal term.
struct SdfProbe {
  torch::Tensor sdf;       // (B*M)
  torch::Tensor gradient;  // (B*M, 3)
};
SdfProbe probe_sdf(const LcNerf& model, const torch::Tensor& points,
                   const torch::Tensor& geometry_latents);

LossTerms generator_loss(ConvDiscriminator image_disc,
                         ConvDiscriminator image_mask_disc,
                         const torch::Tensor& fake_image, const torch::Tensor& fake_mask,
                         const torch::Tensor& theta, const SdfProbe& probe,
                         const LossWeights& weights);

/// Images (B, H, W, 3) -> (B, 3, H, W); masks (B, H, W, K) -> (B, K, H, W).
torch::Tensor to_channels_first(const torch::Tensor& hwc);
/// Integer labels (B, H, W) -> one-hot (B, K, H, W) in `dtype`.
torch::Tensor one_hot_labels(const torch::Tensor& labels, int64_t regions,
                             torch::ScalarType dtype);

}  // namespace lcnerf
