// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/adversarial.h"

#include <cmath>
#include <string>

#include "lcnerf/errors.h"

namespace lcnerf {

ConvDiscriminatorImpl::ConvDiscriminatorImpl(int64_t in_channels, int64_t resolution,
                                             const DiscriminatorConfig& config,
                                             int64_t pose_outputs, uint64_t seed)
    : in_channels_(in_channels), resolution_(resolution), pose_outputs_(pose_outputs) {
  if (resolution < 4 || (resolution & (resolution - 1)) != 0) {
    throw InvalidArgument("discriminator resolution must be a power of two >= 4, got " +
                          std::to_string(resolution));
  }
  namespace nn = torch::nn;
  int64_t channels = std::min(config.base_channels, config.max_channels);
  convs_->push_back(nn::Conv2d(nn::Conv2dOptions(in_channels, channels, 3).padding(1)));
  for (int64_t size = resolution; size > 4; size /= 2) {
    const int64_t next = std::min(channels * 2, config.max_channels);
    convs_->push_back(
        nn::Conv2d(nn::Conv2dOptions(channels, next, 3).stride(2).padding(1)));
    channels = next;
  }
  convs_ = register_module("convs", convs_);
  head_ = register_module("head", nn::Linear(channels * 16, 1 + pose_outputs));

  // Re-draw every parameter from a seeded generator; the default init
  // consumes the global RNG.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard guard;
  for (auto& item : named_parameters()) {
    auto& p = item.value();
    int64_t fan_in = 1;
    if (p.dim() > 1) {
      for (int64_t d = 1; d < p.dim(); ++d) fan_in *= p.size(d);
    } else {
      fan_in = channels;
    }
    const bool bias = item.key().find("bias") != std::string::npos;
    const double bound = bias ? 0.0 : std::sqrt(3.0 / static_cast<double>(fan_in));
    if (bias) {
      p.zero_();
    } else {
      p.uniform_(-bound, bound, gen);
    }
  }
}

DiscriminatorOutput ConvDiscriminatorImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != in_channels_ ||
      input.size(2) != resolution_ || input.size(3) != resolution_) {
    throw InvalidArgument("discriminator expects (B, " + std::to_string(in_channels_) +
                          ", " + std::to_string(resolution_) + ", " +
                          std::to_string(resolution_) + ") input");
  }
  torch::Tensor h = input;
  for (const auto& conv : *convs_) {
    h = torch::leaky_relu(conv->as<torch::nn::Conv2d>()->forward(h), 0.2);
  }
  auto out = head_->forward(h.flatten(1));
  DiscriminatorOutput result;
  result.score = out.select(1, 0);
  if (pose_outputs_ > 0) result.pose = out.narrow(1, 1, pose_outputs_);
  return result;
}

ConvDiscriminator make_image_discriminator(int64_t resolution,
                                           const DiscriminatorConfig& config,
                                           uint64_t seed) {
  return ConvDiscriminator(3, resolution, config, 2, seed);
}

ConvDiscriminator make_image_mask_discriminator(int64_t regions, int64_t resolution,
                                                const DiscriminatorConfig& config,
                                                uint64_t seed) {
  return ConvDiscriminator(3 + regions, resolution, config, 0, seed);
}

torch::Tensor gan_softplus(const torch::Tensor& score) {
  return torch::nn::functional::softplus(score);
}

double gan_softplus(double score) {
  // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
  return std::max(score, 0.0) + std::log1p(std::exp(-std::abs(score)));
}

torch::Tensor pose_loss(const torch::Tensor& theta, const torch::Tensor& theta_prime) {
  if (theta.sizes() != theta_prime.sizes()) {
    throw InvalidArgument("pose tensors must share a shape");
  }
  auto diff = (theta - theta_prime).abs();
  auto per = torch::where(diff < 1.0, 0.5 * diff * diff, diff - 0.5);
  if (per.dim() <= 1) return per.sum();
  return per.sum(-1).mean();
}

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& score,
                         const torch::Tensor& real) {
  auto input = real.detach().requires_grad_(true);
  auto out = score(input);
  auto grad = torch::autograd::grad({out.sum()}, {input}, {}, /*retain_graph=*/true,
                                    /*create_graph=*/true)[0];
  return grad.square().flatten(1).sum(1).mean();
}

torch::Tensor eikonal_loss(const torch::Tensor& sdf_gradients) {
  return (sdf_gradients.norm(2, -1) - 1.0).square().mean();
}

torch::Tensor minimal_surface_loss(const torch::Tensor& sdf) {
  return torch::exp(-100.0 * sdf.abs()).mean();
}

void LossTerms::add(std::string name, double weight, torch::Tensor value) {
  auto weighted = weight == 1.0 ? value : value * weight;
  total = total.defined() ? total + weighted : weighted;
  terms.push_back({std::move(name), weight, std::move(value)});
}

void LossTerms::check_finite() const {
  for (const auto& t : terms) {
    if (!std::isfinite(t.value.item<double>())) throw NumericError(t.name);
  }
  if (total.defined() && !std::isfinite(total.item<double>())) throw NumericError("total");
}

double LossTerms::value(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t.value.item<double>();
  }
  throw InvalidArgument("no loss term named " + name);
}

LossTerms discriminator_image_loss(ConvDiscriminator disc,
                                   const torch::Tensor& fake_image,
                                   const torch::Tensor& real_image,
                                   const torch::Tensor& theta, const LossWeights& weights) {
  auto fake = disc->forward(fake_image.detach());
  auto real = disc->forward(real_image);
  LossTerms loss;
  loss.add("gan_fake", 1.0, gan_softplus(fake.score).mean());
  loss.add("gan_real", 1.0, gan_softplus(-real.score).mean());
  loss.add("r1", weights.image_r1,
           r1_penalty([&disc](const torch::Tensor& x) { return disc->forward(x).score; },
                      real_image));
  // The pose head is supervised on generated images, whose pose is known.
  loss.add("pose", weights.pose, pose_loss(theta, fake.pose));
  loss.check_finite();
  return loss;
}

LossTerms discriminator_image_mask_loss(ConvDiscriminator disc,
                                        const torch::Tensor& fake_image,
                                        const torch::Tensor& fake_mask,
                                        const torch::Tensor& real_image,
                                        const torch::Tensor& real_mask,
                                        const LossWeights& weights) {
  auto fake_in = torch::cat({fake_image, fake_mask}, 1).detach();
  auto real_in = torch::cat({real_image, real_mask}, 1);
  LossTerms loss;
  loss.add("gan_fake", 1.0, gan_softplus(disc->forward(fake_in).score).mean());
  loss.add("gan_real", 1.0, gan_softplus(-disc->forward(real_in).score).mean());
  loss.add("r1", weights.image_mask_r1,
           r1_penalty([&disc](const torch::Tensor& x) { return disc->forward(x).score; },
                      real_in));
  loss.check_finite();
  return loss;
}

SdfProbe probe_sdf(const LcNerf& model, const torch::Tensor& points,
                   const torch::Tensor& geometry_latents) {
  auto x = points.detach().requires_grad_(true);
  auto field = model->geometry_field(x, geometry_latents);
  auto grad = torch::autograd::grad({field.sdf.sum()}, {x}, {}, /*retain_graph=*/true,
                                    /*create_graph=*/true)[0];
  return {field.sdf.reshape({-1}), grad.reshape({-1, 3})};
}

LossTerms generator_loss(ConvDiscriminator image_disc,
                         ConvDiscriminator image_mask_disc,
                         const torch::Tensor& fake_image, const torch::Tensor& fake_mask,
                         const torch::Tensor& theta, const SdfProbe& probe,
                         const LossWeights& weights) {
  auto di = image_disc->forward(fake_image);
  auto dim = image_mask_disc->forward(torch::cat({fake_image, fake_mask}, 1));
  LossTerms loss;
  loss.add("gan_image", 1.0, gan_softplus(-di.score).mean());
  loss.add("gan_image_mask", weights.image_mask, gan_softplus(-dim.score).mean());
  loss.add("pose", weights.pose, pose_loss(theta, di.pose));
  loss.add("eikonal", weights.eikonal, eikonal_loss(probe.gradient));
  loss.add("minimal_surface", weights.minimal_surface, minimal_surface_loss(probe.sdf));
  loss.check_finite();
  return loss;
}

torch::Tensor to_channels_first(const torch::Tensor& hwc) {
  return hwc.permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor one_hot_labels(const torch::Tensor& labels, int64_t regions,
                             torch::ScalarType dtype) {
  if (labels.numel() > 0 &&
      (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= regions)) {
    throw InvalidArgument("label ids must lie in [0, " + std::to_string(regions) + ")");
  }
  return torch::one_hot(labels.to(torch::kLong), regions)
      .permute({0, 3, 1, 2})
      .to(dtype)
      .contiguous();
}

}  // namespace lcnerf
