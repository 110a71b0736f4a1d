// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/field_generators.h"

#include <cmath>
#include <string>

#include "lcnerf/errors.h"

namespace lcnerf {

namespace {

torch::Tensor uniform(std::vector<int64_t> shape, double bound,
                      at::Generator& gen) {
  return torch::empty(shape, torch::kFloat32).uniform_(-bound, bound, gen);
}

void check_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw InvalidArgument(std::string(what) + " contains non-finite values");
  }
}

void check_region(int64_t region, int64_t regions) {
  if (region < 0 || region >= regions) {
    throw InvalidArgument("region " + std::to_string(region) +
                          " out of range [0, " + std::to_string(regions) + ")");
  }
}

// Narrows a stacked (K, ...) parameter to one region, or passes it through.
torch::Tensor pick(const torch::Tensor& t, int64_t region) {
  return region < 0 ? t : t.narrow(0, region, 1);
}

}  // namespace

void LatentBank::validate(int64_t regions, int64_t style_dim) const {
  if (!geometry.defined() || !texture.defined()) {
    throw InvalidArgument("latent bank is empty");
  }
  if (geometry.dim() != 2 || geometry.sizes() != texture.sizes()) {
    throw InvalidArgument("latent bank rows must be (K, L_w) for both branches");
  }
  if (geometry.size(0) != regions || geometry.size(1) != style_dim) {
    throw InvalidArgument("latent bank shape (" +
                          std::to_string(geometry.size(0)) + ", " +
                          std::to_string(geometry.size(1)) +
                          ") does not match configured (" +
                          std::to_string(regions) + ", " +
                          std::to_string(style_dim) + ")");
  }
  check_finite(geometry, "geometry latents");
  check_finite(texture, "texture latents");
}

LatentBank LatentBank::clone() const {
  return {geometry.clone(), texture.clone()};
}

bool LatentBank::bit_equal(const LatentBank& other) const {
  return geometry.sizes() == other.geometry.sizes() &&
         texture.sizes() == other.texture.sizes() &&
         geometry.dtype() == other.geometry.dtype() &&
         torch::equal(geometry, other.geometry) &&
         torch::equal(texture, other.texture);
}

ModulatedSirenImpl::ModulatedSirenImpl(int64_t regions, int64_t in_dim,
                                       int64_t hidden_dim, int64_t layers,
                                       int64_t style_dim, double first_omega,
                                       double hidden_omega, at::Generator gen)
    : hidden_dim_(hidden_dim) {
  const double film_bound = 0.25 * std::sqrt(3.0 / static_cast<double>(style_dim));
  for (int64_t n = 0; n < layers; ++n) {
    const int64_t fan_in = n == 0 ? in_dim : hidden_dim;
    const double omega = n == 0 ? first_omega : hidden_omega;
    // First layer U(-1/n, 1/n); later layers U(+-sqrt(6/n)/omega).
    const double bound =
        n == 0 ? 1.0 / static_cast<double>(fan_in)
               : std::sqrt(6.0 / static_cast<double>(fan_in)) / omega;
    const std::string tag = "layer" + std::to_string(n);
    weights_.push_back(register_parameter(
        tag + "_weight", uniform({regions, fan_in, hidden_dim}, bound, gen)));
    biases_.push_back(register_parameter(
        tag + "_bias",
        uniform({regions, hidden_dim}, 1.0 / std::sqrt(static_cast<double>(fan_in)), gen)));
    film_weights_.push_back(register_parameter(
        tag + "_film_weight",
        uniform({regions, style_dim, 2 * hidden_dim}, film_bound, gen)));
    // gamma starts at 1, phase at 0.
    auto film_bias = torch::zeros({regions, 2 * hidden_dim});
    film_bias.narrow(1, 0, hidden_dim).fill_(1.0);
    film_biases_.push_back(register_parameter(tag + "_film_bias", film_bias));
    omegas_.push_back(omega);
  }
}

torch::Tensor ModulatedSirenImpl::forward(const torch::Tensor& input,
                                          const torch::Tensor& style,
                                          int64_t region) const {
  torch::Tensor h = input;
  for (size_t n = 0; n < weights_.size(); ++n) {
    // (B, K, 2H) frequency/phase pairs for this layer.
    auto film = torch::matmul(style.unsqueeze(-2), pick(film_weights_[n], region))
                    .squeeze(-2) +
                pick(film_biases_[n], region);
    auto gamma = film.narrow(-1, 0, hidden_dim_).unsqueeze(-2);
    auto phase = film.narrow(-1, hidden_dim_, hidden_dim_).unsqueeze(-2);
    auto pre = torch::matmul(h, pick(weights_[n], region)) +
               pick(biases_[n], region).unsqueeze(-2);
    auto arg = torch::addcmul(phase, gamma, pre);
    if (omegas_[n] != 1.0) arg = arg * omegas_[n];
    h = torch::sin(arg);
  }
  return h;
}

GeometryGeneratorsImpl::GeometryGeneratorsImpl(const ModelConfig& config,
                                               at::Generator gen)
    : regions_(config.regions), feature_dim_(config.geometry_feature_dim) {
  trunk = register_module(
      "trunk", ModulatedSiren(config.regions, 3, config.hidden_dim, kGeometryLayers,
                              config.style_dim, config.first_omega,
                              config.hidden_omega, gen));
  const double hb = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  const double fb = 1.0 / std::sqrt(static_cast<double>(feature_dim_));
  feature_weight = register_parameter(
      "feature_head_weight",
      uniform({regions_, config.hidden_dim, feature_dim_}, hb, gen));
  feature_bias = register_parameter("feature_head_bias",
                                    uniform({regions_, feature_dim_}, hb, gen));
  confidence_weight = register_parameter(
      "confidence_head_weight", uniform({regions_, feature_dim_, 1}, fb, gen));
  confidence_bias =
      register_parameter("confidence_head_bias", uniform({regions_, 1}, fb, gen));
}

GeometryOutput GeometryGeneratorsImpl::run(const torch::Tensor& points,
                                           const torch::Tensor& styles,
                                           int64_t region) const {
  auto h = trunk->forward(points.unsqueeze(1), styles, region);
  auto features = torch::matmul(h, pick(feature_weight, region)) +
                  pick(feature_bias, region).unsqueeze(-2);
  // (B, K, P, 1) -> (B, P, K)
  auto confidence = (torch::matmul(features, pick(confidence_weight, region)) +
                     pick(confidence_bias, region).unsqueeze(-2))
                        .squeeze(-1)
                        .transpose(1, 2);
  return {confidence, features};
}

GeometryOutput GeometryGeneratorsImpl::forward(const torch::Tensor& points,
                                               const torch::Tensor& styles) const {
  if (points.dim() != 3 || points.size(-1) != 3) {
    throw InvalidArgument("geometry points must be (B, P, 3)");
  }
  if (styles.dim() != 3 || styles.size(1) != regions_ ||
      styles.size(0) != points.size(0)) {
    throw InvalidArgument("geometry styles must be (B, K, L_w) with K = " +
                          std::to_string(regions_));
  }
  return run(points, styles, -1);
}

std::pair<torch::Tensor, torch::Tensor> GeometryGeneratorsImpl::forward_region(
    const torch::Tensor& points, int64_t region, const torch::Tensor& style) const {
  check_region(region, regions_);
  if (points.dim() != 2 || points.size(1) != 3) {
    throw InvalidArgument("points must be (B, 3)");
  }
  check_finite(points, "points");
  check_finite(style, "geometry style");
  auto out = run(points.unsqueeze(0), style.reshape({1, 1, -1}), region);
  return {out.confidence.reshape({-1}), out.features.squeeze(1).squeeze(0)};
}

TextureGeneratorsImpl::TextureGeneratorsImpl(const ModelConfig& config,
                                             at::Generator gen)
    : regions_(config.regions), input_feature_dim_(config.geometry_feature_dim) {
  trunk = register_module(
      "trunk", ModulatedSiren(config.regions, input_feature_dim_ + 3,
                              config.hidden_dim, kTextureLayers, config.style_dim,
                              config.first_omega, config.hidden_omega, gen));
  const double hb = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  head_weight = register_parameter(
      "head_weight",
      uniform({regions_, config.hidden_dim, config.texture_feature_dim}, hb, gen));
  head_bias = register_parameter(
      "head_bias", uniform({regions_, config.texture_feature_dim}, hb, gen));
}

torch::Tensor TextureGeneratorsImpl::run(const torch::Tensor& features,
                                         const torch::Tensor& directions,
                                         const torch::Tensor& styles,
                                         int64_t region) const {
  auto dirs = directions.unsqueeze(1).expand(
      {features.size(0), features.size(1), features.size(2), 3});
  auto input = torch::cat({features, dirs}, -1);
  auto h = trunk->forward(input, styles, region);
  return torch::matmul(h, pick(head_weight, region)) +
         pick(head_bias, region).unsqueeze(-2);
}

torch::Tensor TextureGeneratorsImpl::forward(const torch::Tensor& features,
                                             const torch::Tensor& directions,
                                             const torch::Tensor& styles) const {
  if (features.dim() != 4 || features.size(1) != regions_ ||
      features.size(-1) != input_feature_dim_) {
    throw InvalidArgument("texture input features must be (B, K, P, F_g) with F_g = " +
                          std::to_string(input_feature_dim_));
  }
  if (directions.dim() != 3 || directions.size(-1) != 3) {
    throw InvalidArgument("view directions must be (B, P, 3)");
  }
  return run(features, directions, styles, -1);
}

torch::Tensor TextureGeneratorsImpl::forward_region(const torch::Tensor& features,
                                                    const torch::Tensor& directions,
                                                    int64_t region,
                                                    const torch::Tensor& style) const {
  check_region(region, regions_);
  if (features.dim() != 2 || features.size(1) != input_feature_dim_) {
    throw InvalidArgument("geometry feature width " +
                          std::to_string(features.size(-1)) +
                          " does not match configured F_g = " +
                          std::to_string(input_feature_dim_));
  }
  if (directions.dim() != 2 || directions.size(1) != 3 ||
      directions.size(0) != features.size(0)) {
    throw InvalidArgument("view directions must be (B, 3)");
  }
  auto norms = directions.norm(2, 1);
  if ((norms - 1.0).abs().max().item<double>() > 1e-6) {
    throw InvalidArgument("view directions must be unit vectors");
  }
  check_finite(style, "texture style");
  auto out = run(features.unsqueeze(0).unsqueeze(0), directions.unsqueeze(0),
                 style.reshape({1, 1, -1}), region);
  return out.squeeze(1).squeeze(0);
}

MappingNetworkImpl::MappingNetworkImpl(int64_t noise_dim, int64_t style_dim,
                                       at::Generator gen)
    : noise_dim_(noise_dim) {
  int64_t in = noise_dim;
  for (int64_t n = 0; n < kMappingLayers; ++n) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    const std::string tag = "layer" + std::to_string(n);
    weights_.push_back(
        register_parameter(tag + "_weight", uniform({in, style_dim}, bound, gen)));
    biases_.push_back(register_parameter(
        tag + "_bias", uniform({style_dim}, 1.0 / std::sqrt(static_cast<double>(in)), gen)));
    in = style_dim;
  }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) const {
  if (z.size(-1) != noise_dim_) {
    throw InvalidArgument("noise width " + std::to_string(z.size(-1)) +
                          " does not match L_z = " + std::to_string(noise_dim_));
  }
  // Zero noise stays zero, so w(0) is the mapping of the origin.
  auto h = z / (z.norm(2, -1, true) + 1e-8);
  for (size_t n = 0; n < weights_.size(); ++n) {
    h = torch::leaky_relu(torch::matmul(h, weights_[n]) + biases_[n], 0.2);
  }
  return h;
}

void zero_parameters(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& p : module.parameters()) p.zero_();
}

}  // namespace lcnerf
