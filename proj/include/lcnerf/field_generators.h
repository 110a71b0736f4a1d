// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>

#include "lcnerf/config.h"

namespace lcnerf {

inline constexpr int64_t kGeometryLayers = 6;
inline constexpr int64_t kTextureLayers = 4;
inline constexpr int64_t kMappingLayers = 3;

/// Per-region style vectors: one geometry row and one texture row per region.
/// Both tensors are (K, L_w). Batched variants carry a leading batch dim.
struct LatentBank {
  torch::Tensor geometry;
  torch::Tensor texture;

  int64_t regions() const { return geometry.size(-2); }
  int64_t style_dim() const { return geometry.size(-1); }

  /// Throws InvalidArgument unless both are finite (K, L_w) tensors.
  void validate(int64_t regions, int64_t style_dim) const;
  LatentBank clone() const;
  bool bit_equal(const LatentBank& other) const;
};

/// K independent stacks of FiLM-modulated sine layers evaluated together.
///
/// Layer n computes sin(omega_n * (gamma * (h W_n + b_n) + phi)) where
/// (gamma, phi) = style A_n + c_n is the per-region frequency/phase pair.
/// Weights are stored stacked along a leading region axis so one batched
/// matmul evaluates every region without mixing them.
class ModulatedSirenImpl : public torch::nn::Module {
 public:
  ModulatedSirenImpl(int64_t regions, int64_t in_dim, int64_t hidden_dim,
                     int64_t layers, int64_t style_dim, double first_omega,
                     double hidden_omega, at::Generator gen);

  /// input: (B, K, P, in) or (B, 1, P, in); style: (B, K, L_w).
  /// Returns (B, K, P, hidden). With `region >= 0` only that region's stack
  /// is evaluated and K is 1 in every shape.
  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& style,
                        int64_t region = -1) const;

  int64_t layers() const { return static_cast<int64_t>(weights_.size()); }
  int64_t hidden_dim() const { return hidden_dim_; }

  std::vector<torch::Tensor> weights_;       // (K, in_n, H)
  std::vector<torch::Tensor> biases_;        // (K, H)
  std::vector<torch::Tensor> film_weights_;  // (K, L_w, 2H)
  std::vector<torch::Tensor> film_biases_;   // (K, 2H)

 private:
  int64_t hidden_dim_;
  std::vector<double> omegas_;
};
TORCH_MODULE(ModulatedSiren);

/// Output of the geometry branch for all regions at once.
struct GeometryOutput {
  torch::Tensor confidence;  // (B, P, K) pre-softmax s_i
  torch::Tensor features;    // (B, K, P, F_g)
};

/// The K geometry generators: 6 modulated sine layers, a linear feature head
/// producing f_g_i and a 1-wide confidence head reading f_g_i.
class GeometryGeneratorsImpl : public torch::nn::Module {
 public:
  GeometryGeneratorsImpl(const ModelConfig& config, at::Generator gen);

  /// points: (B, P, 3); styles: (B, K, L_w).
  GeometryOutput forward(const torch::Tensor& points,
                         const torch::Tensor& styles) const;

  /// Single region: points (P, 3), style (L_w). Returns confidence (P) and
  /// features (P, F_g). Rejects non-finite points.
  std::pair<torch::Tensor, torch::Tensor> forward_region(
      const torch::Tensor& points, int64_t region,
      const torch::Tensor& style) const;

  int64_t regions() const { return regions_; }
  int64_t feature_dim() const { return feature_dim_; }

  ModulatedSiren trunk{nullptr};
  torch::Tensor feature_weight;     // (K, H, F_g)
  torch::Tensor feature_bias;       // (K, F_g)
  torch::Tensor confidence_weight;  // (K, F_g, 1)
  torch::Tensor confidence_bias;    // (K, 1)

 private:
  GeometryOutput run(const torch::Tensor& points, const torch::Tensor& styles,
                     int64_t region) const;

  int64_t regions_;
  int64_t feature_dim_;
};
TORCH_MODULE(GeometryGenerators);

/// The K texture generators: input is [f_g_i, v], 4 modulated sine layers and
/// a linear head producing f_t_i. Holds no geometry parameters.
class TextureGeneratorsImpl : public torch::nn::Module {
 public:
  TextureGeneratorsImpl(const ModelConfig& config, at::Generator gen);

  /// features: (B, K, P, F_g); directions: (B, P, 3); styles: (B, K, L_w).
  /// Returns (B, K, P, F_t).
  torch::Tensor forward(const torch::Tensor& features,
                        const torch::Tensor& directions,
                        const torch::Tensor& styles) const;

  /// Single region: features (P, F_g), directions (P, 3) unit rows.
  torch::Tensor forward_region(const torch::Tensor& features,
                               const torch::Tensor& directions, int64_t region,
                               const torch::Tensor& style) const;

  int64_t input_feature_dim() const { return input_feature_dim_; }

  ModulatedSiren trunk{nullptr};
  torch::Tensor head_weight;  // (K, H, F_t)
  torch::Tensor head_bias;    // (K, F_t)

 private:
  torch::Tensor run(const torch::Tensor& features, const torch::Tensor& directions,
                    const torch::Tensor& styles, int64_t region) const;

  int64_t regions_;
  int64_t input_feature_dim_;
};
TORCH_MODULE(TextureGenerators);

/// Noise -> style MLP. Noise rows are normalized to unit norm first, then
/// three affine layers each followed by a leaky slope of 0.2.
class MappingNetworkImpl : public torch::nn::Module {
 public:
  MappingNetworkImpl(int64_t noise_dim, int64_t style_dim, at::Generator gen);

  /// z: (..., L_z) -> (..., L_w), applied row-wise.
  torch::Tensor forward(const torch::Tensor& z) const;

  std::vector<torch::Tensor> weights_;  // (in, out)
  std::vector<torch::Tensor> biases_;   // (out)

 private:
  int64_t noise_dim_;
};
TORCH_MODULE(MappingNetwork);

/// Fills every parameter of `module` with zeros (used by zero-network tests).
void zero_parameters(torch::nn::Module& module);

}  // namespace lcnerf
