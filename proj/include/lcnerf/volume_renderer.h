// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <vector>

#include "lcnerf/config.h"
#include "lcnerf/model.h"

namespace lcnerf {

/// (azimuth, elevation) in radians. Frontal is (0, 0).
struct Pose {
  double azimuth = 0.0;
  double elevation = 0.0;
};

/// Pinhole camera orbiting `look_at` at a fixed radius. Right-handed, y-up;
/// the frontal camera sits on +z and looks down -z. `fov` is the vertical
/// field of view across the full image height.
struct Camera {
  double azimuth = 0.0;
  double elevation = 0.0;
  double radius = 1.0;
  double fov = 12.0 * std::numbers::pi / 180.0;
  std::array<double, 3> look_at{0.0, 0.0, 0.0};
  int64_t height = 32;
  int64_t width = 32;

  void validate() const;
  std::array<double, 3> position() const;
  Pose pose() const { return {azimuth, elevation}; }
};

Camera make_camera(const RenderConfig& config, const Pose& pose,
                   int64_t resolution = 0);

struct RayBatch {
  torch::Tensor origins;     // (P, 3)
  torch::Tensor directions;  // (P, 3), unit rows
  double near = 0.0;
  double far = 1.0;
};

/// One ray per pixel in row-major order, through the pixel centers.
RayBatch generate_rays(const Camera& camera, double near, double far,
                       torch::ScalarType dtype = torch::kFloat32);

struct DepthSamples {
  torch::Tensor depths;  // (..., N) ascending
  torch::Tensor deltas;  // (..., N), last entry (far - near) / N
};

/// N depths per ray in [near, far]. Deterministic mode takes bin midpoints,
/// stratified mode one uniform draw per bin (requires `gen`).
/// `rays` is the number of rays; output is (rays, N).
DepthSamples sample_depths(int64_t rays, double near, double far, int64_t samples,
                           bool stratified, std::optional<at::Generator> gen = std::nullopt,
                           torch::ScalarType dtype = torch::kFloat32);

struct CompositeResult {
  torch::Tensor color;    // (..., 3), undefined when no colors given
  torch::Tensor mask;     // (..., K)
  torch::Tensor alpha;    // (...)
  torch::Tensor depth;    // (...)
  torch::Tensor weights;  // (..., N)
};

/// Discrete quadrature: w_j = T_j (1 - exp(-sigma_j delta_j)) with
/// T_j = exp(-sum_{l<j} sigma_l delta_l). Rejects negative densities.
/// `depths` may be undefined, in which case depth is left undefined.
CompositeResult composite(const torch::Tensor& sigma, const torch::Tensor& color,
                          const torch::Tensor& mask, const torch::Tensor& deltas,
                          const torch::Tensor& depths = {}, double far = 0.0);

struct RenderOptions {
  int64_t samples = 18;
  double near_scale = 0.88;
  double far_scale = 1.12;
  bool stratified = false;
  std::optional<at::Generator> gen;
  bool with_texture = true;
  /// Rays per chunk when gradients are disabled; 0 renders in one pass.
  int64_t chunk_rays = 4096;
  /// Keep the flattened sample positions (for SDF regularizers).
  bool keep_points = false;
};

RenderOptions make_render_options(const RenderConfig& config);

struct RenderResult {
  torch::Tensor image;       // (B, H, W, 3), raw (not composited over white)
  torch::Tensor mask_probs;  // (B, H, W, K), rows sum to alpha
  torch::Tensor alpha;       // (B, H, W)
  torch::Tensor depth;       // (B, H, W), far plane where empty
  torch::Tensor points;      // (B, H*W*N, 3) detached, only with keep_points
};

/// Batched render: latents are (B, K, L_w); one camera per batch entry, all
/// with the same resolution.
RenderResult render_batch(const LcNerf& model, const torch::Tensor& geometry_latents,
                          const torch::Tensor& texture_latents,
                          const std::vector<Camera>& cameras,
                          const RenderOptions& options);

/// Single bank, single camera. Outputs keep a leading batch dim of 1.
RenderResult render(const LcNerf& model, const LatentBank& latents,
                    const Camera& camera, const RenderOptions& options);

/// image + (1 - alpha) * white.
torch::Tensor over_white(const torch::Tensor& image, const torch::Tensor& alpha);

/// mask_probs + (1 - alpha) on the background channel (region 0); rows sum to 1.
torch::Tensor mask_with_background(const torch::Tensor& mask_probs,
                                   const torch::Tensor& alpha);

/// Per-pixel argmax region id of the background-completed mask. (B, H, W) int64.
torch::Tensor mask_labels(const RenderResult& result);

}  // namespace lcnerf
