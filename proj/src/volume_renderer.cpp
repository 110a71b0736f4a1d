// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/volume_renderer.h"

#include <cmath>
#include <string>

#include "lcnerf/errors.h"

namespace lcnerf {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

void Camera::validate() const {
  if (!(fov > 0.0 && fov < std::numbers::pi)) {
    throw InvalidArgument("camera fov must lie in (0, pi), got " + std::to_string(fov));
  }
  if (height < 1 || width < 1) throw InvalidArgument("camera resolution must be >= 1x1");
  if (!(radius > 0.0)) throw InvalidArgument("camera radius must be positive");
  if (!std::isfinite(azimuth) || !std::isfinite(elevation) ||
      std::abs(elevation) >= 0.5 * std::numbers::pi) {
    throw InvalidArgument("camera elevation must be finite and inside (-pi/2, pi/2)");
  }
}

std::array<double, 3> Camera::position() const {
  const double ce = std::cos(elevation);
  return {look_at[0] + radius * ce * std::sin(azimuth),
          look_at[1] + radius * std::sin(elevation),
          look_at[2] + radius * ce * std::cos(azimuth)};
}

Camera make_camera(const RenderConfig& config, const Pose& pose, int64_t resolution) {
  Camera cam;
  cam.azimuth = pose.azimuth;
  cam.elevation = pose.elevation;
  cam.radius = config.radius;
  cam.fov = config.fov;
  cam.height = cam.width = resolution > 0 ? resolution : config.resolution;
  return cam;
}

RayBatch generate_rays(const Camera& camera, double near, double far,
                       torch::ScalarType dtype) {
  camera.validate();
  if (!(near < far)) throw InvalidArgument("ray bounds require near < far");
  const Vec3 origin = camera.position();
  const Vec3 forward = normalized(sub(camera.look_at, origin));
  const Vec3 right = normalized(cross(forward, {0.0, 1.0, 0.0}));
  const Vec3 up = cross(right, forward);
  const double tan_half = std::tan(0.5 * camera.fov);
  const double aspect = static_cast<double>(camera.width) / static_cast<double>(camera.height);

  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto cols = (torch::arange(camera.width, opts) + 0.5) / camera.width * 2.0 - 1.0;
  auto rows = 1.0 - (torch::arange(camera.height, opts) + 0.5) / camera.height * 2.0;
  auto grid = torch::meshgrid({rows, cols}, "ij");
  auto u = (grid[1] * (tan_half * aspect)).reshape({-1, 1});
  auto v = (grid[0] * tan_half).reshape({-1, 1});
  auto r = torch::tensor({right[0], right[1], right[2]}, opts);
  auto w = torch::tensor({up[0], up[1], up[2]}, opts);
  auto f = torch::tensor({forward[0], forward[1], forward[2]}, opts);
  auto dirs = u * r + v * w + f;
  dirs = dirs / dirs.norm(2, 1, true);

  RayBatch rays;
  rays.directions = dirs.to(dtype);
  rays.origins = torch::tensor({origin[0], origin[1], origin[2]}, opts)
                     .expand({dirs.size(0), 3})
                     .to(dtype)
                     .contiguous();
  rays.near = near;
  rays.far = far;
  return rays;
}

DepthSamples sample_depths(int64_t rays, double near, double far, int64_t samples,
                           bool stratified, std::optional<at::Generator> gen,
                           torch::ScalarType dtype) {
  if (samples < 1) throw InvalidArgument("need at least one sample per ray");
  if (!(near < far)) throw InvalidArgument("ray bounds require near < far");
  const double bin = (far - near) / static_cast<double>(samples);
  auto opts = torch::TensorOptions().dtype(dtype);
  auto starts = (near + torch::arange(samples, opts.dtype(torch::kFloat64)) * bin)
                    .to(dtype)
                    .expand({rays, samples});
  torch::Tensor offsets;
  if (stratified) {
    if (!gen) throw InvalidArgument("stratified sampling requires an explicit generator");
    offsets = torch::rand({rays, samples}, *gen, opts) * bin;
  } else {
    offsets = torch::full({rays, samples}, 0.5 * bin, opts);
  }
  auto depths = starts + offsets;
  auto last = torch::full({rays, 1}, bin, opts);
  auto deltas = torch::cat({depths.narrow(1, 1, samples - 1) - depths.narrow(1, 0, samples - 1),
                            last},
                           1);
  return {depths, deltas};
}

CompositeResult composite(const torch::Tensor& sigma, const torch::Tensor& color,
                          const torch::Tensor& mask, const torch::Tensor& deltas,
                          const torch::Tensor& depths, double far) {
  if (sigma.sizes() != deltas.sizes()) {
    throw InvalidArgument("sigma and deltas must share a shape");
  }
  if ((sigma < 0).any().item<bool>()) {
    throw InvalidArgument("negative density passed to composite");
  }
  auto tau = sigma * deltas;
  const int64_t n = tau.size(-1);
  // Exclusive prefix sum of optical depth.
  auto shifted = torch::cat({torch::zeros_like(tau.narrow(-1, 0, 1)),
                             tau.narrow(-1, 0, n - 1)},
                            -1);
  auto transmittance = torch::exp(-torch::cumsum(shifted, -1));
  auto weights = transmittance * -torch::expm1(-tau);

  CompositeResult out;
  out.weights = weights;
  out.alpha = weights.sum(-1);
  if (color.defined()) out.color = (weights.unsqueeze(-1) * color).sum(-2);
  if (mask.defined()) out.mask = (weights.unsqueeze(-1) * mask).sum(-2);
  if (depths.defined()) out.depth = (weights * depths).sum(-1) + (1.0 - out.alpha) * far;
  return out;
}

RenderOptions make_render_options(const RenderConfig& config) {
  RenderOptions opts;
  opts.samples = config.samples;
  opts.near_scale = config.near_scale;
  opts.far_scale = config.far_scale;
  return opts;
}

namespace {

// Renders rays [begin, begin + count) of every batch entry.
RenderResult render_rays(const LcNerf& model, const torch::Tensor& wg,
                         const torch::Tensor& wt, const torch::Tensor& origins,
                         const torch::Tensor& directions, double near, double far,
                         const RenderOptions& options) {
  const int64_t batch = origins.size(0);
  const int64_t rays = origins.size(1);
  const int64_t n = options.samples;
  auto dtype = origins.scalar_type();
  auto samples = sample_depths(batch * rays, near, far, n, options.stratified,
                               options.gen, dtype);
  auto depths = samples.depths.reshape({batch, rays, n});
  auto deltas = samples.deltas.reshape({batch, rays, n});
  auto points = origins.unsqueeze(2) + depths.unsqueeze(-1) * directions.unsqueeze(2);
  auto flat_points = points.reshape({batch, rays * n, 3});
  auto flat_dirs = directions.unsqueeze(2).expand({batch, rays, n, 3}).reshape({batch, rays * n, 3});

  auto field = model->field(flat_points, flat_dirs, wg, wt, options.with_texture);
  const int64_t k = field.mask.size(-1);
  auto sigma = field.sigma.reshape({batch, rays, n});
  auto mask = field.mask.reshape({batch, rays, n, k});
  torch::Tensor color;
  if (field.color.defined()) color = field.color.reshape({batch, rays, n, 3});
  auto comp = composite(sigma, color, mask, deltas, depths, far);

  RenderResult out;
  out.image = comp.color;
  out.mask_probs = comp.mask;
  out.alpha = comp.alpha;
  out.depth = comp.depth;
  if (options.keep_points) out.points = flat_points.detach();
  return out;
}

}  // namespace

RenderResult render_batch(const LcNerf& model, const torch::Tensor& geometry_latents,
                          const torch::Tensor& texture_latents,
                          const std::vector<Camera>& cameras,
                          const RenderOptions& options) {
  if (cameras.empty()) throw InvalidArgument("render needs at least one camera");
  const int64_t batch = static_cast<int64_t>(cameras.size());
  if (geometry_latents.dim() != 3 || geometry_latents.size(0) != batch ||
      geometry_latents.size(1) != model->regions() ||
      texture_latents.sizes() != geometry_latents.sizes()) {
    throw InvalidArgument("latents must be (B, K, L_w) with B = camera count and K = " +
                          std::to_string(model->regions()));
  }
  const int64_t height = cameras[0].height;
  const int64_t width = cameras[0].width;
  auto dtype = model->fusion->rho.scalar_type();

  std::vector<torch::Tensor> origins, directions;
  double near = 0.0, far = 0.0;
  for (const auto& cam : cameras) {
    if (cam.height != height || cam.width != width) {
      throw InvalidArgument("all cameras in a batch must share a resolution");
    }
    near = options.near_scale * cam.radius;
    far = options.far_scale * cam.radius;
    auto rays = generate_rays(cam, near, far, dtype);
    origins.push_back(rays.origins);
    directions.push_back(rays.directions);
  }
  auto o = torch::stack(origins);
  auto d = torch::stack(directions);
  const int64_t total = height * width;

  RenderResult out;
  const bool chunked = !torch::GradMode::is_enabled() && options.chunk_rays > 0 &&
                       options.chunk_rays < total;
  if (!chunked) {
    out = render_rays(model, geometry_latents, texture_latents, o, d, near, far, options);
  } else {
    std::vector<torch::Tensor> image, mask, alpha, depth, points;
    for (int64_t begin = 0; begin < total; begin += options.chunk_rays) {
      const int64_t count = std::min(options.chunk_rays, total - begin);
      auto part = render_rays(model, geometry_latents, texture_latents,
                              o.narrow(1, begin, count), d.narrow(1, begin, count), near,
                              far, options);
      if (part.image.defined()) image.push_back(part.image);
      mask.push_back(part.mask_probs);
      alpha.push_back(part.alpha);
      depth.push_back(part.depth);
      if (part.points.defined()) points.push_back(part.points);
    }
    if (!image.empty()) out.image = torch::cat(image, 1);
    out.mask_probs = torch::cat(mask, 1);
    out.alpha = torch::cat(alpha, 1);
    out.depth = torch::cat(depth, 1);
    if (!points.empty()) out.points = torch::cat(points, 1);
  }
  if (out.image.defined()) out.image = out.image.reshape({batch, height, width, 3});
  out.mask_probs = out.mask_probs.reshape({batch, height, width, -1});
  out.alpha = out.alpha.reshape({batch, height, width});
  out.depth = out.depth.reshape({batch, height, width});
  return out;
}

RenderResult render(const LcNerf& model, const LatentBank& latents, const Camera& camera,
                    const RenderOptions& options) {
  latents.validate(model->regions(), model->config().style_dim);
  return render_batch(model, latents.geometry.unsqueeze(0), latents.texture.unsqueeze(0),
                      {camera}, options);
}

torch::Tensor over_white(const torch::Tensor& image, const torch::Tensor& alpha) {
  return image + (1.0 - alpha).unsqueeze(-1);
}

torch::Tensor mask_with_background(const torch::Tensor& mask_probs,
                                   const torch::Tensor& alpha) {
  auto rest = (1.0 - alpha).unsqueeze(-1);
  auto background = mask_probs.narrow(-1, 0, 1) + rest;
  return torch::cat({background, mask_probs.narrow(-1, 1, mask_probs.size(-1) - 1)}, -1);
}

torch::Tensor mask_labels(const RenderResult& result) {
  return mask_with_background(result.mask_probs, result.alpha).argmax(-1);
}

}  // namespace lcnerf
