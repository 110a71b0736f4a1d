// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lcnerf/adversarial.h"
#include "lcnerf/config.h"
#include "lcnerf/data.h"
#include "lcnerf/model.h"

namespace lcnerf {

inline constexpr uint32_t kCheckpointVersion = 1;

/// Everything a run needs to continue: networks, optimizers and the step
/// counter. Per-step randomness is a pure function of (seed, step), so the
/// step counter is the whole RNG state.
struct TrainState {
  TrainConfig config;
  int64_t regions = 0;
  LcNerf model{nullptr};
  ConvDiscriminator image_disc{nullptr};
  ConvDiscriminator image_mask_disc{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_generator;
  std::unique_ptr<torch::optim::Adam> opt_image_disc;
  std::unique_ptr<torch::optim::Adam> opt_image_mask_disc;
  int64_t step = 0;
};

/// Fresh networks and optimizers. `regions` overrides the resolved count when
/// positive. Runs the sphere warm-up when `config.sphere_init_steps > 0`.
TrainState make_train_state(const TrainConfig& config, int64_t regions = 0);

/// Fits the fused SDF to a centered sphere for random latents so training
/// starts from a closed surface. Returns the final fit loss.
double sphere_init(LcNerf& model, const TrainConfig& config);

/// Seed of the per-step random streams.
uint64_t step_seed(int64_t seed, int64_t step);

struct RealBatch {
  torch::Tensor images;  // (B, 3, H, W)
  torch::Tensor masks;   // (B, K, H, W) one-hot
};

/// The real batch used at `step`: indices drawn from the step stream.
RealBatch draw_real_batch(const Dataset& data, const TrainConfig& config, int64_t step);

struct StepMetrics {
  int64_t step = 0;
  std::map<std::string, double> terms;  // "d_image.gan_fake", "generator.pose", ...
  double beta = 0.0;
  double lr_generator = 0.0;
  double lr_image_disc = 0.0;
  double lr_image_mask_disc = 0.0;
  double grad_norm_generator = 0.0;
  double grad_norm_image_disc = 0.0;
  double grad_norm_image_mask_disc = 0.0;

  /// One JSON object, keys in a fixed order.
  std::string to_json() const;
};

struct StepOptions {
  bool update_image_disc = true;
  bool update_image_mask_disc = true;
  bool update_generator = true;
};

/// One D_I update, one D_IM update and one G update, in that order. Rejects
/// a real batch whose shape disagrees with the config before touching any
/// parameter; throws NumericError naming the first non-finite loss term.
StepMetrics train_step(TrainState& state, const RealBatch& real,
                       const StepOptions& options = {});

/// Binary container: magic "LCNF", u32 version, config text, seed and step,
/// optimizer step counters, then length-prefixed named float32 tensors.
std::vector<uint8_t> serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(std::span<const uint8_t> bytes);
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

/// Named float32 tensors in checkpoint order. Per-region generator weights
/// are listed as `geo.{i}.*` / `tex.{i}.*`.
std::vector<std::pair<std::string, torch::Tensor>> named_state_tensors(const TrainState& state);

struct TrainOptions {
  std::string out_dir;
  /// Continue from this checkpoint instead of starting fresh.
  std::string resume;
  /// Stop once the state reaches this step (defaults to config.steps).
  int64_t stop_step = -1;
  std::function<void(const StepMetrics&)> on_step;
};

/// Mean IoU between masks rendered from fresh latent draws and the
/// analytic toy masks at `poses` (one latent draw per pose).
double toy_mask_iou(const LcNerf& model, const TrainConfig& config,
                    const std::vector<Pose>& poses, uint64_t seed);

/// Poses for held-out evaluation: drawn from the toy prior with a stream
/// disjoint from the one used to build the training set.
std::vector<Pose> held_out_poses(const TrainConfig& config, int64_t count);

/// Full loop. Appends one JSON line per step to `{out_dir}/metrics.jsonl`,
/// writes `{out_dir}/ckpt_{step}.lcnf` every `checkpoint_every` steps and
/// `{out_dir}/final.lcnf` at the end.
TrainState train(const TrainConfig& config, const TrainOptions& options);

}  // namespace lcnerf
