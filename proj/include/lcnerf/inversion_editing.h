// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lcnerf/config.h"
#include "lcnerf/data.h"
#include "lcnerf/field_generators.h"
#include "lcnerf/model.h"
#include "lcnerf/volume_renderer.h"

namespace lcnerf {

inline constexpr uint32_t kLatentFileVersion = 1;
inline constexpr int64_t kDefaultEditIterations = 500;
inline constexpr int64_t kDefaultDilation = 3;

/// Which latent rows a swap replaces.
enum class LatentPart { geometry, texture, both };
LatentPart parse_latent_part(const std::string& text);
std::string to_string(LatentPart part);

/// One applied change. `delta` edits add `values` to the geometry rows;
/// swaps copy the named rows of `values` (a donor bank).
struct HistoryEntry {
  enum class Kind { delta, swap };
  Kind kind = Kind::delta;
  std::vector<int64_t> region_ids;  // empty: all regions
  LatentPart part = LatentPart::geometry;
  LatentBank values;
};

/// Applies `entry` to `bank` and returns the result.
LatentBank apply_entry(const LatentBank& bank, const HistoryEntry& entry);
/// Applies the whole history in order.
LatentBank replay(const LatentBank& base, const std::vector<HistoryEntry>& history);

struct EditSession {
  LcNerf model{nullptr};
  std::string checkpoint;
  LatentBank base;
  LatentBank current;
  Camera camera;
  std::vector<HistoryEntry> history;
};

EditSession make_session(LcNerf model, LatentBank bank, const Camera& camera,
                         std::string checkpoint = {});

/// Deterministic (bin-midpoint) render of the session's current bank.
RenderResult render_session(const EditSession& session, const RenderConfig& render,
                            const Camera& camera);

struct InversionOptions {
  int64_t latent_steps = 200;
  int64_t tune_steps = 100;
  double latent_lr = 1e-2;
  double tune_lr = 1e-4;
  double pixel_weight = 1.0;
  double mask_weight = 0.5;
  /// Latent draws averaged for the starting point.
  int64_t mean_samples = 64;
  uint64_t seed = 0;
};

struct InversionResult {
  EditSession session;
  std::vector<double> latent_losses;
  std::vector<double> tune_losses;
  double pixel_mse = 0.0;
};

/// Two-phase inversion: optimize all 2K style rows against pixel MSE plus
/// mask cross-entropy, then fine-tune a copy of the generator with the rows
/// frozen. `image` (H, W, 3) in [0, 1]; `labels` (H, W) in [0, K).
InversionResult invert(const LcNerf& model, const RenderConfig& render,
                       const torch::Tensor& image, const torch::Tensor& labels,
                       const Camera& camera, const InversionOptions& options);

struct EditProgress {
  int64_t iteration = 0;  // completed iterations
  double loss = 0.0;
  const LatentBank* bank = nullptr;  // bank at this iteration
};

struct EditOptions {
  int64_t iterations = kDefaultEditIterations;
  double lr = 1e-2;
  /// Called before the first update (iteration 0) and after every update.
  /// Returning false stops the job early.
  std::function<bool(const EditProgress&)> on_progress;
};

struct EditResult {
  torch::Tensor delta;          // (K, L_w), zero outside the named rows
  std::vector<double> losses;   // one per completed iteration
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// MSE between one-hot(target) and the background-completed rendered mask,
/// minimized over an additive offset to the named geometry rows only.
/// Advances the session and appends the offset to its history.
EditResult edit_mask(EditSession& session, const RenderConfig& render,
                     const torch::Tensor& target_labels,
                     const std::vector<int64_t>& region_ids, const EditOptions& options);

/// Replaces the named rows (`region_id` < 0: every row) with the donor's.
void swap_region_latents(EditSession& session, int64_t region_id, const LatentBank& donor,
                         LatentPart part);

/// Mean |I - I_e| over pixels where `mask` is true, channels averaged.
double pixel_difference(const torch::Tensor& image, const torch::Tensor& edited,
                        const torch::Tensor& mask);

/// Fraction of pixels whose class ids differ.
double mask_consistency(const torch::Tensor& target, const torch::Tensor& parsed);

/// Square-neighborhood dilation of a boolean (H, W) mask by `radius` pixels.
torch::Tensor dilate(const torch::Tensor& mask, int64_t radius);

/// Pixels outside the dilated union of the named regions in either mask.
torch::Tensor non_edit_mask(const torch::Tensor& before, const torch::Tensor& after,
                            const std::vector<int64_t>& region_ids,
                            int64_t dilation = kDefaultDilation);

struct EvalRow {
  std::string name;
  int64_t samples = 0;
  double pd = 0.0;  // NaN when the row has no samples
  double mc = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // per-region rows, then "Average"
  std::string to_text() const;
  std::string to_json() const;
};

/// Display rows for a schema: Hair/Eyebrow/Nose/Mouth for the merged CelebA
/// schema, every non-background region for other schemas.
std::vector<std::pair<std::string, int64_t>> evaluation_rows(const LabelSchema& schema);

/// Compares `{name}_img.png` / `{name}_mask.png` pairs present in both
/// directories. A sample's edited regions are the non-background regions that
/// gain pixels from the before mask to the target mask (`target_dir`, or the
/// after mask when empty), or the ones that lose pixels when none gain. PD
/// is measured outside their dilated union; MC compares the target mask with
/// the after mask. Each region row averages the samples that edited it;
/// "Average" averages every sample.
EvalReport evaluate_dirs(const std::string& before_dir, const std::string& after_dir,
                         const std::string& target_dir, const LabelSchema& schema,
                         int64_t dilation = kDefaultDilation);

/// `LCLW` file: magic, u32 version, u32 K, u32 L_w, w_g rows then w_t rows,
/// float32 little-endian.
std::vector<uint8_t> encode_latents(const LatentBank& bank);
LatentBank decode_latents(std::span<const uint8_t> bytes);
void save_latents(const LatentBank& bank, const std::string& path);
LatentBank load_latents(const std::string& path);

/// Writes `{dir}/history.jsonl` plus one `LCLW` file per entry, referenced
/// from each line as `delta_ref` or `donor_ref`.
void save_history(const std::vector<HistoryEntry>& history, const std::string& dir);
std::vector<HistoryEntry> load_history(const std::string& dir);

}  // namespace lcnerf
