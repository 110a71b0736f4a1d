// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lcnerf/config.h"
#include "lcnerf/image_io.h"
#include "lcnerf/volume_renderer.h"

namespace lcnerf {

using Rng = std::mt19937_64;

/// Ordered merged region names plus the source-id -> merged-id table.
struct LabelSchema {
  std::vector<std::string> names;
  std::vector<int64_t> mapping;
  std::vector<Rgb> palette;

  int64_t regions() const { return static_cast<int64_t>(names.size()); }
  int64_t source_classes() const { return static_cast<int64_t>(mapping.size()); }
  /// Index of `name`, or -1.
  int64_t find(const std::string& name) const;
  void validate() const;

  /// CelebAMask-HQ's 19 parsing classes merged into 13 regions:
  /// background, skin, brows, eyes, glasses, ears, nose, mouth, lips, hair,
  /// hat, neck, cloth.
  static LabelSchema celeba();
  /// Identity schema over the first `regions` toy region names.
  static LabelSchema toy(int64_t regions);
  /// Identity mapping over already-merged ids.
  static LabelSchema identity(const LabelSchema& merged);
};

/// Schema matching a training config: the merged CelebA schema, or the toy
/// schema with the config's region count.
LabelSchema schema_for(const TrainConfig& config);

/// CelebAMask-HQ source class names in id order.
const std::vector<std::string>& celeba_source_names();

/// Relabels every pixel through `schema.mapping`. Throws InvalidArgument
/// naming the first offending (row, col) for ids outside the table.
torch::Tensor merge_labels(const torch::Tensor& raw, const LabelSchema& schema);

struct SegmentedSample {
  torch::Tensor image;   // (H, W, 3) float32 in [0, 1]
  torch::Tensor labels;  // (H, W) int64 in [0, K)
  std::optional<Pose> pose;
};

/// Loads `images/{index}.jpg` and `masks/{index}.png` under `root`, merges the
/// labels and resizes to `resolution` (area filter for the image, nearest for
/// labels).
SegmentedSample load_celeba(const std::string& root, int64_t index, int64_t resolution,
                            const LabelSchema& schema);
/// Number of consecutive `images/{i}.jpg` files starting at 0.
int64_t count_celeba(const std::string& root);

/// Pose prior draw. CelebA: Gaussian truncated at two sigma around frontal;
/// toy: uniform in the configured ranges.
Pose sample_pose(Rng& rng, const DatasetSpec& spec);

struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> radii{};
  std::array<double, 3> color{};
  int64_t region = 1;

  /// Scaled-sphere distance bound min(r) * (|(x - c) / r| - 1); zero exactly
  /// on the surface, negative inside.
  double sdf(const std::array<double, 3>& p) const;
};

/// Union of colored ellipsoids, one per non-background region.
struct ToyScene {
  int64_t regions = 3;
  std::vector<Ellipsoid> ellipsoids;

  struct Hit {
    bool hit = false;
    double t = 0.0;
    int64_t region = 0;
    int64_t ellipsoid = -1;
    std::array<double, 3> point{};
    std::array<double, 3> normal{};
  };
  /// First intersection of the ray with the union.
  Hit trace(const std::array<double, 3>& origin, const std::array<double, 3>& dir) const;
};

inline constexpr double kToyMinClassShare = 0.01;

/// Deterministic from `seed`. Objects are laid out relative to the half
/// extent visible at the look-at point, so any render config frames them.
/// Every region covers at least kToyMinClassShare of the frontal view.
ToyScene generate_toy_scene(uint64_t seed, int64_t regions, const RenderConfig& render);

/// Analytic ray trace: exact labels, Lambert-shaded colors over white.
SegmentedSample render_toy(const ToyScene& scene, const Camera& camera);

/// `spec.toy_count` samples of the seeded scene at poses drawn from the toy prior.
std::vector<SegmentedSample> make_toy_dataset(const DatasetSpec& spec,
                                              const RenderConfig& render);

/// Writes `{dir}/{i}_img.png`, `{i}_mask.png`, `{i}_pose.txt`.
void save_samples(const std::string& dir, const std::vector<SegmentedSample>& samples,
                  const LabelSchema& schema);
std::vector<SegmentedSample> load_samples(const std::string& dir);

/// In-memory training set with its schema.
struct Dataset {
  LabelSchema schema;
  std::vector<SegmentedSample> samples;
  /// CelebA is loaded lazily from disk.
  std::string celeba_root;
  int64_t celeba_count = 0;
  int64_t resolution = 0;

  int64_t size() const;
  SegmentedSample get(int64_t index) const;
};

/// Builds (or loads from the cache directory, when `spec.root` is set) the
/// dataset described by the config.
Dataset open_dataset(const TrainConfig& config);

/// Mean intersection-over-union over classes present in either mask.
double mean_iou(const torch::Tensor& predicted, const torch::Tensor& target, int64_t regions);

}  // namespace lcnerf
