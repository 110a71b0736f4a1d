// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/data.h"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lcnerf/errors.h"

namespace lcnerf {

namespace fs = std::filesystem;
using Vec3 = std::array<double, 3>;

namespace {

const std::vector<Rgb>& base_palette() {
  static const std::vector<Rgb> palette = {
      {0, 0, 0},       {204, 102, 51},  {153, 51, 0},   {255, 255, 255},
      {255, 204, 0},   {0, 255, 255},   {255, 153, 204}, {102, 51, 153},
      {255, 0, 0},     {0, 0, 255},     {0, 204, 0},    {204, 204, 0},
      {0, 102, 102}};
  return palette;
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

const std::vector<std::string>& celeba_source_names() {
  static const std::vector<std::string> names = {
      "background", "skin",  "nose",  "eye_g", "l_eye", "r_eye", "l_brow",
      "r_brow",     "l_ear", "r_ear", "mouth", "u_lip", "l_lip", "hair",
      "hat",        "ear_r", "neck_l", "neck", "cloth"};
  return names;
}

int64_t LabelSchema::find(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int64_t>(i);
  }
  return -1;
}

void LabelSchema::validate() const {
  if (names.empty()) throw InvalidArgument("label schema has no regions");
  if (palette.size() < names.size()) throw InvalidArgument("label schema palette too short");
  std::vector<bool> used(names.size(), false);
  for (int64_t id : mapping) {
    if (id < 0 || id >= regions()) {
      throw InvalidArgument("label schema maps to id " + std::to_string(id) +
                            " outside [0, " + std::to_string(regions()) + ")");
    }
    used[id] = true;
  }
  for (size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) throw InvalidArgument("label schema never produces region " + names[i]);
  }
}

LabelSchema LabelSchema::celeba() {
  LabelSchema s;
  s.names = {"background", "skin", "brows", "eyes", "glasses", "ears", "nose",
             "mouth",      "lips", "hair",  "hat",  "neck",    "cloth"};
  // background skin nose eye_g l_eye r_eye l_brow r_brow l_ear r_ear mouth
  // u_lip l_lip hair hat ear_r neck_l neck cloth
  s.mapping = {0, 1, 6, 4, 3, 3, 2, 2, 5, 5, 7, 8, 8, 9, 10, 5, 11, 11, 12};
  s.palette = base_palette();
  return s;
}

LabelSchema LabelSchema::toy(int64_t regions) {
  static const std::vector<std::string> all = {"background", "skin", "hair", "nose", "mouth"};
  if (regions < 2 || regions > static_cast<int64_t>(all.size())) {
    throw InvalidArgument("toy region count must lie in [2, 5]");
  }
  LabelSchema s;
  s.names.assign(all.begin(), all.begin() + regions);
  for (int64_t i = 0; i < regions; ++i) s.mapping.push_back(i);
  static const std::vector<Rgb> palette = {
      {0, 0, 0}, {204, 102, 51}, {0, 0, 255}, {255, 153, 204}, {255, 0, 0}};
  s.palette.assign(palette.begin(), palette.begin() + regions);
  return s;
}

LabelSchema LabelSchema::identity(const LabelSchema& merged) {
  LabelSchema s = merged;
  s.mapping.clear();
  for (int64_t i = 0; i < merged.regions(); ++i) s.mapping.push_back(i);
  return s;
}

LabelSchema schema_for(const TrainConfig& config) {
  if (config.dataset.kind == DatasetKind::celeba) return LabelSchema::celeba();
  return LabelSchema::toy(resolved_regions(config));
}

torch::Tensor merge_labels(const torch::Tensor& raw, const LabelSchema& schema) {
  if (raw.dim() != 2) throw InvalidArgument("label mask must be (H, W)");
  auto ids = raw.to(torch::kInt64).contiguous();
  auto bad = (ids < 0) | (ids >= schema.source_classes());
  if (bad.any().item<bool>()) {
    auto where = bad.nonzero()[0];
    const int64_t row = where[0].item<int64_t>();
    const int64_t col = where[1].item<int64_t>();
    throw InvalidArgument("label id " + std::to_string(ids[row][col].item<int64_t>()) +
                          " at pixel (row " + std::to_string(row) + ", col " +
                          std::to_string(col) + ") is outside the schema's " +
                          std::to_string(schema.source_classes()) + " source classes");
  }
  auto table = torch::tensor(schema.mapping, torch::kInt64);
  return table.index_select(0, ids.flatten()).reshape(ids.sizes());
}

SegmentedSample load_celeba(const std::string& root, int64_t index, int64_t resolution,
                            const LabelSchema& schema) {
  const auto image_path = (fs::path(root) / "images" / (std::to_string(index) + ".jpg")).string();
  const auto mask_path = (fs::path(root) / "masks" / (std::to_string(index) + ".png")).string();
  if (!fs::exists(image_path)) throw IoError("missing CelebA image " + image_path);
  if (!fs::exists(mask_path)) throw IoError("missing CelebA mask " + mask_path);
  auto image = load_image(image_path);
  auto labels = merge_labels(load_labels(mask_path), schema);

  namespace F = torch::nn::functional;
  auto chw = image.permute({2, 0, 1}).unsqueeze(0);
  auto resized = F::interpolate(chw, F::InterpolateFuncOptions()
                                         .size(std::vector<int64_t>{resolution, resolution})
                                         .mode(torch::kArea));
  auto lab = labels.to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
  auto lab_resized = F::interpolate(lab, F::InterpolateFuncOptions()
                                             .size(std::vector<int64_t>{resolution, resolution})
                                             .mode(torch::kNearest));
  SegmentedSample sample;
  sample.image = resized.squeeze(0).permute({1, 2, 0}).contiguous();
  sample.labels = lab_resized.squeeze(0).squeeze(0).round().to(torch::kInt64);
  return sample;
}

int64_t count_celeba(const std::string& root) {
  int64_t n = 0;
  while (fs::exists(fs::path(root) / "images" / (std::to_string(n) + ".jpg"))) ++n;
  return n;
}

Pose sample_pose(Rng& rng, const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::toy) {
    std::uniform_real_distribution<double> az(-spec.toy_azimuth_range, spec.toy_azimuth_range);
    std::uniform_real_distribution<double> el(-spec.toy_elevation_range,
                                              spec.toy_elevation_range);
    const double a = az(rng);
    return {a, el(rng)};
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  auto truncated = [&](double std) {
    for (;;) {
      const double x = normal(rng);
      if (std::abs(x) <= 2.0) return x * std;
    }
  };
  const double a = truncated(spec.celeba_azimuth_std);
  return {a, truncated(spec.celeba_elevation_std)};
}

double Ellipsoid::sdf(const std::array<double, 3>& p) const {
  const Vec3 q = {(p[0] - center[0]) / radii[0], (p[1] - center[1]) / radii[1],
                  (p[2] - center[2]) / radii[2]};
  const double rmin = std::min({radii[0], radii[1], radii[2]});
  return rmin * (std::sqrt(dot(q, q)) - 1.0);
}

ToyScene::Hit ToyScene::trace(const std::array<double, 3>& origin,
                              const std::array<double, 3>& dir) const {
  Hit best;
  for (size_t i = 0; i < ellipsoids.size(); ++i) {
    const auto& e = ellipsoids[i];
    const Vec3 o = {(origin[0] - e.center[0]) / e.radii[0], (origin[1] - e.center[1]) / e.radii[1],
                    (origin[2] - e.center[2]) / e.radii[2]};
    const Vec3 d = {dir[0] / e.radii[0], dir[1] / e.radii[1], dir[2] / e.radii[2]};
    const double a = dot(d, d);
    const double b = 2.0 * dot(o, d);
    const double c = dot(o, o) - 1.0;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / (2.0 * a);
    if (t <= 0.0) t = (-b + sq) / (2.0 * a);
    if (t <= 0.0) continue;
    if (!best.hit || t < best.t) {
      best.hit = true;
      best.t = t;
      best.region = e.region;
      best.ellipsoid = static_cast<int64_t>(i);
    }
  }
  if (best.hit) {
    const auto& e = ellipsoids[best.ellipsoid];
    for (int k = 0; k < 3; ++k) best.point[k] = origin[k] + best.t * dir[k];
    Vec3 n;
    for (int k = 0; k < 3; ++k) {
      n[k] = (best.point[k] - e.center[k]) / (e.radii[k] * e.radii[k]);
    }
    const double len = std::sqrt(dot(n, n));
    for (int k = 0; k < 3; ++k) best.normal[k] = n[k] / len;
  }
  return best;
}

SegmentedSample render_toy(const ToyScene& scene, const Camera& camera) {
  // Only the ray directions are needed; bounds are irrelevant to the trace.
  auto rays = generate_rays(camera, 0.5 * camera.radius, 1.5 * camera.radius,
                            torch::kFloat64);
  const Vec3 origin = camera.position();
  const Vec3 light = [] {
    Vec3 l = {0.3, 0.5, 1.0};
    const double n = std::sqrt(dot(l, l));
    return Vec3{l[0] / n, l[1] / n, l[2] / n};
  }();
  const int64_t count = camera.height * camera.width;
  auto dirs = rays.directions.contiguous();
  const double* d = dirs.data_ptr<double>();
  std::vector<float> image(static_cast<size_t>(count * 3), 1.0f);
  std::vector<int64_t> labels(static_cast<size_t>(count), 0);
  for (int64_t i = 0; i < count; ++i) {
    const Vec3 dir = {d[i * 3], d[i * 3 + 1], d[i * 3 + 2]};
    const auto hit = scene.trace(origin, dir);
    if (!hit.hit) continue;
    const auto& e = scene.ellipsoids[hit.ellipsoid];
    const double shade = 0.35 + 0.65 * std::max(0.0, dot(hit.normal, light));
    for (int c = 0; c < 3; ++c) {
      // Quantized to 8 bits so cached PNGs reproduce the in-memory samples.
      const double v = std::clamp(e.color[c] * shade, 0.0, 1.0);
      image[i * 3 + c] = static_cast<float>(std::floor(v * 255.0 + 0.5) / 255.0);
    }
    labels[i] = hit.region;
  }
  SegmentedSample sample;
  sample.image =
      torch::from_blob(image.data(), {camera.height, camera.width, 3}, torch::kFloat32).clone();
  sample.labels =
      torch::from_blob(labels.data(), {camera.height, camera.width}, torch::kInt64).clone();
  sample.pose = camera.pose();
  return sample;
}

ToyScene generate_toy_scene(uint64_t seed, int64_t regions, const RenderConfig& render) {
  if (regions < 2 || regions > 5) throw InvalidArgument("toy region count must lie in [2, 5]");
  // Unit-frame layout: skin head, hair cap, nose, mouth.
  struct Proto {
    Vec3 center, radii, color;
  };
  static const Proto protos[4] = {
      {{0.0, -0.05, 0.0}, {0.5, 0.62, 0.5}, {0.9, 0.7, 0.6}},
      {{0.0, 0.3, -0.08}, {0.56, 0.42, 0.52}, {0.3, 0.2, 0.1}},
      {{0.0, -0.08, 0.5}, {0.09, 0.14, 0.12}, {0.8, 0.45, 0.35}},
      {{0.0, -0.38, 0.4}, {0.2, 0.06, 0.1}, {0.7, 0.15, 0.2}},
  };
  const double scale = 1.15 * render.radius * std::tan(0.5 * render.fov);
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    ToyScene scene;
    scene.regions = regions;
    for (int64_t r = 1; r < regions; ++r) {
      const Proto& p = protos[r - 1];
      Ellipsoid e;
      e.region = r;
      for (int k = 0; k < 3; ++k) {
        e.center[k] = scale * (p.center[k] + 0.04 * jitter(rng));
        e.radii[k] = scale * p.radii[k] * (1.0 + 0.08 * jitter(rng));
        e.color[k] = std::clamp(p.color[k] + 0.08 * jitter(rng), 0.0, 1.0);
      }
      scene.ellipsoids.push_back(e);
    }
    auto frontal = render_toy(scene, make_camera(render, {0.0, 0.0}, 32));
    auto counts = torch::bincount(frontal.labels.flatten(), {}, regions);
    const double min_share = counts.min().item<double>() / static_cast<double>(32 * 32);
    if (min_share >= kToyMinClassShare) return scene;
  }
  throw InvalidArgument("could not lay out a toy scene with every region visible");
}

std::vector<SegmentedSample> make_toy_dataset(const DatasetSpec& spec,
                                              const RenderConfig& render) {
  const auto scene = generate_toy_scene(static_cast<uint64_t>(spec.toy_seed),
                                        spec.toy_regions, render);
  Rng rng(static_cast<uint64_t>(spec.toy_seed) ^ 0x9e3779b97f4a7c15ULL);
  std::vector<SegmentedSample> samples;
  samples.reserve(static_cast<size_t>(spec.toy_count));
  for (int64_t i = 0; i < spec.toy_count; ++i) {
    samples.push_back(render_toy(scene, make_camera(render, sample_pose(rng, spec))));
  }
  return samples;
}

void save_samples(const std::string& dir, const std::vector<SegmentedSample>& samples,
                  const LabelSchema& schema) {
  fs::create_directories(dir);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto stem = (fs::path(dir) / std::to_string(i)).string();
    write_file(stem + "_img.png", encode_png_rgb(to_rgb8(samples[i].image)));
    write_file(stem + "_mask.png", encode_png_indexed(samples[i].labels, schema.palette));
    if (samples[i].pose) {
      std::ofstream pose(stem + "_pose.txt");
      pose << format_double(samples[i].pose->azimuth) << "\n"
           << format_double(samples[i].pose->elevation) << "\n";
      if (!pose) throw IoError("cannot write " + stem + "_pose.txt");
    }
  }
}

std::vector<SegmentedSample> load_samples(const std::string& dir) {
  std::vector<SegmentedSample> samples;
  for (int64_t i = 0;; ++i) {
    const auto stem = (fs::path(dir) / std::to_string(i)).string();
    if (!fs::exists(stem + "_img.png")) break;
    SegmentedSample s;
    s.image = load_image(stem + "_img.png");
    s.labels = load_labels(stem + "_mask.png");
    std::ifstream pose(stem + "_pose.txt");
    if (pose) {
      std::string a, e;
      std::getline(pose, a);
      std::getline(pose, e);
      Pose p;
      if (std::from_chars(a.data(), a.data() + a.size(), p.azimuth).ec != std::errc() ||
          std::from_chars(e.data(), e.data() + e.size(), p.elevation).ec != std::errc()) {
        throw IoError("malformed pose file " + stem + "_pose.txt");
      }
      s.pose = p;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

int64_t Dataset::size() const {
  return celeba_root.empty() ? static_cast<int64_t>(samples.size()) : celeba_count;
}

SegmentedSample Dataset::get(int64_t index) const {
  if (index < 0 || index >= size()) throw InvalidArgument("dataset index out of range");
  if (celeba_root.empty()) return samples[static_cast<size_t>(index)];
  return load_celeba(celeba_root, index, resolution, schema);
}

Dataset open_dataset(const TrainConfig& config) {
  Dataset data;
  data.resolution = config.render.resolution;
  if (config.dataset.kind == DatasetKind::celeba) {
    data.schema = LabelSchema::celeba();
    data.celeba_root = config.dataset.root;
    const int64_t available = count_celeba(config.dataset.root);
    if (available == 0) {
      throw IoError("no CelebA images found under " + config.dataset.root + "/images");
    }
    data.celeba_count = config.dataset.celeba_count > 0
                            ? std::min(available, config.dataset.celeba_count)
                            : available;
    return data;
  }
  data.schema = LabelSchema::toy(config.dataset.toy_regions);
  if (!config.dataset.root.empty()) {
    const auto dir = (fs::path(config.dataset.root) / "toy" /
                      std::to_string(config.dataset.toy_seed))
                         .string();
    auto cached = fs::exists(dir) ? load_samples(dir) : std::vector<SegmentedSample>{};
    if (static_cast<int64_t>(cached.size()) == config.dataset.toy_count &&
        cached.front().labels.size(0) == config.render.resolution) {
      data.samples = std::move(cached);
      return data;
    }
    data.samples = make_toy_dataset(config.dataset, config.render);
    save_samples(dir, data.samples, data.schema);
    return data;
  }
  data.samples = make_toy_dataset(config.dataset, config.render);
  return data;
}

double mean_iou(const torch::Tensor& predicted, const torch::Tensor& target, int64_t regions) {
  if (predicted.sizes() != target.sizes()) throw InvalidArgument("mask shapes differ");
  double sum = 0.0;
  int64_t classes = 0;
  for (int64_t k = 0; k < regions; ++k) {
    auto p = predicted == k;
    auto t = target == k;
    const double uni = (p | t).sum().item<double>();
    if (uni == 0.0) continue;
    sum += (p & t).sum().item<double>() / uni;
    ++classes;
  }
  return classes == 0 ? 1.0 : sum / static_cast<double>(classes);
}

}  // namespace lcnerf
