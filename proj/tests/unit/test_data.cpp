// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "lcnerf/data.h"
#include "lcnerf/errors.h"
#include "lcnerf/image_io.h"
#include "test_util.h"

namespace lcnerf {
namespace {

namespace fs = std::filesystem;

RenderConfig toy_render() {
  RenderConfig r;
  r.radius = 8.0;
  r.resolution = 32;
  return r;
}

TEST(Schema, CelebaMergeTableByName) {
  auto s = LabelSchema::celeba();
  ASSERT_NO_THROW(s.validate());
  EXPECT_EQ(s.regions(), 13);
  EXPECT_EQ(s.source_classes(), 19);
  const std::map<std::string, std::string> expected = {
      {"background", "background"}, {"skin", "skin"}, {"nose", "nose"},
      {"eye_g", "glasses"},         {"l_eye", "eyes"}, {"r_eye", "eyes"},
      {"l_brow", "brows"},          {"r_brow", "brows"}, {"l_ear", "ears"},
      {"r_ear", "ears"},            {"mouth", "mouth"}, {"u_lip", "lips"},
      {"l_lip", "lips"},            {"hair", "hair"}, {"hat", "hat"},
      {"ear_r", "ears"},            {"neck_l", "neck"}, {"neck", "neck"},
      {"cloth", "cloth"}};
  const auto& src = celeba_source_names();
  ASSERT_EQ(src.size(), 19u);
  for (size_t i = 0; i < src.size(); ++i) {
    EXPECT_EQ(s.names[s.mapping[i]], expected.at(src[i])) << src[i];
  }
}

TEST(Schema, MergeHistogramMatchesOracle) {
  auto s = LabelSchema::celeba();
  auto raw = torch::randint(0, 19, {40, 30}, testing::make_generator(1));
  auto merged = merge_labels(raw, s);
  auto src_hist = torch::bincount(raw.flatten(), {}, 19);
  std::vector<int64_t> expect(13, 0);
  for (int64_t i = 0; i < 19; ++i) expect[s.mapping[i]] += src_hist[i].item<int64_t>();
  auto hist = torch::bincount(merged.flatten(), {}, 13);
  for (int64_t k = 0; k < 13; ++k) EXPECT_EQ(hist[k].item<int64_t>(), expect[k]);
}

TEST(Schema, MergeIsIdempotentOnMergedIds) {
  auto s = LabelSchema::celeba();
  auto merged = merge_labels(torch::randint(0, 19, {10, 10}, testing::make_generator(2)), s);
  EXPECT_TRUE(torch::equal(merge_labels(merged, LabelSchema::identity(s)), merged));
}

TEST(Schema, MergeNamesOffendingPixel) {
  auto raw = torch::zeros({4, 5}, torch::kInt64);
  raw[2][3] = 19;
  try {
    merge_labels(raw, LabelSchema::celeba());
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("row 2, col 3"), std::string::npos) << e.what();
  }
}

TEST(Schema, ToySchemaAndLookup) {
  auto s = LabelSchema::toy(3);
  EXPECT_EQ(s.names, (std::vector<std::string>{"background", "skin", "hair"}));
  EXPECT_EQ(s.find("hair"), 2);
  EXPECT_EQ(s.find("hat"), -1);
  EXPECT_THROW(LabelSchema::toy(6), InvalidArgument);
  EXPECT_THROW(LabelSchema::toy(1), InvalidArgument);
}

TEST(Pose, ToyPriorIsUniformInRange) {
  DatasetSpec spec;
  Rng rng(3);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto p = sample_pose(rng, spec);
    ASSERT_LE(std::abs(p.azimuth), spec.toy_azimuth_range);
    ASSERT_LE(std::abs(p.elevation), spec.toy_elevation_range);
    sum += p.azimuth;
    sq += p.azimuth * p.azimuth;
  }
  // Uniform on [-a, a]: mean 0, variance a^2 / 3.
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 0.25 / 3.0, 0.003);
}

TEST(Pose, CelebaPriorIsTruncatedAtTwoSigma) {
  DatasetSpec spec;
  spec.kind = DatasetKind::celeba;
  Rng rng(4);
  double sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto p = sample_pose(rng, spec);
    ASSERT_LE(std::abs(p.azimuth), 2.0 * spec.celeba_azimuth_std + 1e-12);
    ASSERT_LE(std::abs(p.elevation), 2.0 * spec.celeba_elevation_std + 1e-12);
    sq += p.azimuth * p.azimuth;
  }
  // Variance of a standard normal truncated at +-2 is about 0.7737.
  EXPECT_NEAR(sq / n, 0.7737 * 0.09, 0.003);
}

TEST(ToyScene, EllipsoidSdfSignAndSurface) {
  Ellipsoid e;
  e.center = {1, 2, 3};
  e.radii = {0.5, 1.0, 2.0};
  EXPECT_LT(e.sdf({1, 2, 3}), 0.0);
  EXPECT_NEAR(e.sdf({1.5, 2, 3}), 0.0, 1e-15);
  EXPECT_NEAR(e.sdf({1, 2, 5}), 0.0, 1e-15);
  EXPECT_GT(e.sdf({3, 2, 3}), 0.0);
}

// Independent reference: march each ray in small steps and take the region of
// the first ellipsoid whose SDF goes negative.
TEST(ToyScene, TraceMatchesSdfMarch) {
  auto render = toy_render();
  auto scene = generate_toy_scene(7, 5, render);
  Camera cam = make_camera(render, {0.3, -0.1}, 24);
  auto sample = render_toy(scene, cam);
  auto rays = generate_rays(cam, 1.0, 2.0, torch::kFloat64);
  auto origin = cam.position();
  int64_t mismatched = 0;
  const int64_t n = cam.height * cam.width;
  for (int64_t i = 0; i < n; ++i) {
    std::array<double, 3> d = {rays.directions[i][0].item<double>(),
                               rays.directions[i][1].item<double>(),
                               rays.directions[i][2].item<double>()};
    int64_t label = 0;
    for (double t = 0.5 * cam.radius; t < 1.5 * cam.radius; t += 2e-4 * cam.radius) {
      std::array<double, 3> p = {origin[0] + t * d[0], origin[1] + t * d[1],
                                 origin[2] + t * d[2]};
      double best = 1e9;
      int64_t region = 0;
      for (const auto& e : scene.ellipsoids) {
        const double s = e.sdf(p);
        if (s < best) {
          best = s;
          region = e.region;
        }
      }
      if (best < 0.0) {
        label = region;
        break;
      }
    }
    if (label != sample.labels.flatten()[i].item<int64_t>()) ++mismatched;
  }
  // Grazing rays at silhouettes may disagree with a finite step.
  EXPECT_LE(mismatched, n / 100);
}

TEST(ToyScene, EveryRegionVisibleFrontally) {
  auto render = toy_render();
  for (int64_t k = 2; k <= 5; ++k) {
    for (uint64_t seed : {1u, 7u, 123u}) {
      auto scene = generate_toy_scene(seed, k, render);
      auto s = render_toy(scene, make_camera(render, {0, 0}, 32));
      auto counts = torch::bincount(s.labels.flatten(), {}, k);
      EXPECT_GE(counts.min().item<double>() / 1024.0, kToyMinClassShare)
          << "k=" << k << " seed=" << seed;
    }
  }
}

TEST(ToyScene, BackgroundIsWhiteAndColorsQuantized) {
  auto render = toy_render();
  auto scene = generate_toy_scene(7, 3, render);
  auto s = render_toy(scene, make_camera(render, {0.2, 0.1}, 32));
  auto bg = s.labels == 0;
  ASSERT_GT(bg.sum().item<int64_t>(), 0);
  EXPECT_TRUE(torch::equal(s.image.index({bg}), torch::ones({bg.sum().item<int64_t>(), 3})));
  auto scaled = s.image * 255.0;
  EXPECT_LT((scaled - scaled.round()).abs().max().item<double>(), 1e-3);
}

TEST(ToyScene, DeterministicFromSeed) {
  DatasetSpec spec;
  spec.toy_count = 3;
  auto a = make_toy_dataset(spec, toy_render());
  auto b = make_toy_dataset(spec, toy_render());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(torch::equal(a[i].image, b[i].image));
    EXPECT_TRUE(torch::equal(a[i].labels, b[i].labels));
    EXPECT_EQ(a[i].pose->azimuth, b[i].pose->azimuth);
  }
}

TEST(Dataset, CacheRoundTripIsExact) {
  auto root = testing::temp_dir("cache");
  TrainConfig config;
  config.render = toy_render();
  config.dataset.toy_count = 4;
  config.dataset.root = root.string();
  auto first = open_dataset(config);
  ASSERT_TRUE(fs::exists(root / "toy" / "7" / "3_mask.png"));
  auto second = open_dataset(config);
  ASSERT_EQ(second.size(), 4);
  for (int64_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(torch::equal(first.get(i).image, second.get(i).image));
    EXPECT_TRUE(torch::equal(first.get(i).labels, second.get(i).labels));
    EXPECT_EQ(first.get(i).pose->azimuth, second.get(i).pose->azimuth);
    EXPECT_EQ(first.get(i).pose->elevation, second.get(i).pose->elevation);
  }
  EXPECT_THROW(first.get(4), InvalidArgument);
  fs::remove_all(root);
}

TEST(Dataset, CelebaLayoutLoadsAndMerges) {
  auto root = testing::temp_dir("celeba");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  auto img = torch::full({8, 8, 3}, 128, torch::kUInt8);
  auto raw = torch::zeros({8, 8}, torch::kInt64);
  raw.narrow(0, 0, 4).fill_(13);  // hair
  raw.narrow(0, 4, 4).fill_(7);   // r_brow
  std::vector<Rgb> gray(19);
  write_file((root / "images" / "0.jpg").string(), encode_png_rgb(img));
  write_file((root / "masks" / "0.png").string(), encode_png_indexed(raw, gray));
  EXPECT_EQ(count_celeba(root.string()), 1);
  auto schema = LabelSchema::celeba();
  auto s = load_celeba(root.string(), 0, 4, schema);
  EXPECT_EQ(s.image.sizes(), (std::vector<int64_t>{4, 4, 3}));
  EXPECT_EQ(s.labels[0][0].item<int64_t>(), schema.find("hair"));
  EXPECT_EQ(s.labels[3][3].item<int64_t>(), schema.find("brows"));
  EXPECT_NEAR(s.image.mean().item<double>(), 128.0 / 255.0, 1e-6);
  EXPECT_THROW(load_celeba(root.string(), 1, 4, schema), IoError);
  TrainConfig config;
  config.dataset.kind = DatasetKind::celeba;
  config.dataset.root = (root / "missing").string();
  EXPECT_THROW(open_dataset(config), IoError);
  fs::remove_all(root);
}

TEST(Metrics, MeanIouOracle) {
  auto a = torch::tensor({0, 0, 1, 1}).reshape({2, 2});
  auto b = torch::tensor({0, 1, 1, 1}).reshape({2, 2});
  // class 0: 1/2, class 1: 2/3, class 2 absent from both.
  EXPECT_NEAR(mean_iou(a, b, 3), (0.5 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(mean_iou(a, a, 3), 1.0);
  EXPECT_THROW(mean_iou(a, torch::zeros({3, 3}), 3), InvalidArgument);
}

}  // namespace
}  // namespace lcnerf
