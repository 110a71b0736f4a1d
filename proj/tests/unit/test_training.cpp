// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "lcnerf/errors.h"
#include "lcnerf/training.h"
#include "test_util.h"

namespace lcnerf {
namespace {

namespace fs = std::filesystem;
using testing::bit_equal;
using testing::tiny_train_config;

bool states_equal(const TrainState& a, const TrainState& b) {
  auto ta = named_state_tensors(a);
  auto tb = named_state_tensors(b);
  if (ta.size() != tb.size() || a.step != b.step) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].first != tb[i].first || !bit_equal(ta[i].second, tb[i].second)) return false;
  }
  return true;
}

void run_steps(TrainState& s, const Dataset& data, int64_t until) {
  while (s.step < until) train_step(s, draw_real_batch(data, s.config, s.step));
}

TEST(Training, StepSeedIsStableAndDistinct) {
  EXPECT_EQ(step_seed(0, 5), step_seed(0, 5));
  std::set<uint64_t> seen;
  for (int64_t seed = 0; seed < 4; ++seed) {
    for (int64_t step = -2; step < 50; ++step) seen.insert(step_seed(seed, step));
  }
  EXPECT_EQ(seen.size(), 4u * 52u);
}

TEST(Training, SphereWarmupFitsSphere) {
  auto c = tiny_train_config();
  c.sphere_init_steps = 0;
  auto first = make_train_state(c);
  auto fitted = make_train_state(c);
  c.sphere_init_steps = 1;
  const double initial = sphere_init(first.model, c);
  c.sphere_init_steps = 60;
  const double loss = sphere_init(fitted.model, c);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_LT(loss, 0.5 * initial);
}

TEST(Training, DisabledUpdatesLeaveParametersUntouched) {
  auto c = tiny_train_config();
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  auto before = named_state_tensors(s);
  StepOptions none{false, false, false};
  train_step(s, draw_real_batch(data, c, 0), none);
  EXPECT_EQ(s.step, 1);
  auto after = named_state_tensors(s);
  for (size_t i = 0; i < before.size(); ++i) {
    EXPECT_TRUE(bit_equal(before[i].second, after[i].second)) << before[i].first;
  }
}

TEST(Training, GeneratorUpdateLeavesDiscriminatorsUntouched) {
  auto c = tiny_train_config();
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  std::vector<torch::Tensor> disc;
  for (auto& p : s.image_disc->parameters()) disc.push_back(p.clone());
  for (auto& p : s.image_mask_disc->parameters()) disc.push_back(p.clone());
  auto g_before = s.model->fusion->sdf_weight.clone();
  train_step(s, draw_real_batch(data, c, 0), StepOptions{false, false, true});
  size_t i = 0;
  for (auto& p : s.image_disc->parameters()) EXPECT_TRUE(bit_equal(p, disc[i++]));
  for (auto& p : s.image_mask_disc->parameters()) EXPECT_TRUE(bit_equal(p, disc[i++]));
  EXPECT_FALSE(bit_equal(g_before, s.model->fusion->sdf_weight));
}

TEST(Training, GeneratorOnlyStepsReduceAdversarialLoss) {
  auto c = tiny_train_config();
  c.lr_generator = 1e-3;
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    auto m = train_step(s, draw_real_batch(data, c, s.step), StepOptions{false, false, true});
    const double v = m.terms.at("generator.gan_image") + m.terms.at("generator.gan_image_mask");
    if (i < 5) first += v;
    if (i >= 45) last += v;
  }
  EXPECT_LT(last, first);
}

TEST(Training, StepsAreDeterministic) {
  auto c = tiny_train_config();
  auto a = make_train_state(c);
  auto b = make_train_state(c);
  auto data = open_dataset(c);
  run_steps(a, data, 3);
  run_steps(b, data, 3);
  EXPECT_TRUE(states_equal(a, b));
}

TEST(Training, ResumeContinuesBitExactly) {
  auto c = tiny_train_config();
  auto data = open_dataset(c);
  auto straight = make_train_state(c);
  run_steps(straight, data, 4);
  auto half = make_train_state(c);
  run_steps(half, data, 2);
  auto resumed = deserialize_checkpoint(serialize_checkpoint(half));
  run_steps(resumed, data, 4);
  EXPECT_TRUE(states_equal(straight, resumed));
}

TEST(Training, MetricsRecordEveryTerm) {
  auto c = tiny_train_config();
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  auto m = train_step(s, draw_real_batch(data, c, 0));
  for (const char* name :
       {"d_image.gan_fake", "d_image.gan_real", "d_image.r1", "d_image.pose", "d_image.total",
        "d_image_mask.gan_fake", "d_image_mask.r1", "generator.gan_image",
        "generator.gan_image_mask", "generator.pose", "generator.eikonal",
        "generator.minimal_surface", "generator.total"}) {
    ASSERT_TRUE(m.terms.count(name)) << name;
    EXPECT_TRUE(std::isfinite(m.terms.at(name))) << name;
  }
  auto j = nlohmann::ordered_json::parse(m.to_json());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"step", "terms", "beta", "lr", "grad_norm"}));
  EXPECT_GT(j["grad_norm"]["generator"].get<double>(), 0.0);
}

TEST(Training, RejectsMisshapenBatchBeforeUpdating) {
  auto c = tiny_train_config();
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  auto batch = draw_real_batch(data, c, 0);
  auto before = named_state_tensors(s);
  RealBatch bad = batch;
  bad.masks = batch.masks.narrow(1, 0, 2);
  EXPECT_THROW(train_step(s, bad), InvalidArgument);
  bad = batch;
  bad.images = batch.images.narrow(2, 0, 8);
  EXPECT_THROW(train_step(s, bad), InvalidArgument);
  EXPECT_EQ(s.step, 0);
  auto after = named_state_tensors(s);
  for (size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(bit_equal(before[i].second, after[i].second));
}

TEST(Training, NonFiniteLossNamesTerm) {
  auto c = tiny_train_config();
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  {
    torch::NoGradGuard guard;
    s.model->fusion->color_bias.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  try {
    train_step(s, draw_real_batch(data, c, 0));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_FALSE(e.term().empty());
    EXPECT_NE(std::string(e.what()).find(e.term()), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto c = tiny_train_config();
  auto s = make_train_state(c);
  auto data = open_dataset(c);
  run_steps(s, data, 2);
  auto bytes = serialize_checkpoint(s);
  auto back = deserialize_checkpoint(bytes);
  EXPECT_TRUE(states_equal(s, back));
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(to_config_text(back.config), to_config_text(s.config));
}

TEST(Checkpoint, FreshStateRoundTrips) {
  auto s = make_train_state(tiny_train_config());
  auto bytes = serialize_checkpoint(s);
  EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(bytes)), bytes);
}

TEST(Checkpoint, EntriesArePerRegion) {
  auto s = make_train_state(tiny_train_config());
  std::set<std::string> names;
  for (const auto& [name, t] : named_state_tensors(s)) names.insert(name);
  for (int64_t i = 0; i < s.regions; ++i) {
    const auto r = std::to_string(i);
    EXPECT_TRUE(names.count("geo." + r + ".layer0.weight"));
    EXPECT_TRUE(names.count("geo." + r + ".confidence_head.weight"));
    EXPECT_TRUE(names.count("tex." + r + ".head.weight"));
    EXPECT_TRUE(names.count("opt.g.geo." + r + ".layer0.weight.exp_avg"));
  }
  EXPECT_TRUE(names.count("map.g.layer0.weight"));
  EXPECT_TRUE(names.count("fuse.rho"));
  EXPECT_FALSE(names.count("geo.3.layer0.weight"));
}

TEST(Checkpoint, TruncationIsFormatError) {
  auto bytes = serialize_checkpoint(make_train_state(tiny_train_config()));
  for (size_t cut : {size_t{0}, size_t{3}, size_t{6}, size_t{40}, bytes.size() / 2,
                     bytes.size() - 1}) {
    std::vector<uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(deserialize_checkpoint(part), FormatError) << cut;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(longer), FormatError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  auto bytes = serialize_checkpoint(make_train_state(tiny_train_config()));
  bytes[4] = 9;
  try {
    deserialize_checkpoint(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("version 9"), std::string::npos) << msg;
    EXPECT_NE(msg.find("version " + std::to_string(kCheckpointVersion)), std::string::npos);
  }
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, LoadErrorsCarryPath) {
  auto dir = testing::temp_dir("ckpt");
  auto path = (dir / "bad.lcnf").string();
  write_file(path, std::vector<uint8_t>{'L', 'C', 'N', 'F', 1});
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint((dir / "missing.lcnf").string()), IoError);
  fs::remove_all(dir);
}

TEST(TrainLoop, WritesMetricsAndCheckpointsAndResumes) {
  auto dir = testing::temp_dir("train");
  auto c = tiny_train_config();
  TrainOptions opts;
  opts.out_dir = dir.string();
  opts.stop_step = 2;
  int64_t calls = 0;
  opts.on_step = [&](const StepMetrics&) { ++calls; };
  auto partial = train(c, opts);
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(fs::exists(dir / "ckpt_2.lcnf"));
  opts.resume = (dir / "ckpt_2.lcnf").string();
  opts.stop_step = -1;
  auto full = train(c, opts);
  EXPECT_EQ(full.step, c.steps);
  EXPECT_TRUE(fs::exists(dir / "ckpt_4.lcnf"));
  EXPECT_TRUE(fs::exists(dir / "final.lcnf"));
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int64_t lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["step"].get<int64_t>(), lines);
    ++lines;
  }
  EXPECT_EQ(lines, c.steps);
  fs::remove_all(dir);
}

TEST(TrainLoop, RequiresOutputDirectory) {
  EXPECT_THROW(train(tiny_train_config(), TrainOptions()), InvalidArgument);
}

TEST(Evaluation, HeldOutPosesStayInPrior) {
  auto c = tiny_train_config();
  auto poses = held_out_poses(c, 20);
  ASSERT_EQ(poses.size(), 20u);
  for (const auto& p : poses) {
    EXPECT_LE(std::abs(p.azimuth), c.dataset.toy_azimuth_range);
    EXPECT_LE(std::abs(p.elevation), c.dataset.toy_elevation_range);
  }
  auto s = make_train_state(c);
  const double iou = toy_mask_iou(s.model, c, poses, 1);
  EXPECT_GE(iou, 0.0);
  EXPECT_LE(iou, 1.0);
}

}  // namespace
}  // namespace lcnerf
