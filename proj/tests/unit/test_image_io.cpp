// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "lcnerf/data.h"
#include "lcnerf/errors.h"
#include "lcnerf/image_io.h"
#include "test_util.h"

namespace lcnerf {
namespace {

TEST(Png, RgbRoundTripIsExact) {
  auto img = torch::randint(0, 256, {7, 5, 3}, testing::make_generator(1)).to(torch::kUInt8);
  auto raster = decode_png(encode_png_rgb(img));
  EXPECT_EQ(raster.width, 5);
  EXPECT_EQ(raster.height, 7);
  EXPECT_FALSE(raster.indexed);
  auto back = to_rgb8(raster_to_image(raster));
  EXPECT_TRUE(torch::equal(back, img));
}

TEST(Png, IndexedKeepsIdsAndPalette) {
  auto schema = LabelSchema::celeba();
  auto labels = torch::randint(0, 13, {6, 9}, testing::make_generator(2));
  auto bytes = encode_png_indexed(labels, schema.palette);
  auto raster = decode_png(bytes);
  EXPECT_TRUE(raster.indexed);
  ASSERT_GE(raster.palette.size(), schema.palette.size());
  for (size_t i = 0; i < schema.palette.size(); ++i) EXPECT_EQ(raster.palette[i], schema.palette[i]);
  EXPECT_TRUE(torch::equal(raster_to_labels(raster), labels));
  // Re-encoding the decoded ids gives the same bytes.
  EXPECT_EQ(encode_png_indexed(raster_to_labels(raster), schema.palette), bytes);
}

TEST(Png, IndexedRejectsIdsOutsidePalette) {
  std::vector<Rgb> palette(3);
  EXPECT_THROW(encode_png_indexed(torch::full({2, 2}, 3, torch::kInt64), palette),
               InvalidArgument);
  EXPECT_THROW(encode_png_indexed(torch::zeros({2, 2}, torch::kInt64), {}), InvalidArgument);
}

TEST(Png, Gray16RoundTrip) {
  auto g = torch::tensor({0, 1, 65535, 1234}, torch::kInt32).reshape({2, 2});
  auto raster = decode_png(encode_png_gray16(g));
  EXPECT_EQ(raster.bit_depth, 16);
  EXPECT_TRUE(torch::equal(raster_to_labels(raster), g.to(torch::kInt64)));
}

TEST(Png, GarbageIsFormatError) {
  std::vector<uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_THROW(decode_png(junk), FormatError);
  EXPECT_THROW(decode_jpeg(junk), FormatError);
  auto truncated = encode_png_rgb(torch::zeros({4, 4, 3}, torch::kUInt8));
  truncated.resize(truncated.size() / 2);
  EXPECT_THROW(decode_png(truncated), FormatError);
}

TEST(Files, ErrorsCarryPath) {
  try {
    read_file("/nonexistent/x.png");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/x.png"), std::string::npos);
  }
  auto dir = testing::temp_dir("io");
  auto path = (dir / "junk.png").string();
  write_file(path, std::vector<uint8_t>{1, 2, 3});
  try {
    load_image(path);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST(Convert, RoundsToNearest) {
  auto img = torch::tensor({0.0, 0.5 / 255.0, 1.0, 1.5, -0.2, 254.49 / 255.0})
                 .reshape({1, 2, 3});
  auto q = to_rgb8(img);
  EXPECT_EQ(q[0][0][0].item<int>(), 0);
  EXPECT_EQ(q[0][0][1].item<int>(), 1);
  EXPECT_EQ(q[0][0][2].item<int>(), 255);
  EXPECT_EQ(q[0][1][0].item<int>(), 255);
  EXPECT_EQ(q[0][1][1].item<int>(), 0);
  EXPECT_EQ(q[0][1][2].item<int>(), 254);
}

}  // namespace
}  // namespace lcnerf
