// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lcnerf {

using Bytes = std::vector<uint8_t>;
using Rgb = std::array<uint8_t, 3>;

/// Decoded raster. For palette PNGs `pixels` holds raw indices (channels = 1)
/// and `palette` the color table.
struct Raster {
  int64_t width = 0;
  int64_t height = 0;
  int64_t channels = 0;
  int bit_depth = 8;
  std::vector<uint16_t> pixels;  // row-major, interleaved channels
  std::vector<Rgb> palette;
  bool indexed = false;
};

Bytes encode_png_rgb(const torch::Tensor& rgb8);  // (H, W, 3) uint8
/// 8-bit palette PNG whose pixel values are the label ids.
Bytes encode_png_indexed(const torch::Tensor& labels, std::span<const Rgb> palette);
Bytes encode_png_gray16(const torch::Tensor& gray16);  // (H, W) int32 in [0, 65535]

Raster decode_png(std::span<const uint8_t> bytes);
Raster decode_jpeg(std::span<const uint8_t> bytes);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

/// Float image in [0, 1], (H, W, 3) -> (H, W, 3) uint8 with round-to-nearest.
torch::Tensor to_rgb8(const torch::Tensor& image);
/// 8-bit RGB raster -> (H, W, 3) float32 in [0, 1]. Gray/RGBA are converted.
torch::Tensor raster_to_image(const Raster& raster);
/// Label raster (indexed or single channel) -> (H, W) int64.
torch::Tensor raster_to_labels(const Raster& raster);

/// Reads an RGB image (PNG or JPEG by signature).
torch::Tensor load_image(const std::string& path);
/// Reads a label mask PNG; indices are taken verbatim.
torch::Tensor load_labels(const std::string& path);

}  // namespace lcnerf
