// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/image_io.h"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>

#include "lcnerf/errors.h"

namespace lcnerf {

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  Bytes out;

  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png_create_write_struct failed");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw FormatError("png_create_info_struct failed");
    }
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }

  static void write(png_structp p, png_bytep data, png_size_t len) {
    auto* self = static_cast<PngWriter*>(png_get_io_ptr(p));
    self->out.insert(self->out.end(), data, data + len);
  }
  static void flush(png_structp) {}
};

// Runs libpng calls; errors longjmp back here and become FormatError.
template <class F>
Bytes encode(int width, int height, int bit_depth, int color_type, F&& setup,
             const std::vector<png_bytep>& rows) {
  PngWriter w;
  if (setjmp(png_jmpbuf(w.png))) throw FormatError("PNG encode failed");
  png_set_write_fn(w.png, &w, &PngWriter::write, &PngWriter::flush);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  setup(w.png, w.info);
  png_write_info(w.png, w.info);
  if (bit_depth == 16) png_set_swap(w.png);
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
  return std::move(w.out);
}

struct PngReadSource {
  std::span<const uint8_t> bytes;
  size_t offset = 0;
  static void read(png_structp p, png_bytep data, png_size_t len) {
    auto* self = static_cast<PngReadSource*>(png_get_io_ptr(p));
    if (self->offset + len > self->bytes.size()) png_error(p, "truncated PNG");
    std::memcpy(data, self->bytes.data() + self->offset, len);
    self->offset += len;
  }
};

}  // namespace

Bytes encode_png_rgb(const torch::Tensor& rgb8) {
  if (rgb8.dim() != 3 || rgb8.size(2) != 3 || rgb8.scalar_type() != torch::kUInt8) {
    throw InvalidArgument("encode_png_rgb expects (H, W, 3) uint8");
  }
  auto data = rgb8.contiguous();
  const int h = static_cast<int>(data.size(0));
  const int w = static_cast<int>(data.size(1));
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = data.data_ptr<uint8_t>() + y * w * 3;
  return encode(w, h, 8, PNG_COLOR_TYPE_RGB, [](png_structp, png_infop) {}, rows);
}

Bytes encode_png_indexed(const torch::Tensor& labels, std::span<const Rgb> palette) {
  if (labels.dim() != 2) throw InvalidArgument("encode_png_indexed expects (H, W) labels");
  if (palette.empty() || palette.size() > 256) {
    throw InvalidArgument("palette must have 1..256 entries");
  }
  auto idx = labels.to(torch::kInt64);
  if (idx.numel() > 0 && (idx.min().item<int64_t>() < 0 ||
                          idx.max().item<int64_t>() >= static_cast<int64_t>(palette.size()))) {
    throw InvalidArgument("label id outside palette range");
  }
  auto data = idx.to(torch::kUInt8).contiguous();
  const int h = static_cast<int>(data.size(0));
  const int w = static_cast<int>(data.size(1));
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = data.data_ptr<uint8_t>() + y * w;
  std::vector<png_color> colors(palette.size());
  for (size_t i = 0; i < palette.size(); ++i) {
    colors[i] = {palette[i][0], palette[i][1], palette[i][2]};
  }
  return encode(
      w, h, 8, PNG_COLOR_TYPE_PALETTE,
      [&colors](png_structp p, png_infop info) {
        png_set_PLTE(p, info, colors.data(), static_cast<int>(colors.size()));
      },
      rows);
}

Bytes encode_png_gray16(const torch::Tensor& gray16) {
  if (gray16.dim() != 2) throw InvalidArgument("encode_png_gray16 expects (H, W)");
  auto data = gray16.clamp(0, 65535).to(torch::kInt32).contiguous();
  const int h = static_cast<int>(data.size(0));
  const int w = static_cast<int>(data.size(1));
  std::vector<uint16_t> buffer(data.numel());
  const int32_t* src = data.data_ptr<int32_t>();
  for (size_t i = 0; i < buffer.size(); ++i) buffer[i] = static_cast<uint16_t>(src[i]);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(buffer.data() + static_cast<size_t>(y) * w);
  }
  return encode(w, h, 16, PNG_COLOR_TYPE_GRAY, [](png_structp, png_infop) {}, rows);
}

Raster decode_png(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png_create_read_struct failed");
  }
  PngReadSource source{bytes, 0};
  Raster raster;
  std::vector<uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed");
  }
  png_set_read_fn(png, &source, &PngReadSource::read);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  raster.width = png_get_image_width(png, info);
  raster.height = png_get_image_height(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    raster.indexed = true;
    png_colorp colors = nullptr;
    int count = 0;
    if (png_get_PLTE(png, info, &colors, &count)) {
      for (int i = 0; i < count; ++i) {
        raster.palette.push_back({colors[i].red, colors[i].green, colors[i].blue});
      }
    }
    if (bit_depth < 8) png_set_packing(png);
    bit_depth = 8;
  } else if (bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    bit_depth = 8;
  }
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  raster.channels = png_get_channels(png, info);
  raster.bit_depth = bit_depth;
  const size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<size_t>(raster.height));
  std::vector<png_bytep> rows(raster.height);
  for (int64_t y = 0; y < raster.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const size_t count = static_cast<size_t>(raster.width * raster.height * raster.channels);
  raster.pixels.resize(count);
  if (bit_depth == 16) {
    const auto* src = reinterpret_cast<const uint16_t*>(buffer.data());
    for (size_t i = 0; i < count; ++i) raster.pixels[i] = src[i];
  } else {
    for (size_t i = 0; i < count; ++i) raster.pixels[i] = buffer[i];
  }
  return raster;
}

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace

Raster decode_jpeg(std::span<const uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  Raster raster;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("JPEG decode failed");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  raster.width = cinfo.output_width;
  raster.height = cinfo.output_height;
  raster.channels = cinfo.output_components;
  const size_t stride = static_cast<size_t>(raster.width * raster.channels);
  std::vector<uint8_t> row(stride);
  raster.pixels.reserve(stride * raster.height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW ptr = row.data();
    jpeg_read_scanlines(&cinfo, &ptr, 1);
    raster.pixels.insert(raster.pixels.end(), row.begin(), row.end());
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return raster;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

torch::Tensor to_rgb8(const torch::Tensor& image) {
  return (image.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0 + 0.5)
      .floor()
      .to(torch::kUInt8)
      .contiguous();
}

torch::Tensor raster_to_image(const Raster& raster) {
  if (raster.bit_depth != 8) throw FormatError("expected an 8-bit image");
  std::vector<float> rgb(static_cast<size_t>(raster.width * raster.height * 3));
  for (int64_t i = 0; i < raster.width * raster.height; ++i) {
    for (int c = 0; c < 3; ++c) {
      uint16_t v = 0;
      if (raster.indexed) {
        const auto idx = raster.pixels[i];
        v = idx < raster.palette.size() ? raster.palette[idx][c] : 0;
      } else if (raster.channels >= 3) {
        v = raster.pixels[i * raster.channels + c];
      } else {
        v = raster.pixels[i * raster.channels];
      }
      rgb[i * 3 + c] = static_cast<float>(v) / 255.0f;
    }
  }
  return torch::from_blob(rgb.data(), {raster.height, raster.width, 3}, torch::kFloat32)
      .clone();
}

torch::Tensor raster_to_labels(const Raster& raster) {
  std::vector<int64_t> labels(static_cast<size_t>(raster.width * raster.height));
  for (size_t i = 0; i < labels.size(); ++i) {
    labels[i] = raster.pixels[i * raster.channels];
  }
  return torch::from_blob(labels.data(), {raster.height, raster.width}, torch::kInt64)
      .clone();
}

torch::Tensor load_image(const std::string& path) {
  auto bytes = read_file(path);
  try {
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
      return raster_to_image(decode_png(bytes));
    }
    return raster_to_image(decode_jpeg(bytes));
  } catch (const FormatError& e) {
    throw IoError(std::string(e.what()) + ": " + path);
  }
}

torch::Tensor load_labels(const std::string& path) {
  auto bytes = read_file(path);
  try {
    return raster_to_labels(decode_png(bytes));
  } catch (const FormatError& e) {
    throw IoError(std::string(e.what()) + ": " + path);
  }
}

}  // namespace lcnerf
