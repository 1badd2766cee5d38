#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "pds/data_io.hpp"

namespace pds {

namespace {

struct PngRaw {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 0;   // as stored in the file
  int color_type = 0;  // as stored in the file
  std::size_t channels = 0;  // after expansion
  std::size_t bytes_per_sample = 1;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

// Decodes any PNG to 8- or 16-bit gray/RGB/(alpha) samples in host byte order.
void read_png_raw(const std::string& path, PngRaw& out) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    out.color_type = png_get_color_type(png, info);
    if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (out.color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (out.bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);
    out.channels = png_get_channels(png, info);
    out.bytes_per_sample = png_get_bit_depth(png, info) == 16 ? 2 : 1;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    out.pixels.resize(rowbytes * out.height);
    out.rows.resize(out.height);
    for (std::size_t y = 0; y < out.height; ++y) out.rows[y] = out.pixels.data() + y * rowbytes;
    png_read_image(png, out.rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (failed) throw FormatError(path + ": corrupt or truncated PNG");
}

void write_png_raw(const std::string& path, std::size_t width, std::size_t height,
                   int color_type, const std::vector<std::uint16_t>& samples,
                   std::size_t channels) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write " + path);
  std::vector<unsigned char> bytes(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(samples[i] >> 8);  // PNG is big-endian
    bytes[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
  }
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = bytes.data() + y * width * channels * 2;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 16, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw std::runtime_error("failed writing PNG " + path);
}

std::uint16_t sample_at(const PngRaw& raw, std::size_t index) {
  if (raw.bytes_per_sample == 2) {
    std::uint16_t v;
    std::memcpy(&v, raw.pixels.data() + 2 * index, 2);
    return v;
  }
  return raw.pixels[index];
}

}  // namespace

KittiDisparity read_kitti_disparity(const std::string& path) {
  PngRaw raw;
  read_png_raw(path, raw);
  if (raw.bit_depth != 16) {
    throw FormatError(path + ": disparity PNG must be 16-bit, got " +
                      std::to_string(raw.bit_depth) + "-bit");
  }
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || raw.channels != 1) {
    throw FormatError(path + ": disparity PNG must have a single gray channel");
  }
  KittiDisparity out{DisparityMap(raw.height, raw.width, 0.0f),
                     ValidityMask(raw.height, raw.width, std::uint8_t{0})};
  for (std::size_t i = 0; i < out.gt.size(); ++i) {
    const std::uint16_t stored = sample_at(raw, i);
    if (stored != 0) {
      out.gt.values[i] = static_cast<float>(stored) / 256.0f;
      out.mask.values[i] = 1;
    }
  }
  return out;
}

void write_kitti_disparity(const std::string& path, const DisparityMap& gt,
                           const ValidityMask& mask) {
  if (!mask.same_extent(gt)) throw std::invalid_argument("mask and gt extents differ");
  std::vector<std::uint16_t> samples(gt.size(), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask.values[i]) continue;
    const double scaled = std::round(static_cast<double>(gt.values[i]) * 256.0);
    samples[i] = static_cast<std::uint16_t>(std::clamp(scaled, 1.0, 65535.0));
  }
  write_png_raw(path, gt.width, gt.height, PNG_COLOR_TYPE_GRAY, samples, 1);
}

Tensor read_png_image(const std::string& path) {
  PngRaw raw;
  read_png_raw(path, raw);
  const double max_code = raw.bytes_per_sample == 2 ? 65535.0 : 255.0;
  const std::size_t plane = raw.width * raw.height;
  // Gray(+alpha) is replicated to three channels; alpha is dropped.
  const bool gray = raw.channels <= 2;
  std::vector<float> values(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = i * raw.channels + (gray ? 0 : c);
      values[c * plane + i] = static_cast<float>(sample_at(raw, src) / max_code);
    }
  }
  return Tensor::from({3, raw.height, raw.width}, std::move(values));
}

void write_png_image(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("write_png_image: expected [3, H, W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  auto src = image.data();
  std::vector<std::uint16_t> samples(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(src[c * plane + i]), 0.0, 1.0);
      samples[i * 3 + c] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  }
  write_png_raw(path, w, h, PNG_COLOR_TYPE_RGB, samples, 3);
}

}  // namespace pds
