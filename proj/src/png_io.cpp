#include "crossvae/render.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace crossvae {

namespace {

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  throw std::runtime_error(std::string("png: ") + msg);
  (void)png;
}

void png_warn(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void no_flush(png_structp) {}

std::vector<std::uint8_t> encode(const std::uint8_t* pixels, int width, int height, int channels) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw std::runtime_error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  try {
    if (!info) throw std::runtime_error("png: cannot create info struct");
    png_set_write_fn(png, &out, append_bytes, no_flush);
    png_set_IHDR(png, info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * width * channels));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("png: empty image");
  return encode(image.data.data(), image.width, image.height, 3);
}

void write_png(const std::string& path, const RgbImage& image) {
  write_file(path, encode_png(image));
}

void write_png(const std::string& path, const Bitmap& bitmap) {
  std::vector<std::uint8_t> gray(kBitmapSize * kBitmapSize);
  for (int r = 0; r < kBitmapSize; ++r) {
    for (int c = 0; c < kBitmapSize; ++c) {
      gray[r * kBitmapSize + c] =
          static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(bitmap.pixels(r, c), 0.0, 1.0)));
    }
  }
  write_file(path, encode(gray.data(), kBitmapSize, kBitmapSize, 1));
}

Bitmap read_bitmap_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error(path + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw std::runtime_error("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  Bitmap out;
  try {
    if (!info) throw std::runtime_error("png: cannot create info struct");
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    if (w != kBitmapSize || h != kBitmapSize) {
      throw std::runtime_error(path + ": expected a 32x32 image, got " + std::to_string(w) + "x" +
                               std::to_string(h));
    }
    // Normalize every color type to 8-bit gray.
    const auto type = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (type == PNG_COLOR_TYPE_RGB || type == PNG_COLOR_TYPE_RGB_ALPHA ||
        type == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);
    if (png_get_channels(png, info) != 1) throw std::runtime_error(path + ": unsupported PNG layout");
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int r = 0; r < kBitmapSize; ++r) {
      png_read_row(png, row.data(), nullptr);
      for (int c = 0; c < kBitmapSize; ++c) out.pixels(r, c) = row[c] / 255.0;
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace crossvae
