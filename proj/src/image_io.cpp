#include "ncanet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <vector>

#include "ncanet/errors.hpp"

namespace ncanet {

namespace {

struct File {
  std::FILE* fp = nullptr;
  ~File() {
    if (fp) std::fclose(fp);
  }
};

struct ReadStructs {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadStructs() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct WriteStructs {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteStructs() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

void silent_warning(png_structp, png_const_charp) {}

}  // namespace

unsigned char quantize8(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Tensor<float> read_png(const std::filesystem::path& path) {
  File file;
  file.fp = std::fopen(path.c_str(), "rb");
  if (!file.fp) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError(path.string() + " is not a PNG file");

  ReadStructs s;
  s.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!s.png) throw IoError("libpng initialization failed");
  s.info = png_create_info_struct(s.png);
  if (!s.info) throw IoError("libpng initialization failed");

  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(s.png))) throw IoError("corrupt PNG: " + path.string());

  png_init_io(s.png, file.fp);
  png_set_sig_bytes(s.png, 8);
  png_read_info(s.png, s.info);
  width = png_get_image_width(s.png, s.info);
  height = png_get_image_height(s.png, s.info);
  const int color = png_get_color_type(s.png, s.info);
  const int depth = png_get_bit_depth(s.png, s.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(s.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(s.png);
  if (depth == 16) png_set_scale_16(s.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(s.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(s.png);
  png_read_update_info(s.png, s.info);

  const std::size_t stride = png_get_rowbytes(s.png, s.info);
  if (png_get_channels(s.png, s.info) != 3 || stride != static_cast<std::size_t>(width) * 3)
    throw IoError("unsupported PNG layout: " + path.string());
  pixels.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  if (setjmp(png_jmpbuf(s.png))) throw IoError("corrupt PNG: " + path.string());
  png_read_image(s.png, rows.data());
  png_read_end(s.png, nullptr);

  const std::size_t H = height, W = width;
  Tensor<float> img(Shape{3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = pixels[y * stride + x * 3 + c] / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& image, int bit_depth) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw ShapeError("write_png: expected 1 x H x W or 3 x H x W, got " + image.shape().str());
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H == 0 || W == 0) throw ShapeError("write_png: empty image");

  const std::size_t bytes = bit_depth / 8;
  const std::size_t stride = W * C * bytes;
  const double scale = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<png_byte> pixels(stride * H);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        const auto v = static_cast<unsigned>(std::lround(std::clamp(image.at(c, y, x), 0.0f, 1.0f) * scale));
        png_byte* p = &pixels[y * stride + (x * C + c) * bytes];
        if (bytes == 1) {
          p[0] = static_cast<png_byte>(v);
        } else {
          p[0] = static_cast<png_byte>(v >> 8);
          p[1] = static_cast<png_byte>(v & 0xff);
        }
      }
  std::vector<png_bytep> rows(H);
  for (std::size_t y = 0; y < H; ++y) rows[y] = pixels.data() + y * stride;

  File file;
  file.fp = std::fopen(path.c_str(), "wb");
  if (!file.fp) throw IoError("cannot write " + path.string());
  WriteStructs s;
  s.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!s.png) throw IoError("libpng initialization failed");
  s.info = png_create_info_struct(s.png);
  if (!s.info) throw IoError("libpng initialization failed");
  if (setjmp(png_jmpbuf(s.png))) throw IoError("PNG encode failed: " + path.string());
  png_init_io(s.png, file.fp);
  png_set_IHDR(s.png, s.info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), bit_depth,
               C == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(s.png, s.info);
  png_write_image(s.png, rows.data());
  png_write_end(s.png, nullptr);
  if (std::fflush(file.fp) != 0) throw IoError("cannot write " + path.string());
}

}  // namespace ncanet
