#include "bevloc/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "bevloc/util.hpp"

namespace bevloc {

Image::Image(int w, int h, const Eigen::Vector3d& fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw std::invalid_argument("image dimensions must be non-negative");
  data.resize(static_cast<size_t>(w) * h * 3);
  for (size_t p = 0; p < NumPixels(); ++p)
    for (int c = 0; c < 3; ++c) data[p * 3 + c] = fill[c];
}

Eigen::Vector3d BilinearSample(const Image& img, double x, double y,
                               const Eigen::Vector3d& background) {
  if (!(x >= 0.0 && x <= img.width - 1.0 && y >= 0.0 && y <= img.height - 1.0)) {
    return background;
  }
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    const double top = (1.0 - fx) * img.At(x0, y0, c) + fx * img.At(x1, y0, c);
    const double bot = (1.0 - fx) * img.At(x0, y1, c) + fx * img.At(x1, y1, c);
    out[c] = (1.0 - fy) * top + fy * bot;
  }
  return out;
}

Image CenterCrop(const Image& img, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("crop fraction must be in (0, 1]");
  }
  if (fraction == 1.0) return img;
  const int cw = std::max(1, static_cast<int>(std::lround(img.width * fraction)));
  const int ch = std::max(1, static_cast<int>(std::lround(img.height * fraction)));
  const int x0 = (img.width - cw) / 2;
  const int y0 = (img.height - ch) / 2;
  Image out(cw, ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < 3; ++c) out.At(x, y, c) = img.At(x0 + x, y0 + y, c);
  return out;
}

Image ResizeBilinear(const Image& img, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0) throw std::invalid_argument("resize target must be positive");
  if (out_width == img.width && out_height == img.height) return img;
  Image out(out_width, out_height);
  const double sx = static_cast<double>(img.width) / out_width;
  const double sy = static_cast<double>(img.height) / out_height;
  for (int y = 0; y < out_height; ++y) {
    // Pixel-center alignment; clamp keeps samples inside the source grid.
    double yin = (y + 0.5) * sy - 0.5;
    yin = std::min(std::max(yin, 0.0), img.height - 1.0);
    for (int x = 0; x < out_width; ++x) {
      double xin = (x + 0.5) * sx - 0.5;
      xin = std::min(std::max(xin, 0.0), img.width - 1.0);
      out.SetPixel(x, y, BilinearSample(img, xin, yin, Eigen::Vector3d::Zero()));
    }
  }
  return out;
}

double MeanAbsDifference(const Image& a, const Image& b) {
  if (!a.SameShape(b)) throw std::invalid_argument("image shapes differ");
  double sum = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
  return a.data.empty() ? 0.0 : sum / a.data.size();
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void WritePng(const std::filesystem::path& path, const Image& img) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write error: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(1.0, std::max(0.0, img.At(x, y, c)));
        row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image ReadPng(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open for reading: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read error: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image img(static_cast<int>(w), static_cast<int>(h));
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.At(static_cast<int>(x), static_cast<int>(y), c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace bevloc
