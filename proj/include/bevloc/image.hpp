#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace bevloc {

// Row-major RGB image, values in [0, 1], origin at the top-left corner.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // size = width * height * 3

  Image() = default;
  Image(int w, int h, const Eigen::Vector3d& fill = Eigen::Vector3d::Zero());

  double& At(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double At(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  Eigen::Vector3d Pixel(int x, int y) const {
    return {At(x, y, 0), At(x, y, 1), At(x, y, 2)};
  }
  void SetPixel(int x, int y, const Eigen::Vector3d& rgb) {
    for (int c = 0; c < 3; ++c) At(x, y, c) = rgb[c];
  }

  size_t NumPixels() const { return static_cast<size_t>(width) * height; }
  bool SameShape(const Image& o) const { return width == o.width && height == o.height; }
};

// Bilinear sample at continuous pixel-index coordinates (x along width,
// y along height; integer coordinates hit pixel centers). Samples outside
// [0, w-1] x [0, h-1] return the background color.
Eigen::Vector3d BilinearSample(const Image& img, double x, double y,
                               const Eigen::Vector3d& background);

// Crops the central `fraction` of each side. fraction in (0, 1].
Image CenterCrop(const Image& img, double fraction);

Image ResizeBilinear(const Image& img, int out_width, int out_height);

double MeanAbsDifference(const Image& a, const Image& b);

// 8-bit RGB PNG I/O.
void WritePng(const std::filesystem::path& path, const Image& img);
Image ReadPng(const std::filesystem::path& path);

}  // namespace bevloc
