#include "bevloc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace bevloc::plot {

namespace {

const Eigen::Vector3d kWhite{1.0, 1.0, 1.0};
const Eigen::Vector3d kAxis{0.25, 0.25, 0.25};
const Eigen::Vector3d kGrid{0.88, 0.88, 0.88};
const Eigen::Vector3d kSeries[4] = {
    {0.22, 0.45, 0.70}, {0.87, 0.56, 0.19}, {0.35, 0.65, 0.35}, {0.70, 0.30, 0.35}};

void FillRect(Image& img, int x0, int y0, int x1, int y1, const Eigen::Vector3d& c) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(img.width - 1, x1);
  y1 = std::min(img.height - 1, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) img.SetPixel(x, y, c);
}

void DrawLine(Image& img, double x0, double y0, double x1, double y1, const Eigen::Vector3d& c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x >= 0 && x < img.width && y >= 0 && y < img.height) img.SetPixel(x, y, c);
  }
}

// 3x5 digit glyphs plus '.' and '%'.
const char* Glyph(char ch) {
  switch (ch) {
    case '0': return "111101101101111";
    case '1': return "010110010010111";
    case '2': return "111001111100111";
    case '3': return "111001111001111";
    case '4': return "101101111001001";
    case '5': return "111100111001111";
    case '6': return "111100111101111";
    case '7': return "111001010010010";
    case '8': return "111101111101111";
    case '9': return "111101111001111";
    case '.': return "000000000000010";
    case '%': return "101001010100101";
    default: return nullptr;
  }
}

void StampText(Image& img, int x, int y, const std::string& text, const Eigen::Vector3d& c,
               int scale = 1) {
  int cx = x;
  for (char ch : text) {
    const char* g = Glyph(ch);
    if (g) {
      for (int gy = 0; gy < 5; ++gy)
        for (int gx = 0; gx < 3; ++gx)
          if (g[gy * 3 + gx] == '1')
            FillRect(img, cx + gx * scale, y + gy * scale, cx + gx * scale + scale - 1,
                     y + gy * scale + scale - 1, c);
    }
    cx += 4 * scale;
  }
}

std::string Percent(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

struct Frame {
  int left, right, top, bottom;
};

Frame DrawAxes(Image& img) {
  const Frame f{48, img.width - 16, 20, img.height - 32};
  for (int i = 0; i <= 10; i += 2) {
    const int y = f.bottom - (f.bottom - f.top) * i / 10;
    DrawLine(img, f.left, y, f.right, y, kGrid);
    StampText(img, 8, y - 2, Percent(i / 10.0), kAxis);
  }
  DrawLine(img, f.left, f.top, f.left, f.bottom, kAxis);
  DrawLine(img, f.left, f.bottom, f.right, f.bottom, kAxis);
  return f;
}

}  // namespace

void WriteBarChart(const std::filesystem::path& path, const std::vector<BarGroup>& groups,
                   int width, int height) {
  if (groups.empty()) throw std::invalid_argument("bar chart: no groups");
  Image img(width, height, kWhite);
  const Frame f = DrawAxes(img);

  const int n_groups = static_cast<int>(groups.size());
  const int group_w = (f.right - f.left) / n_groups;
  for (int g = 0; g < n_groups; ++g) {
    const auto& group = groups[g];
    const int n = static_cast<int>(group.values.size());
    if (n == 0) continue;
    const int slot = std::max(4, (group_w - 12) / n);
    for (int s = 0; s < n; ++s) {
      const double v = std::clamp(group.values[s], 0.0, 1.0);
      const int x0 = f.left + g * group_w + 8 + s * slot;
      const int x1 = x0 + slot - 4;
      const int y0 = f.bottom - static_cast<int>(std::lround((f.bottom - f.top) * v));
      FillRect(img, x0, y0, x1, f.bottom - 1, kSeries[s % 4]);
      StampText(img, x0, std::max(2, y0 - 8), Percent(v), kAxis);
    }
  }
  WritePng(path, img);
}

void WriteLineChart(const std::filesystem::path& path, const std::vector<double>& xs,
                    const std::vector<double>& ys, int width, int height) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("line chart: need matching nonempty x/y");
  Image img(width, height, kWhite);
  const Frame f = DrawAxes(img);
  const double x_min = *std::min_element(xs.begin(), xs.end());
  const double x_max = *std::max_element(xs.begin(), xs.end());
  const double span = std::max(1e-12, x_max - x_min);

  const auto px = [&](double x) {
    return f.left + (f.right - f.left) * (x - x_min) / span;
  };
  const auto py = [&](double y) {
    return f.bottom - (f.bottom - f.top) * std::clamp(y, 0.0, 1.0);
  };
  for (size_t i = 0; i + 1 < xs.size(); ++i)
    DrawLine(img, px(xs[i]), py(ys[i]), px(xs[i + 1]), py(ys[i + 1]), kSeries[0]);
  for (size_t i = 0; i < xs.size(); ++i) {
    FillRect(img, static_cast<int>(px(xs[i])) - 1, static_cast<int>(py(ys[i])) - 1,
             static_cast<int>(px(xs[i])) + 1, static_cast<int>(py(ys[i])) + 1, kSeries[1]);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%g", xs[i]);
    StampText(img, static_cast<int>(px(xs[i])) - 4, f.bottom + 6, buf, kAxis);
  }
  WritePng(path, img);
}

}  // namespace bevloc::plot
