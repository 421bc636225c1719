#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "bevloc/image.hpp"
#include "bevloc/util.hpp"

using namespace bevloc;

namespace {
std::filesystem::path TmpDir() {
  const auto dir = std::filesystem::temp_directory_path() / "bevloc_image_test";
  std::filesystem::create_directories(dir);
  return dir;
}
}  // namespace

TEST_CASE("png round trip preserves 8-bit content") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Image img(17, 9);
  for (auto& v : img.data) v = uni(rng);
  const auto path = TmpDir() / "roundtrip.png";
  WritePng(path, img);
  const Image back = ReadPng(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("png writes are byte-stable") {
  Image img(8, 8, {0.2, 0.5, 0.9});
  img.SetPixel(3, 4, {1.0, 0.0, 0.25});
  const auto a = TmpDir() / "a.png";
  const auto b = TmpDir() / "b.png";
  WritePng(a, img);
  WritePng(b, img);
  CHECK(HashFile(a) == HashFile(b));
}

TEST_CASE("bilinear sampling") {
  Image img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.SetPixel(x, y, {0.1 * x, 0.1 * y, 0.0});
  const Eigen::Vector3d bg{9.0, 9.0, 9.0};

  SUBCASE("integer coordinates hit pixels exactly") {
    const auto v = BilinearSample(img, 2.0, 1.0, bg);
    CHECK(v[0] == doctest::Approx(0.2));
    CHECK(v[1] == doctest::Approx(0.1));
  }
  SUBCASE("midpoints interpolate") {
    const auto v = BilinearSample(img, 1.5, 0.0, bg);
    CHECK(v[0] == doctest::Approx(0.15));
  }
  SUBCASE("out of domain returns background") {
    CHECK(BilinearSample(img, -0.01, 0.0, bg)[0] == doctest::Approx(9.0));
    CHECK(BilinearSample(img, 0.0, 3.01, bg)[0] == doctest::Approx(9.0));
  }
}

TEST_CASE("center crop takes the central fraction") {
  Image img(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      img.SetPixel(x, y, {static_cast<double>(x), static_cast<double>(y), 0});
  const Image c = CenterCrop(img, 0.8);
  REQUIRE(c.width == 8);
  REQUIRE(c.height == 8);
  CHECK(c.At(0, 0, 0) == doctest::Approx(1.0));  // offset (10-8)/2
  CHECK(c.At(7, 7, 1) == doctest::Approx(8.0));
  CHECK_THROWS(CenterCrop(img, 0.0));
  CHECK_THROWS(CenterCrop(img, 1.2));
}

TEST_CASE("resize of a constant image is constant") {
  Image img(16, 16, {0.3, 0.6, 0.9});
  const Image r = ResizeBilinear(img, 7, 13);
  for (size_t p = 0; p < r.NumPixels(); ++p) {
    CHECK(r.data[p * 3 + 0] == doctest::Approx(0.3));
    CHECK(r.data[p * 3 + 2] == doctest::Approx(0.9));
  }
}
