#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "polypath/onnx_backend.hpp"
#include "polypath/raster_io.hpp"

using namespace polypath;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("polypath_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

RgbImage random_image(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  RgbImage img(w, h);
  for (auto& p : img.pixels()) p = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                                    static_cast<std::uint8_t>(rng())};
  return img;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const fs::path kData = POLYPATH_TEST_DATA;

} // namespace

TEST(RasterIo, PngRoundTripPreservesChannelOrder) {
  TempDir dir;
  RgbImage img(3, 2, Rgb{10, 20, 30});
  img.at(2, 1) = {250, 0, 5};
  write_png(img, dir.path() / "a.png");
  EXPECT_EQ(read_image(dir.path() / "a.png"), img);
}

TEST(RasterIo, LoadSlideWithSidecar) {
  TempDir dir;
  write_png(random_image(40, 24, 1), dir.path() / "slide.png");
  auto s = load_slide(dir.path() / "slide.png");
  EXPECT_EQ(s.slide_id(), "slide");
  EXPECT_DOUBLE_EQ(s.microns_per_pixel(), 0.25);

  write_file(dir.path() / "slide.json", R"({"slide_id": "S-01", "microns_per_pixel": 0.5, "downsample": 2})");
  s = load_slide(dir.path() / "slide.png");
  EXPECT_EQ(s.slide_id(), "S-01");
  EXPECT_EQ(s.width(), 20);
  EXPECT_EQ(s.height(), 12);
  EXPECT_DOUBLE_EQ(s.microns_per_pixel(), 1.0);

  s = load_slide(dir.path() / "slide.png", std::string("override"), 1);
  EXPECT_EQ(s.slide_id(), "override");
  EXPECT_EQ(s.width(), 40);
}

TEST(RasterIo, Errors) {
  TempDir dir;
  EXPECT_THROW(load_slide(dir.path() / "missing.png"), IoError);
  write_file(dir.path() / "junk.png", "not an image");
  EXPECT_THROW(load_slide(dir.path() / "junk.png"), IoError);
  write_png(RgbImage(4, 4), dir.path() / "bad.png");
  write_file(dir.path() / "bad.json", R"({"microns_per_pixel": -1})");
  EXPECT_THROW(load_slide(dir.path() / "bad.png"), IoError);
}

TEST(RasterIo, TiledDirectoryMatchesWholeImage) {
  TempDir dir;
  const auto whole = random_image(70, 50, 2);
  // Column widths 32, 32, 6; row heights 32, 18.
  const int xs[] = {0, 32, 64, 70}, ys[] = {0, 32, 50};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      RgbImage tile(xs[c + 1] - xs[c], ys[r + 1] - ys[r]);
      for (int y = 0; y < tile.height(); ++y)
        for (int x = 0; x < tile.width(); ++x) tile.at(x, y) = whole.at(xs[c] + x, ys[r] + y);
      write_png(tile, dir.path() / ("tile_" + std::to_string(r) + "_" + std::to_string(c) + ".png"));
    }
  write_file(dir.path() / "slide.json", R"({"slide_id": "tiled"})");
  const auto s = load_slide(dir.path());
  EXPECT_EQ(s.slide_id(), "tiled");
  ASSERT_EQ(s.width(), 70);
  ASSERT_EQ(s.height(), 50);
  EXPECT_EQ(s.read_region(0, 0, 70, 50), whole);
  EXPECT_EQ(s.read_region(30, 30, 20, 10), [&] {
    RgbImage sub(20, 10);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 20; ++x) sub.at(x, y) = whole.at(30 + x, 30 + y);
    return sub;
  }());
}

TEST(RasterIo, TiledDirectoryIncompleteGrid) {
  TempDir dir;
  write_png(RgbImage(8, 8), dir.path() / "tile_0_0.png");
  write_png(RgbImage(8, 8), dir.path() / "tile_1_1.png");
  EXPECT_THROW(load_slide(dir.path()), IoError);
}

TEST(OnnxBackend, MatchesHandComputedSoftmax) {
  OnnxClassifier net(kData / "tiny.onnx");
  ASSERT_EQ(net.side_px(), 8);
  const double W[5][3] = {{-2, 3, -2}, {-2, -2, 3}, {2, 2, -3}, {3, -2, -2}, {1.5, 1.5, 1.5}};
  const double b[5] = {0.1, 0.0, -0.1, 0.2, -2.5};
  for (auto color : {Rgb{60, 160, 60}, Rgb{60, 60, 200}, Rgb{220, 200, 60}, Rgb{200, 60, 60}, Rgb{250, 250, 250},
                     Rgb{128, 64, 32}}) {
    const double x[3] = {(color.r / 255.0 - 0.5) / 0.25, (color.g / 255.0 - 0.5) / 0.25,
                         (color.b / 255.0 - 0.5) / 0.25};
    double logits[5], z = 0.0;
    for (int k = 0; k < 5; ++k) {
      logits[k] = b[k] + W[k][0] * x[0] + W[k][1] * x[1] + W[k][2] * x[2];
      z += std::exp(logits[k]);
    }
    const auto p = net.predict(RgbImage(8, 8, color));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(p.values()[k], std::exp(logits[k]) / z, 1e-5);
  }
}

TEST(OnnxBackend, ReferenceColorsArgmax) {
  OnnxClassifier net(kData / "tiny.onnx");
  for (auto l : kAllLabels) EXPECT_EQ(net.predict(RgbImage(8, 8, kReferenceColors[index(l)])).argmax(), l);
}

TEST(OnnxBackend, Failures) {
  EXPECT_THROW(OnnxClassifier(kData / "nope.onnx"), BackendFailure);
  OnnxClassifier four(kData / "four_outputs.onnx");
  EXPECT_THROW(four.predict(RgbImage(8, 8)), BackendFailure);
  OnnxClassifier net(kData / "tiny.onnx");
  EXPECT_THROW(net.predict(RgbImage(9, 8)), BadPatchShape);

  TempDir dir;
  fs::copy_file(kData / "tiny.onnx", dir.path() / "m.onnx");
  EXPECT_THROW(OnnxClassifier(dir.path() / "m.onnx"), BackendFailure) << "missing sidecar";
  write_file(dir.path() / "m.json", R"({"side_px": 8, "std": [0, 1, 1]})");
  EXPECT_THROW(OnnxClassifier(dir.path() / "m.onnx"), BackendFailure);
  write_file(dir.path() / "corrupt.onnx", "garbage");
  write_file(dir.path() / "corrupt.json", R"({"side_px": 8})");
  EXPECT_THROW(OnnxClassifier(dir.path() / "corrupt.onnx"), BackendFailure);
}

TEST(OnnxBackend, EnsembleOfNetworks) {
  std::vector<std::unique_ptr<PatchClassifier>> members;
  for (int i = 0; i < 3; ++i) members.push_back(std::make_unique<OnnxClassifier>(kData / "tiny.onnx"));
  Ensemble e(std::move(members));
  OnnxClassifier single(kData / "tiny.onnx");
  const RgbImage patch(8, 8, Rgb{90, 140, 70});
  const auto a = e.predict(patch), b = single.predict(patch);
  for (auto l : kAllLabels) EXPECT_NEAR(a[l], b[l], 1e-12);
}
