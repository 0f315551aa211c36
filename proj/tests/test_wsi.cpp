#include <gtest/gtest.h>

#include <random>
#include <set>

#include "polypath/wsi.hpp"

using namespace polypath;

namespace {

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kPink{200, 120, 160};

SlideRaster solid(int w, int h, Rgb c) { return SlideRaster("s", RgbImage(w, h, c)); }

// Independent enumeration: walk every admissible offset.
std::vector<PatchWindow> naive_grid(int w, int h, int side, int stride) {
  std::vector<PatchWindow> out;
  for (int y = 0; y + side <= h; y += stride)
    for (int x = 0; x + side <= w; x += stride) out.push_back({x, y, side});
  return out;
}

// Independent tissue count straight from pixels.
std::size_t tissue_windows_by_pixel_count(const SlideRaster& s, const TilingConfig& cfg) {
  std::size_t n = 0;
  for (const auto& w : naive_grid(s.width(), s.height(), cfg.side_px, cfg.stride_px)) {
    std::size_t tissue = 0;
    for (int y = w.y; y < w.y + w.side_px; ++y)
      for (int x = w.x; x < w.x + w.side_px; ++x) {
        const Rgb p = s.pixel(x, y);
        if (std::min({p.r, p.g, p.b}) < cfg.background_whiteness) ++tissue;
      }
    if (tissue * 100 >= 30 * static_cast<std::size_t>(w.side_px) * static_cast<std::size_t>(w.side_px)) ++n;
  }
  return n;
}

} // namespace

TEST(ExtractGrid, SingleWindowOnExactSlide) {
  const auto w = extract_grid(224, 224, TilingConfig{});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], (PatchWindow{0, 0, 224}));
}

TEST(ExtractGrid, ThreeByTwo) {
  const auto w = extract_grid(672, 448, TilingConfig{});
  ASSERT_EQ(w.size(), naive_grid(672, 448, 224, 224).size());
  ASSERT_EQ(w.size(), 6u);
  EXPECT_EQ(w, naive_grid(672, 448, 224, 224));
}

TEST(ExtractGrid, DropsPartialEdgeWindows) {
  const auto w = extract_grid(500, 224, TilingConfig{});
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].x, 0);
  EXPECT_EQ(w[1].x, 224);
  for (const auto& win : w) EXPECT_LE(win.x + win.side_px, 500);
}

TEST(ExtractGrid, SlideTooSmall) {
  EXPECT_THROW(extract_grid(223, 500, TilingConfig{}), SlideTooSmall);
  EXPECT_THROW(extract_grid(500, 100, TilingConfig{}), SlideTooSmall);
  EXPECT_THROW(extract_grid(solid(100, 300, kPink), TilingConfig{}), SlideTooSmall);
}

TEST(ExtractGrid, RejectsBadConfig) {
  TilingConfig cfg;
  cfg.stride_px = 0;
  EXPECT_THROW(extract_grid(500, 500, cfg), InvalidArgument);
  cfg = {};
  cfg.min_tissue_fraction = 1.5;
  EXPECT_THROW(extract_grid(500, 500, cfg), InvalidArgument);
}

TEST(ExtractGridProperty, CountMatchesFormulaAndNaiveEnumeration) {
  std::mt19937 rng(1234);
  std::uniform_int_distribution<int> dim(1, 10000), side_d(1, 600), stride_d(1, 700);
  int checked = 0;
  while (checked < 300) {
    const int w = dim(rng), h = dim(rng), side = side_d(rng), stride = stride_d(rng);
    if (w < side || h < side) continue;
    // Keep the naive walk cheap.
    const std::size_t expected = static_cast<std::size_t>((w - side) / stride + 1) *
                                 static_cast<std::size_t>((h - side) / stride + 1);
    if (expected > 200000) continue;
    TilingConfig cfg;
    cfg.side_px = side;
    cfg.stride_px = stride;
    const auto grid = extract_grid(w, h, cfg);
    ASSERT_EQ(grid.size(), expected);
    ASSERT_EQ(grid, naive_grid(w, h, side, stride));

    std::set<std::pair<int, int>> seen;
    for (const auto& win : grid) {
      ASSERT_TRUE(seen.emplace(win.x, win.y).second);
      ASSERT_GE(win.x, 0);
      ASSERT_GE(win.y, 0);
      ASSERT_LE(win.x + side, w);
      ASSERT_LE(win.y + side, h);
    }
    TilingConfig doubled = cfg;
    doubled.stride_px = 2 * stride;
    ASSERT_LE(extract_grid(w, h, doubled).size(), grid.size());
    ++checked;
  }
}

TEST(IsTissue, PureBackgroundAndPureTissue) {
  const TilingConfig cfg;
  const PatchWindow w{0, 0, 224};
  EXPECT_FALSE(is_tissue(solid(224, 224, kWhite), w, cfg));
  EXPECT_TRUE(is_tissue(solid(224, 224, kPink), w, cfg));
}

TEST(IsTissue, FractionBoundaryIsInclusive) {
  // 10x10 window: 70 white pixels, 30 pink -> exactly 0.30 tissue.
  RgbImage img(10, 10, kWhite);
  for (int i = 0; i < 30; ++i) img.at(i % 10, i / 10) = kPink;
  TilingConfig cfg;
  cfg.side_px = 10;
  cfg.stride_px = 10;
  SlideRaster s("b", img);
  EXPECT_TRUE(is_tissue(s, {0, 0, 10}, cfg));

  img.at(9, 2) = kWhite; // 29 pink
  EXPECT_FALSE(is_tissue(SlideRaster("b", img), {0, 0, 10}, cfg));
}

TEST(IsTissue, WhitenessThresholdIsExclusive) {
  TilingConfig cfg;
  cfg.side_px = 4;
  EXPECT_FALSE(is_tissue(RgbImage(4, 4, Rgb{230, 240, 250}), cfg));
  EXPECT_TRUE(is_tissue(RgbImage(4, 4, Rgb{229, 240, 250}), cfg));
}

TEST(IsTissue, RepeatedCallsAgree) {
  std::mt19937 rng(7);
  RgbImage img(224, 224);
  std::uniform_int_distribution<int> v(150, 255);
  for (auto& p : img.pixels()) p = {static_cast<std::uint8_t>(v(rng)), static_cast<std::uint8_t>(v(rng)),
                                    static_cast<std::uint8_t>(v(rng))};
  const TilingConfig cfg;
  const bool first = is_tissue(img, cfg);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(is_tissue(img, cfg), first);
}

TEST(SlideStats, AllWhite) {
  EXPECT_EQ(slide_stats(solid(448, 448, kWhite), TilingConfig{}), (SlideStats{0, 0}));
}

TEST(SlideStats, AllPink) {
  const auto s = solid(448, 448, kPink);
  const auto st = slide_stats(s, TilingConfig{});
  EXPECT_EQ(st.tissue_patch_count, tissue_windows_by_pixel_count(s, TilingConfig{}));
  EXPECT_EQ(st, (SlideStats{4, 4u * 224u * 224u}));
}

TEST(SlideStats, HalfWhiteHalfPink) {
  RgbImage img(448, 224, kWhite);
  for (int y = 0; y < 224; ++y)
    for (int x = 224; x < 448; ++x) img.at(x, y) = kPink;
  const SlideRaster s("half", img);
  const auto st = slide_stats(s, TilingConfig{});
  EXPECT_EQ(st.tissue_patch_count, tissue_windows_by_pixel_count(s, TilingConfig{}));
  EXPECT_EQ(st, (SlideStats{1, 224u * 224u}));
}

TEST(SlideStats, PropagatesSlideTooSmall) {
  EXPECT_THROW(slide_stats(solid(100, 100, kPink), TilingConfig{}), SlideTooSmall);
}

TEST(SlideStats, IndependentOfWorkerCount) {
  std::mt19937 rng(99);
  RgbImage img(224 * 5, 224 * 4, kWhite);
  std::bernoulli_distribution coin(0.5);
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 5; ++bx)
      if (coin(rng))
        for (int y = by * 224; y < by * 224 + 224; ++y)
          for (int x = bx * 224; x < bx * 224 + 160; ++x) img.at(x, y) = kPink;
  const SlideRaster s("w", img);
  const auto one = slide_stats(s, TilingConfig{}, 1);
  EXPECT_EQ(one.tissue_patch_count, tissue_windows_by_pixel_count(s, TilingConfig{}));
  EXPECT_EQ(slide_stats(s, TilingConfig{}, 3), one);
  EXPECT_EQ(slide_stats(s, TilingConfig{}, 8), one);
}

TEST(SlideRaster, Invariants) {
  EXPECT_THROW(SlideRaster("x", RgbImage(0, 5)), InvalidArgument);
  EXPECT_THROW(SlideRaster("x", RgbImage(5, 5), 0.0), InvalidArgument);
  const auto s = solid(5, 5, kPink);
  EXPECT_DOUBLE_EQ(s.microns_per_pixel(), 0.25);
  EXPECT_EQ(s.pixel(4, 4), kPink);
  EXPECT_THROW(s.pixel(5, 0), WindowOutOfBounds);
  EXPECT_THROW(s.read_region(3, 3, 3, 3), WindowOutOfBounds);
}

TEST(Downsample, BoxAverage) {
  RgbImage img(4, 2);
  img.at(0, 0) = {0, 0, 0};
  img.at(1, 0) = {100, 100, 100};
  img.at(0, 1) = {200, 200, 200};
  img.at(1, 1) = {100, 100, 100};
  img.at(2, 0) = img.at(3, 0) = img.at(2, 1) = img.at(3, 1) = {10, 20, 30};
  const auto d = downsample(img, 2);
  ASSERT_EQ(d.width(), 2);
  ASSERT_EQ(d.height(), 1);
  EXPECT_EQ(d.at(0, 0), (Rgb{100, 100, 100}));
  EXPECT_EQ(d.at(1, 0), (Rgb{10, 20, 30}));
  EXPECT_EQ(downsample(img, 1), img);
  EXPECT_THROW(downsample(img, 0), InvalidArgument);
}
