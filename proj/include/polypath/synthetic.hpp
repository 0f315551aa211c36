#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "polypath/classify.hpp"
#include "polypath/error.hpp"
#include "polypath/infer.hpp"
#include "polypath/labels.hpp"
#include "polypath/wsi.hpp"

namespace polypath::synthetic {

/// Paint for normal tissue: light pink, non-background, nearest to the
/// NORM reference color.
inline constexpr Rgb kNormalTissue{235, 205, 225};
inline constexpr Rgb kBackground{255, 255, 255};

inline Rgb paint(PolypLabel l) { return l == PolypLabel::NORM ? kNormalTissue : kReferenceColors[index(l)]; }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Procedural slide: a grid of square blocks, each background or painted
/// with a label's color, plus optional per-pixel noise on tissue. Nothing is
/// stored per pixel, so very large slides are cheap.
class BlockPaintedSource final : public PixelSource {
public:
  BlockPaintedSource(int width, int height, int block_px, std::vector<std::optional<PolypLabel>> blocks,
                     int noise = 0, std::uint64_t seed = 0)
      : width_(width), height_(height), block_(block_px), cols_((width + block_px - 1) / block_px),
        blocks_(std::move(blocks)), noise_(noise), seed_(seed) {
    if (width < 1 || height < 1 || block_px < 1) throw InvalidArgument("bad synthetic slide geometry");
    const auto rows = static_cast<std::size_t>((height + block_px - 1) / block_px);
    if (blocks_.size() != static_cast<std::size_t>(cols_) * rows)
      throw InvalidArgument("block layout does not cover the slide");
    if (noise < 0 || noise > 20) throw InvalidArgument("noise amplitude must be in [0,20]");
  }

  int width() const override { return width_; }
  int height() const override { return height_; }

  void read_region(int x, int y, int w, int h, std::span<Rgb> out) const override {
    for (int row = 0; row < h; ++row) {
      const int py = y + row;
      Rgb* dst = out.data() + static_cast<std::ptrdiff_t>(row) * w;
      int px = x;
      while (px < x + w) {
        const int bx = px / block_;
        const int run_end = std::min(x + w, (bx + 1) * block_);
        const auto& label = blocks_[static_cast<std::size_t>(py / block_) * static_cast<std::size_t>(cols_) +
                                    static_cast<std::size_t>(bx)];
        if (!label) {
          std::fill(dst + (px - x), dst + (run_end - x), kBackground);
        } else {
          const Rgb base = paint(*label);
          for (int i = px; i < run_end; ++i) dst[i - x] = noisy(base, i, py);
        }
        px = run_end;
      }
    }
  }

  const std::optional<PolypLabel>& block(int col, int row) const {
    return blocks_[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(col)];
  }

private:
  Rgb noisy(Rgb c, int x, int y) const {
    if (noise_ == 0) return c;
    const std::uint64_t h = splitmix64(seed_ ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)) << 32 |
                                                static_cast<std::uint32_t>(x)));
    const int span = 2 * noise_ + 1;
    auto jitter = [&](std::uint8_t v, int shift) {
      const int d = static_cast<int>((h >> shift) & 0xffff) % span - noise_;
      return static_cast<std::uint8_t>(std::clamp(v + d, 0, 255));
    };
    return {jitter(c.r, 0), jitter(c.g, 16), jitter(c.b, 32)};
  }

  int width_, height_, block_, cols_;
  std::vector<std::optional<PolypLabel>> blocks_;
  int noise_;
  std::uint64_t seed_;
};

struct SyntheticSlide {
  SlideRaster raster;
  int block_px = 224;
  int cols = 0;
  int rows = 0;
  /// Row-major block labels; nullopt is background.
  std::vector<std::optional<PolypLabel>> blocks;
};

inline SyntheticSlide painted_slide(std::string slide_id, int cols, int rows, int block_px,
                                    std::vector<std::optional<PolypLabel>> blocks, int noise = 0,
                                    std::uint64_t seed = 0) {
  auto src = std::make_shared<BlockPaintedSource>(cols * block_px, rows * block_px, block_px, blocks, noise, seed);
  return {SlideRaster(std::move(slide_id), std::move(src)), block_px, cols, rows, std::move(blocks)};
}

/// Block layout of n blocks whose tissue yields `target` under the default
/// thresholds: about a third background, a few NORM blocks, and label
/// proportions well clear of both thresholds.
inline std::vector<std::optional<PolypLabel>> layout_for(Diagnosis target, std::size_t n, std::mt19937_64& rng) {
  if (n < 4) throw InvalidArgument("need at least 4 blocks for a diagnostic layout");
  std::vector<std::optional<PolypLabel>> blocks(n);
  const std::size_t background = n / 3;
  const std::size_t normal = std::max<std::size_t>(1, n / 10);
  const std::size_t tissue = n - background - normal;
  // Minority label share: zero for TA/HP, about half for TVA/SSA.
  PolypLabel major = PolypLabel::TA, minor = PolypLabel::TVA;
  switch (target) {
    case Diagnosis::TA: major = PolypLabel::TA; minor = PolypLabel::TVA; break;
    case Diagnosis::TVA: major = PolypLabel::TVA; minor = PolypLabel::TA; break;
    case Diagnosis::HP: major = PolypLabel::HP; minor = PolypLabel::SSA; break;
    case Diagnosis::SSA: major = PolypLabel::SSA; minor = PolypLabel::HP; break;
  }
  const bool minor_allowed = target == Diagnosis::TVA || target == Diagnosis::SSA;
  const std::size_t n_minor = minor_allowed ? tissue / 3 : 0;
  std::size_t i = 0;
  for (std::size_t k = 0; k < background; ++k) blocks[i++] = std::nullopt;
  for (std::size_t k = 0; k < normal; ++k) blocks[i++] = PolypLabel::NORM;
  for (std::size_t k = 0; k < n_minor; ++k) blocks[i++] = minor;
  while (i < n) blocks[i++] = major;
  std::shuffle(blocks.begin(), blocks.end(), rng);
  return blocks;
}

/// Fully random layout: every block independently background, NORM or one
/// of the four polyp labels, with label weights drawn per call so that both
/// branches and both thresholds get exercised.
inline std::vector<std::optional<PolypLabel>> random_layout(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // background, TA, TVA, HP, SSA, NORM
  std::vector<double> w = {0.5 * u(rng), u(rng), u(rng), u(rng), 0.2 * u(rng), 0.2 * u(rng)};
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::vector<std::optional<PolypLabel>> blocks(n);
  for (auto& b : blocks) {
    const int v = pick(rng);
    if (v == 0) b = std::nullopt;
    else if (v == 5) b = PolypLabel::NORM;
    else b = static_cast<PolypLabel>(v - 1);
  }
  return blocks;
}

} // namespace polypath::synthetic
