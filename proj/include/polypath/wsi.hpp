#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polypath/error.hpp"
#include "polypath/image.hpp"
#include "polypath/parallel.hpp"

namespace polypath {

/// Read-only pixel provider behind a SlideRaster. Implementations must be
/// safe to read from several threads at once.
class PixelSource {
public:
  virtual ~PixelSource() = default;
  virtual int width() const = 0;
  virtual int height() const = 0;
  /// Writes the w*h region at (x, y), row-major, into out. The region is
  /// guaranteed to lie inside the source.
  virtual void read_region(int x, int y, int w, int h, std::span<Rgb> out) const = 0;
};

class MemorySource final : public PixelSource {
public:
  explicit MemorySource(RgbImage image) : image_(std::move(image)) {}

  int width() const override { return image_.width(); }
  int height() const override { return image_.height(); }

  void read_region(int x, int y, int w, int h, std::span<Rgb> out) const override {
    for (int row = 0; row < h; ++row) {
      auto src = image_.row(y + row).subspan(static_cast<std::size_t>(x), static_cast<std::size_t>(w));
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(row) * w);
    }
  }

  const RgbImage& image() const { return image_; }

private:
  RgbImage image_;
};

/// A whole-slide image: identity, physical resolution and pixel access.
class SlideRaster {
public:
  SlideRaster(std::string slide_id, std::shared_ptr<const PixelSource> source,
              double microns_per_pixel = 0.25)
      : slide_id_(std::move(slide_id)), source_(std::move(source)), mpp_(microns_per_pixel) {
    if (!source_) throw InvalidArgument("slide '" + slide_id_ + "' has no pixel source");
    if (source_->width() < 1 || source_->height() < 1)
      throw InvalidArgument("slide '" + slide_id_ + "' has empty dimensions");
    if (!(mpp_ > 0.0)) throw InvalidArgument("microns_per_pixel must be positive");
  }

  SlideRaster(std::string slide_id, RgbImage image, double microns_per_pixel = 0.25)
      : SlideRaster(std::move(slide_id), std::make_shared<MemorySource>(std::move(image)),
                    microns_per_pixel) {}

  const std::string& slide_id() const { return slide_id_; }
  int width() const { return source_->width(); }
  int height() const { return source_->height(); }
  double microns_per_pixel() const { return mpp_; }
  const PixelSource& source() const { return *source_; }

  Rgb pixel(int x, int y) const {
    check_region(x, y, 1, 1);
    Rgb p;
    source_->read_region(x, y, 1, 1, std::span<Rgb>(&p, 1));
    return p;
  }

  /// Reads a region into `out`, resizing it as needed (buffer reuse).
  void read_region(int x, int y, int w, int h, RgbImage& out) const {
    check_region(x, y, w, h);
    if (out.width() != w || out.height() != h) out = RgbImage(w, h);
    source_->read_region(x, y, w, h, out.pixels());
  }

  RgbImage read_region(int x, int y, int w, int h) const {
    RgbImage out;
    read_region(x, y, w, h, out);
    return out;
  }

private:
  void check_region(int x, int y, int w, int h) const {
    if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > width() || y + h > height())
      throw WindowOutOfBounds("region (" + std::to_string(x) + "," + std::to_string(y) + ") " +
                              std::to_string(w) + "x" + std::to_string(h) + " outside slide '" +
                              slide_id_ + "'");
  }

  std::string slide_id_;
  std::shared_ptr<const PixelSource> source_;
  double mpp_;
};

/// Top-left corner and side of a square patch.
struct PatchWindow {
  int x = 0;
  int y = 0;
  int side_px = 224;

  friend bool operator==(const PatchWindow&, const PatchWindow&) = default;
};

/// Row-major order: by y, then x.
inline bool raster_order(const PatchWindow& a, const PatchWindow& b) {
  return a.y != b.y ? a.y < b.y : a.x < b.x;
}

struct TilingConfig {
  int side_px = 224;
  int stride_px = 224;
  /// Pixels whose smallest channel is at or above this value are background.
  int background_whiteness = 230;
  /// Minimum fraction of non-background pixels for a window to count as tissue.
  double min_tissue_fraction = 0.30;

  void validate() const {
    if (side_px < 1) throw InvalidArgument("side_px must be >= 1");
    if (stride_px < 1) throw InvalidArgument("stride_px must be >= 1");
    if (background_whiteness < 0 || background_whiteness > 255)
      throw InvalidArgument("background_whiteness must be in [0,255]");
    if (!(min_tissue_fraction >= 0.0 && min_tissue_fraction <= 1.0))
      throw InvalidArgument("min_tissue_fraction must be in [0,1]");
  }
};

/// Number of windows along one axis; 0 when the axis is shorter than a window.
inline std::size_t windows_along(int extent, int side, int stride) {
  if (extent < side) return 0;
  return static_cast<std::size_t>((extent - side) / stride) + 1;
}

/// Sliding-window enumeration over a width x height raster. Windows are
/// returned row-major from the top-left; partial windows at the right and
/// bottom edges are dropped.
inline std::vector<PatchWindow> extract_grid(int width, int height, const TilingConfig& cfg) {
  cfg.validate();
  if (width < cfg.side_px || height < cfg.side_px)
    throw SlideTooSmall("slide " + std::to_string(width) + "x" + std::to_string(height) +
                        " is smaller than one " + std::to_string(cfg.side_px) + "px window");
  const std::size_t cols = windows_along(width, cfg.side_px, cfg.stride_px);
  const std::size_t rows = windows_along(height, cfg.side_px, cfg.stride_px);
  std::vector<PatchWindow> windows;
  windows.reserve(cols * rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      windows.push_back({static_cast<int>(c) * cfg.stride_px, static_cast<int>(r) * cfg.stride_px,
                         cfg.side_px});
  return windows;
}

inline std::vector<PatchWindow> extract_grid(const SlideRaster& slide, const TilingConfig& cfg) {
  return extract_grid(slide.width(), slide.height(), cfg);
}

/// Tissue gate on pixels already read into memory.
inline bool is_tissue(const RgbImage& patch, const TilingConfig& cfg) {
  const auto px = patch.pixels();
  if (px.empty()) return false;
  const int white = cfg.background_whiteness;
  std::size_t tissue = 0;
  for (const Rgb& p : px) {
    const int lo = std::min({p.r, p.g, p.b});
    tissue += lo < white ? 1 : 0;
  }
  return static_cast<double>(tissue) / static_cast<double>(px.size()) >= cfg.min_tissue_fraction;
}

inline bool is_tissue(const SlideRaster& slide, const PatchWindow& w, const TilingConfig& cfg) {
  RgbImage patch;
  slide.read_region(w.x, w.y, w.side_px, w.side_px, patch);
  return is_tissue(patch, cfg);
}

struct SlideStats {
  std::size_t tissue_patch_count = 0;
  std::uint64_t tissue_area_px = 0;

  friend bool operator==(const SlideStats&, const SlideStats&) = default;
};

/// Per-window tissue flags in extract_grid order.
inline std::vector<bool> tissue_mask(const SlideRaster& slide, std::span<const PatchWindow> windows,
                                     const TilingConfig& cfg, int workers = 1) {
  std::vector<char> flags(windows.size(), 0);
  std::vector<RgbImage> buffers(static_cast<std::size_t>(resolve_workers(workers)));
  parallel_for(windows.size(), workers, [&](int worker, std::size_t i) {
    auto& buf = buffers[static_cast<std::size_t>(worker)];
    const auto& w = windows[i];
    slide.read_region(w.x, w.y, w.side_px, w.side_px, buf);
    flags[i] = is_tissue(buf, cfg) ? 1 : 0;
  });
  return {flags.begin(), flags.end()};
}

/// Tissue patch count and the area those patches cover.
inline SlideStats slide_stats(const SlideRaster& slide, const TilingConfig& cfg, int workers = 1) {
  const auto windows = extract_grid(slide, cfg);
  const auto mask = tissue_mask(slide, windows, cfg, workers);
  SlideStats s;
  s.tissue_patch_count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  s.tissue_area_px = static_cast<std::uint64_t>(s.tissue_patch_count) *
                     static_cast<std::uint64_t>(cfg.side_px) * static_cast<std::uint64_t>(cfg.side_px);
  return s;
}

/// Box-filter downsample by an integer factor; trailing pixels that do not
/// fill a whole block are dropped. Output is at least 1x1.
inline RgbImage downsample(const RgbImage& src, int factor) {
  if (factor < 1) throw InvalidArgument("downsample factor must be >= 1");
  if (factor == 1) return src;
  const int ow = std::max(1, src.width() / factor);
  const int oh = std::max(1, src.height() / factor);
  const int bw = std::min(factor, src.width());
  const int bh = std::min(factor, src.height());
  RgbImage out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      std::uint32_t r = 0, g = 0, b = 0;
      for (int y = oy * factor; y < oy * factor + bh; ++y) {
        for (int x = ox * factor; x < ox * factor + bw; ++x) {
          const Rgb& p = src.at(x, y);
          r += p.r;
          g += p.g;
          b += p.b;
        }
      }
      const std::uint32_t n = static_cast<std::uint32_t>(bw * bh);
      out.at(ox, oy) = {static_cast<std::uint8_t>((r + n / 2) / n), static_cast<std::uint8_t>((g + n / 2) / n),
                        static_cast<std::uint8_t>((b + n / 2) / n)};
    }
  }
  return out;
}

} // namespace polypath
