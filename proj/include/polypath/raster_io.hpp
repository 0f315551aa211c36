#pragma once

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "json.hpp"
#include "polypath/error.hpp"
#include "polypath/image.hpp"
#include "polypath/wsi.hpp"

namespace polypath {

namespace fs = std::filesystem;

inline RgbImage from_bgr(const cv::Mat& bgr) {
  if (bgr.empty() || bgr.type() != CV_8UC3) throw IoError("expected a non-empty 8-bit 3-channel image");
  RgbImage img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* src = bgr.ptr<cv::Vec3b>(y);
    auto dst = img.row(y);
    for (int x = 0; x < bgr.cols; ++x) dst[static_cast<std::size_t>(x)] = {src[x][2], src[x][1], src[x][0]};
  }
  return img;
}

inline cv::Mat to_bgr(const RgbImage& img) {
  cv::Mat bgr(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* dst = bgr.ptr<cv::Vec3b>(y);
    auto src = img.row(y);
    for (int x = 0; x < img.width(); ++x) {
      const Rgb& p = src[static_cast<std::size_t>(x)];
      dst[x] = cv::Vec3b(p.b, p.g, p.r);
    }
  }
  return bgr;
}

/// Reads a PNG, JPEG or TIFF file as 8-bit RGB.
inline RgbImage read_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image '" + path.string() + "'");
  return from_bgr(bgr);
}

inline void write_png(const RgbImage& img, const fs::path& path) {
  if (img.empty()) throw IoError("refusing to write an empty image to '" + path.string() + "'");
  // Fixed compression keeps output bytes stable across runs.
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), to_bgr(img), params)) throw IoError("cannot write '" + path.string() + "'");
}

/// Optional per-slide metadata stored next to the raster.
struct SlideMetadata {
  std::optional<std::string> slide_id;
  double microns_per_pixel = 0.25;
  int downsample = 1;
};

inline SlideMetadata read_sidecar(const fs::path& path) {
  SlideMetadata meta;
  std::ifstream in(path);
  if (!in) return meta;
  nlohmann::json j;
  try {
    in >> j;
    if (j.contains("slide_id")) meta.slide_id = j.at("slide_id").get<std::string>();
    if (j.contains("microns_per_pixel")) meta.microns_per_pixel = j.at("microns_per_pixel").get<double>();
    if (j.contains("downsample")) meta.downsample = j.at("downsample").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad sidecar '" + path.string() + "': " + e.what());
  }
  if (!(meta.microns_per_pixel > 0.0)) throw IoError("sidecar '" + path.string() + "': microns_per_pixel must be > 0");
  if (meta.downsample < 1) throw IoError("sidecar '" + path.string() + "': downsample must be >= 1");
  return meta;
}

/// Sidecar location: `<stem>.json` beside a file, `slide.json` inside a tile directory.
inline fs::path sidecar_path(const fs::path& raster) {
  if (fs::is_directory(raster)) return raster / "slide.json";
  fs::path p = raster;
  return p.replace_extension(".json");
}

/// Slide stored as a directory of `tile_{row}_{col}.png` files forming a
/// complete grid. Tiles share a width per column and a height per row and
/// are loaded on demand through a small cache.
class TiledDirectorySource final : public PixelSource {
public:
  explicit TiledDirectorySource(fs::path dir, int downsample = 1, std::size_t cache_tiles = 64)
      : dir_(std::move(dir)), downsample_(downsample), capacity_(std::max<std::size_t>(1, cache_tiles)) {
    if (downsample_ < 1) throw InvalidArgument("downsample must be >= 1");
    static const std::regex pattern(R"(tile_(\d+)_(\d+)\.png)");
    int rows = 0, cols = 0;
    std::size_t found = 0;
    for (const auto& entry : fs::directory_iterator(dir_)) {
      std::smatch m;
      const std::string fname = entry.path().filename().string();
      if (!std::regex_match(fname, m, pattern)) continue;
      rows = std::max(rows, std::stoi(m[1]) + 1);
      cols = std::max(cols, std::stoi(m[2]) + 1);
      ++found;
    }
    if (found == 0) throw IoError("no tile_{row}_{col}.png files in '" + dir_.string() + "'");
    if (found != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
      throw IoError("tile grid in '" + dir_.string() + "' is incomplete");

    for (int c = 0; c < cols; ++c) col_w_.push_back(load_tile(0, c).width());
    for (int r = 0; r < rows; ++r) row_h_.push_back(load_tile(r, 0).height());
    col_x_.push_back(0);
    for (int w : col_w_) col_x_.push_back(col_x_.back() + w);
    row_y_.push_back(0);
    for (int h : row_h_) row_y_.push_back(row_y_.back() + h);
    ready_ = true;
  }

  int width() const override { return col_x_.back(); }
  int height() const override { return row_y_.back(); }

  void read_region(int x, int y, int w, int h, std::span<Rgb> out) const override {
    const int r0 = locate(row_y_, y), r1 = locate(row_y_, y + h - 1);
    const int c0 = locate(col_x_, x), c1 = locate(col_x_, x + w - 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        auto tile = cached(r, c);
        const int tx0 = std::max(x, col_x_[c]), tx1 = std::min(x + w, col_x_[c + 1]);
        const int ty0 = std::max(y, row_y_[r]), ty1 = std::min(y + h, row_y_[r + 1]);
        for (int py = ty0; py < ty1; ++py) {
          auto src = tile->row(py - row_y_[r]);
          std::copy(src.begin() + (tx0 - col_x_[c]), src.begin() + (tx1 - col_x_[c]),
                    out.begin() + static_cast<std::ptrdiff_t>(py - y) * w + (tx0 - x));
        }
      }
    }
  }

private:
  static int locate(const std::vector<int>& starts, int v) {
    auto it = std::upper_bound(starts.begin(), starts.end(), v);
    return static_cast<int>(it - starts.begin()) - 1;
  }

  RgbImage load_tile(int r, int c) const {
    const fs::path p = dir_ / ("tile_" + std::to_string(r) + "_" + std::to_string(c) + ".png");
    RgbImage img = read_image(p);
    if (downsample_ > 1) img = downsample(img, downsample_);
    if (ready_ && (img.width() != col_w_[static_cast<std::size_t>(c)] ||
                            img.height() != row_h_[static_cast<std::size_t>(r)]))
      throw IoError("tile '" + p.string() + "' does not match its row/column size");
    return img;
  }

  std::shared_ptr<const RgbImage> cached(int r, int c) const {
    const auto key = std::make_pair(r, c);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto tile = std::make_shared<const RgbImage>(load_tile(r, c));
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (cache_.size() >= capacity_) {
      cache_.erase(order_.front());
      order_.pop_front();
    }
    cache_.emplace(key, tile);
    order_.push_back(key);
    return tile;
  }

  fs::path dir_;
  int downsample_;
  std::size_t capacity_;
  std::vector<int> col_w_, row_h_, col_x_, row_y_;
  bool ready_ = false;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const RgbImage>> cache_;
  mutable std::deque<std::pair<int, int>> order_;
};

/// Loads a slide from an image file or a tile directory. Sidecar metadata
/// supplies the id, resolution and downsample factor; explicit arguments
/// override it. Resolution is scaled by the downsample factor.
inline SlideRaster load_slide(const fs::path& path, std::optional<std::string> slide_id = std::nullopt,
                              std::optional<int> downsample_override = std::nullopt) {
  if (!fs::exists(path)) throw IoError("slide path '" + path.string() + "' does not exist");
  SlideMetadata meta = read_sidecar(sidecar_path(path));
  const int factor = downsample_override.value_or(meta.downsample);
  if (factor < 1) throw InvalidArgument("downsample must be >= 1");
  std::string id = slide_id ? *slide_id : meta.slide_id.value_or(path.stem().string());
  const double mpp = meta.microns_per_pixel * factor;
  if (fs::is_directory(path))
    return SlideRaster(std::move(id), std::make_shared<TiledDirectorySource>(path, factor), mpp);
  RgbImage img = read_image(path);
  if (factor > 1) img = downsample(img, factor);
  return SlideRaster(std::move(id), std::move(img), mpp);
}

} // namespace polypath
