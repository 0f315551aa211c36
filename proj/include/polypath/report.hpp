#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

#include "polypath/classify.hpp"
#include "polypath/error.hpp"
#include "polypath/image.hpp"
#include "polypath/infer.hpp"
#include "polypath/rounding.hpp"
#include "polypath/wsi.hpp"

namespace polypath {

/// Heatmap encoding. Each tissue patch is tinted with its argmax class color;
/// opacity grows linearly with the top probability.
struct OverlaySpec {
  std::array<Rgb, kNumDiagnoses> class_colors = {
      Rgb{60, 160, 60}, Rgb{60, 60, 200}, Rgb{220, 200, 60}, Rgb{200, 60, 60}};
  double prob_low = 0.2;
  double prob_high = 1.0;
  double opacity_low = 0.2;
  double opacity_high = 0.8;
  int downsample = 16;

  void validate() const {
    if (downsample < 1) throw InvalidArgument("downsample must be >= 1");
    if (!(prob_high > prob_low)) throw InvalidArgument("probability range is empty");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(opacity_low) || !unit(opacity_high)) throw InvalidArgument("opacity must be in [0,1]");
  }

  /// Clamped linear map from [prob_low, prob_high] to [opacity_low, opacity_high].
  double opacity(double max_prob) const {
    const double t = std::clamp((max_prob - prob_low) / (prob_high - prob_low), 0.0, 1.0);
    return std::lerp(opacity_low, opacity_high, t);
  }
};

namespace detail {

inline std::uint8_t blend_channel(std::uint8_t base, std::uint8_t tint, double alpha) {
  const double v = (1.0 - alpha) * base + alpha * tint;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

} // namespace detail

/// Downsampled slide with every predicted patch tinted by its class color.
/// An output pixel belongs to a patch when the center of its source block
/// falls inside the window; with overlapping windows the later one in
/// raster order wins. NORM patches and background stay untinted.
inline RgbImage render_heatmap(const SlideRaster& slide, std::span<const PatchPrediction> preds,
                               const OverlaySpec& spec = {}) {
  spec.validate();
  for (const auto& p : preds) {
    const auto& w = p.window;
    if (w.x < 0 || w.y < 0 || w.side_px < 1 || w.x + w.side_px > slide.width() || w.y + w.side_px > slide.height())
      throw WindowOutOfBounds("prediction window (" + std::to_string(w.x) + "," + std::to_string(w.y) +
                              ") lies outside slide '" + slide.slide_id() + "'");
  }

  const int f = spec.downsample;
  const int ow = std::max(1, slide.width() / f);
  const int oh = std::max(1, slide.height() / f);
  RgbImage out(ow, oh);
  {
    // Box-average one band of source rows at a time to bound memory.
    RgbImage band;
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy * f;
      const int bh = std::min(f, slide.height() - y0);
      slide.read_region(0, y0, slide.width(), bh, band);
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox * f;
        const int x1 = std::min(x0 + f, slide.width());
        std::uint32_t r = 0, g = 0, b = 0;
        for (int y = 0; y < bh; ++y) {
          for (int x = x0; x < x1; ++x) {
            const Rgb& px = band.at(x, y);
            r += px.r;
            g += px.g;
            b += px.b;
          }
        }
        const auto n = static_cast<std::uint32_t>((x1 - x0) * bh);
        out.at(ox, oy) = {static_cast<std::uint8_t>((r + n / 2) / n), static_cast<std::uint8_t>((g + n / 2) / n),
                          static_cast<std::uint8_t>((b + n / 2) / n)};
      }
    }
  }

  for (const auto& p : preds) {
    const auto label = p.probs.argmax();
    const auto dx = to_diagnosis(label);
    if (!dx) continue;
    const Rgb tint = spec.class_colors[index(*dx)];
    const double alpha = spec.opacity(p.probs.max());
    const auto& w = p.window;
    // Output pixels whose block center (o*f + f/2) lies in [start, start+side).
    auto first = [f](int start) { return std::max(0, (start - f / 2 + f - 1) / f); };
    const int x0 = first(w.x), x1 = std::min(ow, first(w.x + w.side_px));
    const int y0 = first(w.y), y1 = std::min(oh, first(w.y + w.side_px));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        Rgb& px = out.at(x, y);
        px = {detail::blend_channel(px.r, tint.r, alpha), detail::blend_channel(px.g, tint.g, alpha),
              detail::blend_channel(px.b, tint.b, alpha)};
      }
    }
  }
  return out;
}

inline constexpr const char* kPercentageAreasHeader = "slide_id,diagnosis,TA,TVA,HP,SSA";
inline constexpr const char* kSlideStatsHeader = "slide_id,width_px,height_px,tissue_patch_count,tissue_area_px";

/// Writes one CSV row per summary, in input order, with LF line endings.
inline void emit_percentage_areas(std::ostream& os, std::span<const SlideSummary> summaries,
                                  const ThresholdConfig& thr = {}) {
  os << kPercentageAreasHeader << '\n';
  for (const auto& s : summaries) {
    const auto row = percentage_area_row(s);
    os << s.slide_id << ',' << name(diagnose(s, thr));
    for (double v : row) os << ',' << format_fixed(v, 1);
    os << '\n';
  }
}

inline std::string percentage_areas_csv(std::span<const SlideSummary> summaries, const ThresholdConfig& thr = {}) {
  std::ostringstream os;
  emit_percentage_areas(os, summaries, thr);
  return os.str();
}

struct SlideStatsRow {
  std::string slide_id;
  int width_px = 0;
  int height_px = 0;
  SlideStats stats;
};

inline void emit_slide_stats(std::ostream& os, std::span<const SlideStatsRow> rows) {
  os << kSlideStatsHeader << '\n';
  for (const auto& r : rows)
    os << r.slide_id << ',' << r.width_px << ',' << r.height_px << ',' << r.stats.tissue_patch_count << ','
       << r.stats.tissue_area_px << '\n';
}

} // namespace polypath
