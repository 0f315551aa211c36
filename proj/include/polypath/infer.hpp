#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "polypath/classify.hpp"
#include "polypath/error.hpp"
#include "polypath/labels.hpp"
#include "polypath/rounding.hpp"

namespace polypath {

/// Decision thresholds of the hierarchical slide rule.
struct ThresholdConfig {
  /// TVA is diagnosed when the TVA fraction is strictly above this.
  double villous_threshold = 0.30;
  /// SSA is diagnosed when the SSA fraction is strictly above this.
  double ssa_threshold = 0.015;
  /// Patches whose top probability is below this are not counted.
  double confidence_floor = 0.0;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(villous_threshold)) throw InvalidArgument("villous_threshold must be in [0,1]");
    if (!unit(ssa_threshold)) throw InvalidArgument("ssa_threshold must be in [0,1]");
    if (!unit(confidence_floor)) throw InvalidArgument("confidence_floor must be in [0,1]");
  }

  friend bool operator==(const ThresholdConfig&, const ThresholdConfig&) = default;
};

/// Per-label patch counts for one slide. Fractions are taken over all
/// non-NORM patches.
struct SlideSummary {
  std::string slide_id;
  std::array<std::uint64_t, kNumLabels> counts{};

  std::uint64_t count(PolypLabel l) const { return counts[index(l)]; }
  std::uint64_t count(Diagnosis d) const { return counts[index(d)]; }

  std::uint64_t tissue_total() const {
    std::uint64_t t = 0;
    for (auto d : kAllDiagnoses) t += count(d);
    return t;
  }

  /// Undefined (nullopt) when there are no non-NORM patches.
  std::optional<double> fraction(Diagnosis d) const {
    const auto total = tissue_total();
    if (total == 0) return std::nullopt;
    return static_cast<double>(count(d)) / static_cast<double>(total);
  }

  std::optional<std::array<double, kNumDiagnoses>> fractions() const {
    if (tissue_total() == 0) return std::nullopt;
    std::array<double, kNumDiagnoses> f{};
    for (auto d : kAllDiagnoses) f[index(d)] = *fraction(d);
    return f;
  }

  friend bool operator==(const SlideSummary&, const SlideSummary&) = default;
};

/// Counts each prediction under its argmax label (ties resolved in label
/// order) when its top probability reaches the confidence floor.
inline SlideSummary summarize(std::span<const PatchPrediction> preds, const ThresholdConfig& thr,
                              std::string slide_id = {}) {
  SlideSummary s;
  s.slide_id = std::move(slide_id);
  for (const auto& p : preds) {
    if (p.probs.max() < thr.confidence_floor) continue;
    ++s.counts[index(p.probs.argmax())];
  }
  return s;
}

/// Hierarchical slide diagnosis: adenomatous vs serrated by patch majority
/// (ties go adenomatous), then TVA/TA by the villous fraction or SSA/HP by
/// the sessile-serrated fraction.
inline Diagnosis diagnose(const SlideSummary& summary, const ThresholdConfig& thr) {
  const auto total = summary.tissue_total();
  if (total == 0) throw NoTissue("slide '" + summary.slide_id + "' has no non-NORM patches");
  const auto adenomatous = summary.count(Diagnosis::TA) + summary.count(Diagnosis::TVA);
  const auto serrated = summary.count(Diagnosis::HP) + summary.count(Diagnosis::SSA);
  if (adenomatous >= serrated)
    return *summary.fraction(Diagnosis::TVA) > thr.villous_threshold ? Diagnosis::TVA : Diagnosis::TA;
  return *summary.fraction(Diagnosis::SSA) > thr.ssa_threshold ? Diagnosis::SSA : Diagnosis::HP;
}

/// Fractions as percentages rounded to one decimal, in TA, TVA, HP, SSA order.
inline std::array<double, kNumDiagnoses> percentage_area_row(const SlideSummary& summary) {
  const auto f = summary.fractions();
  if (!f) throw NoTissue("slide '" + summary.slide_id + "' has no non-NORM patches");
  std::array<double, kNumDiagnoses> row{};
  for (std::size_t i = 0; i < kNumDiagnoses; ++i) row[i] = round_half_away((*f)[i] * 100.0, 1);
  return row;
}

} // namespace polypath
