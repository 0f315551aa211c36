#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "polypath/error.hpp"
#include "polypath/eval.hpp"
#include "polypath/infer.hpp"
#include "polypath/parallel.hpp"

namespace polypath {

struct LabeledSummary {
  SlideSummary summary;
  Diagnosis gold = Diagnosis::TA;
};

/// Evenly spaced candidate values lo, lo+step, ..., up to hi inclusive.
struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.005;

  void validate() const {
    if (!(step > 0.0)) throw InvalidArgument("grid step must be positive");
    if (!(hi >= lo)) throw InvalidArgument("grid range is empty");
    if (lo < 0.0 || hi > 1.0) throw InvalidArgument("grid range must lie in [0,1]");
  }

  std::size_t size() const { return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1; }
  /// Snapped to 1e-12 so grid points equal their decimal literals (0.3, 0.015).
  double value(std::size_t i) const { return std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12; }
};

struct GridSpec {
  GridAxis villous{0.0, 1.0, 0.005};
  GridAxis ssa{0.0, 0.10, 0.001};
};

struct CalibrationResult {
  ThresholdConfig thresholds;
  double best_score = 0.0;
};

/// Unweighted mean of the four one-vs-rest class accuracies. Summed as
/// integer counts first so that equally good threshold pairs score
/// bit-identically and the tie-break stays exact.
inline double mean_class_accuracy(std::span<const Diagnosis> pred, std::span<const Diagnosis> gold) {
  check_paired(pred.size(), gold.size());
  std::uint64_t correct = 0;
  for (auto d : kAllDiagnoses) {
    const auto c = one_vs_rest(pred, gold, d);
    correct += c.tp + c.tn;
  }
  return static_cast<double>(correct) / static_cast<double>(kNumDiagnoses * gold.size());
}

/// Scores thresholds on a labeled dataset.
inline double score_thresholds(std::span<const LabeledSummary> data, const ThresholdConfig& thr) {
  std::vector<Diagnosis> pred, gold;
  pred.reserve(data.size());
  gold.reserve(data.size());
  for (const auto& d : data) {
    pred.push_back(diagnose(d.summary, thr));
    gold.push_back(d.gold);
  }
  return mean_class_accuracy(pred, gold);
}

/// Exhaustive joint search over both thresholds. Returns the grid point with
/// the highest mean class accuracy; among equal scores the smallest villous
/// threshold wins, then the smallest SSA threshold.
inline CalibrationResult grid_search(std::span<const LabeledSummary> data, const GridSpec& grid = {},
                                     int workers = 1) {
  if (data.empty()) throw EmptyDataset("grid search needs at least one labeled slide");
  grid.villous.validate();
  grid.ssa.validate();
  for (const auto& d : data)
    if (d.summary.tissue_total() == 0)
      throw NoTissue("slide '" + d.summary.slide_id + "' has no non-NORM patches");

  const std::size_t nv = grid.villous.size();
  const std::size_t ns = grid.ssa.size();

  // Best SSA index and score for each villous row; rows reduce in order.
  std::vector<std::pair<std::size_t, double>> row_best(nv);
  parallel_for(nv, workers, [&](int, std::size_t vi) {
    ThresholdConfig thr;
    thr.villous_threshold = grid.villous.value(vi);
    std::size_t best_s = 0;
    double best = -1.0;
    for (std::size_t si = 0; si < ns; ++si) {
      thr.ssa_threshold = grid.ssa.value(si);
      const double s = score_thresholds(data, thr);
      if (s > best) {
        best = s;
        best_s = si;
      }
    }
    row_best[vi] = {best_s, best};
  }, 1);

  std::size_t best_v = 0;
  for (std::size_t vi = 1; vi < nv; ++vi)
    if (row_best[vi].second > row_best[best_v].second) best_v = vi;

  CalibrationResult r;
  r.thresholds.villous_threshold = grid.villous.value(best_v);
  r.thresholds.ssa_threshold = grid.ssa.value(row_best[best_v].first);
  r.best_score = row_best[best_v].second;
  return r;
}

} // namespace polypath
