#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polypath/error.hpp"
#include "polypath/image.hpp"
#include "polypath/labels.hpp"
#include "polypath/parallel.hpp"
#include "polypath/wsi.hpp"

namespace polypath {

/// Probability distribution over the five patch labels.
class ProbVector {
public:
  static constexpr double kSumTolerance = 1e-6;

  ProbVector() = default;

  /// Validates entries in [0,1] summing to 1 within kSumTolerance.
  explicit ProbVector(const std::array<double, kNumLabels>& p) : p_(p) {
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("probability entry outside [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) throw InvalidArgument("probabilities do not sum to 1");
  }

  /// Divides non-negative weights by their sum.
  static ProbVector normalized(const std::array<double, kNumLabels>& weights) {
    double sum = 0.0;
    for (double v : weights) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("weights must be finite and non-negative");
      sum += v;
    }
    if (!(sum > 0.0)) throw InvalidArgument("weights sum to zero");
    std::array<double, kNumLabels> p{};
    for (std::size_t i = 0; i < kNumLabels; ++i) p[i] = weights[i] / sum;
    return ProbVector(p);
  }

  double operator[](PolypLabel l) const { return p_[index(l)]; }
  const std::array<double, kNumLabels>& values() const { return p_; }

  /// First label (in TA, TVA, HP, SSA, NORM order) attaining the maximum.
  PolypLabel argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < kNumLabels; ++i)
      if (p_[i] > p_[best]) best = i;
    return static_cast<PolypLabel>(best);
  }

  double max() const { return *std::max_element(p_.begin(), p_.end()); }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

private:
  std::array<double, kNumLabels> p_{1.0, 0.0, 0.0, 0.0, 0.0};
};

struct PatchPrediction {
  PatchWindow window;
  ProbVector probs;

  friend bool operator==(const PatchPrediction&, const PatchPrediction&) = default;
};

/// Patch classifier contract. Instances need not be thread-safe; the
/// pipeline creates one per worker through a ClassifierFactory.
class PatchClassifier {
public:
  virtual ~PatchClassifier() = default;

  /// Side length of the square patches this classifier accepts.
  virtual int side_px() const = 0;

  ProbVector predict(const RgbImage& patch) const {
    if (patch.width() != side_px() || patch.height() != side_px())
      throw BadPatchShape("patch is " + std::to_string(patch.width()) + "x" + std::to_string(patch.height()) +
                          ", classifier expects " + std::to_string(side_px()) + "x" + std::to_string(side_px()));
    return do_predict(patch);
  }

protected:
  virtual ProbVector do_predict(const RgbImage& patch) const = 0;
};

using ClassifierFactory = std::function<std::unique_ptr<PatchClassifier>()>;

/// Reference colors used by the synthetic oracle and the heatmap palette.
inline constexpr std::array<Rgb, kNumLabels> kReferenceColors = {
    Rgb{60, 160, 60},   // TA
    Rgb{60, 60, 200},   // TVA
    Rgb{220, 200, 60},  // HP
    Rgb{200, 60, 60},   // SSA
    Rgb{255, 255, 255}, // NORM
};

/// Deterministic stand-in for a trained network: labels a patch by the
/// reference color nearest (Euclidean, RGB) to its mean color and puts 0.9
/// of the mass on that label, 0.025 on each of the others.
class SyntheticOracle final : public PatchClassifier {
public:
  static constexpr double kWinnerMass = 0.9;
  static constexpr double kOtherMass = 0.025;

  explicit SyntheticOracle(int side_px = 224) : side_(side_px) {
    if (side_px < 1) throw InvalidArgument("side_px must be >= 1");
  }

  int side_px() const override { return side_; }

  static PolypLabel nearest_label(double r, double g, double b) {
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      const auto& c = kReferenceColors[i];
      const double dr = r - c.r, dg = g - c.g, db = b - c.b;
      const double d = dr * dr + dg * dg + db * db;
      if (i == 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    return static_cast<PolypLabel>(best);
  }

  static ProbVector peaked(PolypLabel winner) {
    std::array<double, kNumLabels> p;
    p.fill(kOtherMass);
    p[index(winner)] = kWinnerMass;
    return ProbVector(p);
  }

protected:
  ProbVector do_predict(const RgbImage& patch) const override {
    std::uint64_t r = 0, g = 0, b = 0;
    for (const Rgb& p : patch.pixels()) {
      r += p.r;
      g += p.g;
      b += p.b;
    }
    const double n = static_cast<double>(patch.pixels().size());
    return peaked(nearest_label(static_cast<double>(r) / n, static_cast<double>(g) / n,
                                static_cast<double>(b) / n));
  }

private:
  int side_;
};

/// Mean of member distributions, renormalized. Each label's contributions
/// are summed in sorted order, which makes the result bit-identical under
/// any permutation of the members.
inline ProbVector average_probs(std::span<const ProbVector> members) {
  if (members.empty()) throw EmptyEnsemble("ensemble has no members");
  std::array<double, kNumLabels> mean{};
  std::vector<double> column(members.size());
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    for (std::size_t m = 0; m < members.size(); ++m) column[m] = members[m].values()[l];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    mean[l] = sum / static_cast<double>(members.size());
  }
  return ProbVector::normalized(mean);
}

inline ProbVector ensemble_predict(std::span<const PatchClassifier* const> backends, const RgbImage& patch) {
  if (backends.empty()) throw EmptyEnsemble("ensemble has no members");
  std::vector<ProbVector> outputs;
  outputs.reserve(backends.size());
  for (const PatchClassifier* b : backends) outputs.push_back(b->predict(patch));
  return average_probs(outputs);
}

/// A classifier made of several members sharing one patch size.
class Ensemble final : public PatchClassifier {
public:
  explicit Ensemble(std::vector<std::unique_ptr<PatchClassifier>> members) : members_(std::move(members)) {
    if (members_.empty()) throw EmptyEnsemble("ensemble has no members");
    for (const auto& m : members_) {
      if (!m) throw InvalidArgument("null ensemble member");
      if (m->side_px() != members_.front()->side_px())
        throw InvalidArgument("ensemble members disagree on patch size");
      views_.push_back(m.get());
    }
  }

  int side_px() const override { return members_.front()->side_px(); }
  std::size_t size() const { return members_.size(); }

protected:
  ProbVector do_predict(const RgbImage& patch) const override { return ensemble_predict(views_, patch); }

private:
  std::vector<std::unique_ptr<PatchClassifier>> members_;
  std::vector<const PatchClassifier*> views_;
};

/// Tiles the slide, drops non-tissue windows and classifies the rest.
/// Output is in raster order (y, then x) and does not depend on `workers`.
inline std::vector<PatchPrediction> classify_slide(const SlideRaster& slide, const TilingConfig& cfg,
                                                   const ClassifierFactory& factory, int workers = 1) {
  const auto windows = extract_grid(slide, cfg);
  const int n_workers = resolve_workers(workers);

  std::vector<std::unique_ptr<PatchClassifier>> backends(static_cast<std::size_t>(n_workers));
  std::vector<RgbImage> buffers(static_cast<std::size_t>(n_workers));
  std::vector<std::optional<ProbVector>> slots(windows.size());

  parallel_for(windows.size(), n_workers, [&](int worker, std::size_t i) {
    auto& backend = backends[static_cast<std::size_t>(worker)];
    if (!backend) {
      backend = factory();
      if (!backend) throw BackendFailure("classifier factory returned no backend");
    }
    auto& buf = buffers[static_cast<std::size_t>(worker)];
    const auto& w = windows[i];
    slide.read_region(w.x, w.y, w.side_px, w.side_px, buf);
    if (is_tissue(buf, cfg)) slots[i] = backend->predict(buf);
  });

  std::vector<PatchPrediction> out;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (slots[i]) out.push_back({windows[i], *slots[i]});
  return out;
}

/// Convenience overload for classifiers that are safe to share (e.g. the
/// synthetic oracle).
inline std::vector<PatchPrediction> classify_slide(const SlideRaster& slide, const TilingConfig& cfg,
                                                   const PatchClassifier& shared, int workers = 1) {
  struct Borrowed final : PatchClassifier {
    const PatchClassifier* inner;
    explicit Borrowed(const PatchClassifier* p) : inner(p) {}
    int side_px() const override { return inner->side_px(); }
    ProbVector do_predict(const RgbImage& patch) const override { return inner->predict(patch); }
  };
  return classify_slide(slide, cfg, [&] { return std::make_unique<Borrowed>(&shared); }, workers);
}

} // namespace polypath
