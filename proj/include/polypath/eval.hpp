#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polypath/error.hpp"
#include "polypath/labels.hpp"

namespace polypath {

inline constexpr std::size_t kPanelSize = 5;
inline constexpr double kZ95 = 1.96;

// ---------------------------------------------------------------------------
// Gold standard

/// Label holding at least three of five votes; nullopt on a 2-2-1 split.
inline std::optional<Diagnosis> majority_vote(std::span<const Diagnosis> votes) {
  if (votes.size() != kPanelSize)
    throw WrongPanelSize("majority vote needs exactly 5 votes, got " + std::to_string(votes.size()));
  std::array<int, kNumDiagnoses> tally{};
  for (auto v : votes) ++tally[index(v)];
  for (auto d : kAllDiagnoses)
    if (tally[index(d)] >= 3) return d;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Per-class metrics

struct OneVsRestCounts {
  std::uint64_t tp = 0, fn = 0, fp = 0, tn = 0;
  std::uint64_t n() const { return tp + fn + fp + tn; }
  friend bool operator==(const OneVsRestCounts&, const OneVsRestCounts&) = default;
};

/// One-vs-rest accuracy, sensitivity and specificity. A metric whose
/// denominator is zero is absent rather than zero.
struct ClassMetrics {
  Diagnosis label = Diagnosis::TA;
  OneVsRestCounts counts;
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;

  std::uint64_t n() const { return counts.n(); }
};

inline ClassMetrics metrics_from_counts(Diagnosis label, const OneVsRestCounts& c) {
  if (c.n() == 0) throw InvalidArgument("metrics need at least one case");
  ClassMetrics m;
  m.label = label;
  m.counts = c;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.n());
  if (c.tp + c.fn > 0) m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return m;
}

inline void check_paired(std::size_t a, std::size_t b) {
  if (a != b) throw LengthMismatch("paired label lists differ in length (" + std::to_string(a) + " vs " +
                                   std::to_string(b) + ")");
  if (a == 0) throw InvalidArgument("paired label lists are empty");
}

inline OneVsRestCounts one_vs_rest(std::span<const Diagnosis> pred, std::span<const Diagnosis> gold,
                                   Diagnosis label) {
  check_paired(pred.size(), gold.size());
  OneVsRestCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == label, g = gold[i] == label;
    if (p && g) ++c.tp;
    else if (!p && g) ++c.fn;
    else if (p && !g) ++c.fp;
    else ++c.tn;
  }
  return c;
}

inline ClassMetrics per_class_metrics(std::span<const Diagnosis> pred, std::span<const Diagnosis> gold,
                                      Diagnosis label) {
  return metrics_from_counts(label, one_vs_rest(pred, gold, label));
}

/// Unweighted mean of the four per-class accuracies.
inline double mean_accuracy(std::span<const double> accuracies) {
  if (accuracies.size() != kNumDiagnoses)
    throw WrongArity("mean accuracy needs exactly 4 class accuracies, got " + std::to_string(accuracies.size()));
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  return sum / static_cast<double>(kNumDiagnoses);
}

inline double mean_accuracy(std::span<const ClassMetrics> per_class) {
  if (per_class.size() != kNumDiagnoses)
    throw WrongArity("mean accuracy needs exactly 4 class metrics, got " + std::to_string(per_class.size()));
  std::array<double, kNumDiagnoses> acc{};
  for (std::size_t i = 0; i < kNumDiagnoses; ++i) acc[i] = per_class[i].accuracy;
  return mean_accuracy(acc);
}

// ---------------------------------------------------------------------------
// Intervals and tests

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool contains(double v) const { return low <= v && v <= high; }
  double width() const { return high - low; }
};

inline void check_proportion(double p, std::uint64_t n) {
  if (!(p >= 0.0 && p <= 1.0)) throw BadProportion("proportion " + std::to_string(p) + " outside [0,1]");
  if (n < 1) throw BadProportion("sample size must be >= 1");
}

/// Normal-approximation (Wald) 95% interval, clamped to [0,1].
inline Interval wald_ci(double p, std::uint64_t n) {
  check_proportion(p, n);
  const double half = kZ95 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Two-tailed p-value of the pooled two-proportion z-test.
inline double two_proportion_test(double p1, std::uint64_t n1, double p2, std::uint64_t n2) {
  check_proportion(p1, n1);
  check_proportion(p2, n2);
  if (p1 == p2) return 1.0;
  const double a = static_cast<double>(n1), b = static_cast<double>(n2);
  const double pooled = (p1 * a + p2 * b) / (a + b);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / a + 1.0 / b));
  const double z = std::abs(p1 - p2) / se;
  return std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
}

// ---------------------------------------------------------------------------
// Agreement

/// Multi-class Cohen's kappa with marginal-product chance agreement.
inline double cohens_kappa(std::span<const Diagnosis> a, std::span<const Diagnosis> b) {
  check_paired(a.size(), b.size());
  const double n = static_cast<double>(a.size());
  std::array<double, kNumDiagnoses> ma{}, mb{};
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma[index(a[i])] += 1.0;
    mb[index(b[i])] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (std::size_t k = 0; k < kNumDiagnoses; ++k) pe += (ma[k] / n) * (mb[k] / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

struct PanelCase {
  std::string slide_id;
  std::optional<Diagnosis> local_dx;
  std::array<Diagnosis, kPanelSize> rater_dx{};
};

using RaterPanel = std::vector<PanelCase>;

struct PairKappa {
  std::size_t rater_a = 0;
  std::size_t rater_b = 0;
  double kappa = 0.0;
};

struct KappaStat {
  std::vector<PairKappa> pairwise;
  double mean = 0.0;
  Interval ci;
};

/// Kappa for each of the ten rater pairs, their mean, and a normal
/// interval mean +/- 1.96 * sd / sqrt(10) with the sample sd of the pairs.
inline KappaStat panel_kappa(const RaterPanel& panel) {
  if (panel.size() < 2) throw InvalidArgument("panel kappa needs at least 2 slides");
  std::array<std::vector<Diagnosis>, kPanelSize> columns;
  for (auto& c : columns) c.reserve(panel.size());
  for (const auto& row : panel)
    for (std::size_t r = 0; r < kPanelSize; ++r) columns[r].push_back(row.rater_dx[r]);

  KappaStat ks;
  for (std::size_t i = 0; i < kPanelSize; ++i)
    for (std::size_t j = i + 1; j < kPanelSize; ++j)
      ks.pairwise.push_back({i, j, cohens_kappa(columns[i], columns[j])});

  const double m = static_cast<double>(ks.pairwise.size());
  double sum = 0.0;
  for (const auto& p : ks.pairwise) sum += p.kappa;
  ks.mean = sum / m;
  double ss = 0.0;
  for (const auto& p : ks.pairwise) ss += (p.kappa - ks.mean) * (p.kappa - ks.mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  const double half = kZ95 * sd / std::sqrt(m);
  ks.ci = {ks.mean - half, ks.mean + half};
  return ks;
}

// ---------------------------------------------------------------------------
// Confusion matrices

/// Rows are gold labels, columns predicted labels.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumDiagnoses>, kNumDiagnoses> counts{};

  std::uint64_t row_total(Diagnosis gold) const {
    std::uint64_t t = 0;
    for (auto v : counts[index(gold)]) t += v;
    return t;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto d : kAllDiagnoses) t += row_total(d);
    return t;
  }

  /// Row-normalized percentages; absent for a gold label with no cases.
  std::optional<std::array<double, kNumDiagnoses>> row_percentages(Diagnosis gold) const {
    const auto t = row_total(gold);
    if (t == 0) return std::nullopt;
    std::array<double, kNumDiagnoses> row{};
    for (std::size_t k = 0; k < kNumDiagnoses; ++k)
      row[k] = 100.0 * static_cast<double>(counts[index(gold)][k]) / static_cast<double>(t);
    return row;
  }

  OneVsRestCounts one_vs_rest(Diagnosis label) const {
    OneVsRestCounts c;
    const auto l = index(label);
    for (std::size_t g = 0; g < kNumDiagnoses; ++g) {
      for (std::size_t p = 0; p < kNumDiagnoses; ++p) {
        const auto v = counts[g][p];
        if (g == l && p == l) c.tp += v;
        else if (g == l) c.fn += v;
        else if (p == l) c.fp += v;
        else c.tn += v;
      }
    }
    return c;
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const Diagnosis> pred, std::span<const Diagnosis> gold) {
  if (pred.size() != gold.size())
    throw LengthMismatch("paired label lists differ in length (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(gold.size()) + ")");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm.counts[index(gold[i])][index(pred[i])];
  return cm;
}

// ---------------------------------------------------------------------------
// Evaluation report

struct MetricWithCi {
  double value = 0.0;
  Interval ci;
};

struct ClassReport {
  ClassMetrics metrics;
  Interval accuracy_ci;
  std::optional<Interval> sensitivity_ci;
  std::optional<Interval> specificity_ci;
};

/// Metrics of one diagnostician (the model or the local pathologist)
/// against the gold standard.
struct RaterReport {
  std::string name;
  std::uint64_t n = 0;
  std::vector<ClassReport> per_class;
  MetricWithCi mean_accuracy;
  std::optional<MetricWithCi> mean_sensitivity;
  std::optional<MetricWithCi> mean_specificity;
  ConfusionMatrix confusion;
};

struct PValues {
  double accuracy = 1.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

struct ExcludedSlide {
  std::string slide_id;
  std::string reason;
};

struct EvaluationReport {
  std::uint64_t n_slides = 0;
  RaterReport model;
  std::optional<RaterReport> local;
  std::optional<KappaStat> kappa;
  std::optional<PValues> p_values;
  std::vector<ExcludedSlide> excluded;
};

namespace detail {

inline std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t k = 0;
  for (const auto& x : xs)
    if (x) {
      sum += *x;
      ++k;
    }
  if (k == 0) return std::nullopt;
  return sum / static_cast<double>(k);
}

} // namespace detail

/// Scores one set of diagnoses. Accuracy intervals use n = cases; class
/// sensitivity/specificity intervals use the positive/negative counts; the
/// mean row uses n = cases.
inline RaterReport rate(std::string name, std::span<const Diagnosis> pred, std::span<const Diagnosis> gold) {
  check_paired(pred.size(), gold.size());
  RaterReport r;
  r.name = std::move(name);
  r.n = pred.size();
  r.confusion = confusion_matrix(pred, gold);
  std::vector<ClassMetrics> metrics;
  std::vector<std::optional<double>> sens, spec;
  for (auto d : kAllDiagnoses) {
    ClassReport cr;
    cr.metrics = per_class_metrics(pred, gold, d);
    const auto& c = cr.metrics.counts;
    cr.accuracy_ci = wald_ci(cr.metrics.accuracy, c.n());
    if (cr.metrics.sensitivity) cr.sensitivity_ci = wald_ci(*cr.metrics.sensitivity, c.tp + c.fn);
    if (cr.metrics.specificity) cr.specificity_ci = wald_ci(*cr.metrics.specificity, c.tn + c.fp);
    metrics.push_back(cr.metrics);
    sens.push_back(cr.metrics.sensitivity);
    spec.push_back(cr.metrics.specificity);
    r.per_class.push_back(cr);
  }
  const double acc = mean_accuracy(metrics);
  r.mean_accuracy = {acc, wald_ci(acc, r.n)};
  if (auto s = detail::mean_of_defined(sens)) r.mean_sensitivity = MetricWithCi{*s, wald_ci(*s, r.n)};
  if (auto s = detail::mean_of_defined(spec)) r.mean_specificity = MetricWithCi{*s, wald_ci(*s, r.n)};
  return r;
}

/// One slide's inputs to evaluation. A missing model diagnosis means the
/// pipeline failed on that slide.
struct EvaluationCase {
  std::string slide_id;
  std::optional<Diagnosis> model_dx;
  std::optional<Diagnosis> local_dx;
  std::array<Diagnosis, kPanelSize> rater_dx{};
};

/// Builds the full report. Slides with a split panel vote or without a
/// model diagnosis are excluded and listed. The local pathologist is
/// scored only when every included slide has a local diagnosis.
inline EvaluationReport evaluate(std::span<const EvaluationCase> cases) {
  EvaluationReport rep;
  std::vector<Diagnosis> gold, model, local;
  bool all_local = true;
  RaterPanel panel;
  for (const auto& c : cases) {
    panel.push_back({c.slide_id, c.local_dx, c.rater_dx});
    const auto g = majority_vote(c.rater_dx);
    if (!g) {
      rep.excluded.push_back({c.slide_id, "unresolved majority vote"});
      continue;
    }
    if (!c.model_dx) {
      rep.excluded.push_back({c.slide_id, "no model diagnosis"});
      continue;
    }
    gold.push_back(*g);
    model.push_back(*c.model_dx);
    if (c.local_dx) local.push_back(*c.local_dx);
    else all_local = false;
  }
  if (gold.empty()) throw EmptyDataset("no slides left to evaluate");
  rep.n_slides = gold.size();
  rep.model = rate("model", model, gold);
  if (all_local) {
    rep.local = rate("local", local, gold);
    PValues pv;
    pv.accuracy = two_proportion_test(rep.model.mean_accuracy.value, rep.n_slides, rep.local->mean_accuracy.value,
                                      rep.n_slides);
    if (rep.model.mean_sensitivity && rep.local->mean_sensitivity)
      pv.sensitivity = two_proportion_test(rep.model.mean_sensitivity->value, rep.n_slides,
                                           rep.local->mean_sensitivity->value, rep.n_slides);
    if (rep.model.mean_specificity && rep.local->mean_specificity)
      pv.specificity = two_proportion_test(rep.model.mean_specificity->value, rep.n_slides,
                                           rep.local->mean_specificity->value, rep.n_slides);
    rep.p_values = pv;
  }
  if (panel.size() >= 2) rep.kappa = panel_kappa(panel);
  return rep;
}

} // namespace polypath
