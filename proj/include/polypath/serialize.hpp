#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "polypath/calibrate.hpp"
#include "polypath/classify.hpp"
#include "polypath/eval.hpp"
#include "polypath/infer.hpp"
#include "polypath/wsi.hpp"

namespace polypath {

using json = nlohmann::ordered_json;

// ----- configs -------------------------------------------------------------

inline json to_json(const TilingConfig& c) {
  return {{"side_px", c.side_px},
          {"stride_px", c.stride_px},
          {"background_whiteness", c.background_whiteness},
          {"min_tissue_fraction", c.min_tissue_fraction}};
}

inline TilingConfig tiling_from_json(const json& j, TilingConfig c = {}) {
  c.side_px = j.value("side_px", c.side_px);
  c.stride_px = j.value("stride_px", c.stride_px);
  c.background_whiteness = j.value("background_whiteness", c.background_whiteness);
  c.min_tissue_fraction = j.value("min_tissue_fraction", c.min_tissue_fraction);
  c.validate();
  return c;
}

inline json to_json(const ThresholdConfig& t) {
  return {{"villous_threshold", t.villous_threshold},
          {"ssa_threshold", t.ssa_threshold},
          {"confidence_floor", t.confidence_floor}};
}

inline ThresholdConfig thresholds_from_json(const json& j, ThresholdConfig t = {}) {
  t.villous_threshold = j.value("villous_threshold", t.villous_threshold);
  t.ssa_threshold = j.value("ssa_threshold", t.ssa_threshold);
  t.confidence_floor = j.value("confidence_floor", t.confidence_floor);
  t.validate();
  return t;
}

// ----- predictions ---------------------------------------------------------

struct SlidePredictions {
  std::string slide_id;
  int width_px = 0;
  int height_px = 0;
  TilingConfig tiling;
  std::vector<PatchPrediction> predictions;
};

inline json to_json(const SlidePredictions& s) {
  json preds = json::array();
  for (const auto& p : s.predictions) {
    json probs = json::array();
    for (double v : p.probs.values()) probs.push_back(v);
    preds.push_back({{"x", p.window.x}, {"y", p.window.y}, {"probs", probs}});
  }
  return {{"slide_id", s.slide_id},
          {"width_px", s.width_px},
          {"height_px", s.height_px},
          {"tiling", to_json(s.tiling)},
          {"labels", {"TA", "TVA", "HP", "SSA", "NORM"}},
          {"predictions", preds}};
}

inline SlidePredictions predictions_from_json(const json& j) {
  SlidePredictions s;
  s.slide_id = j.at("slide_id").get<std::string>();
  s.width_px = j.at("width_px").get<int>();
  s.height_px = j.at("height_px").get<int>();
  s.tiling = tiling_from_json(j.at("tiling"));
  for (const auto& p : j.at("predictions")) {
    PatchWindow w{p.at("x").get<int>(), p.at("y").get<int>(), s.tiling.side_px};
    s.predictions.push_back({w, ProbVector(p.at("probs").get<std::array<double, kNumLabels>>())});
  }
  return s;
}

// ----- summaries and diagnoses ---------------------------------------------

inline json counts_json(const SlideSummary& s) {
  json c = json::object();
  for (auto l : kAllLabels) c[std::string(name(l))] = s.count(l);
  return c;
}

inline SlideSummary summary_from_json(const json& j) {
  SlideSummary s;
  s.slide_id = j.value("slide_id", std::string{});
  const auto& c = j.at("counts");
  for (auto l : kAllLabels) s.counts[index(l)] = c.value(std::string(name(l)), std::uint64_t{0});
  return s;
}

/// {slide_id, counts, tissue_total, fractions, diagnosis, thresholds};
/// fractions and diagnosis are null when the slide has no tissue patches.
inline json diagnosis_record(const SlideSummary& s, const ThresholdConfig& thr) {
  json j;
  j["slide_id"] = s.slide_id;
  j["counts"] = counts_json(s);
  j["tissue_total"] = s.tissue_total();
  if (auto f = s.fractions()) {
    json fr = json::object();
    for (auto d : kAllDiagnoses) fr[std::string(name(d))] = (*f)[index(d)];
    j["fractions"] = fr;
    j["diagnosis"] = std::string(name(diagnose(s, thr)));
  } else {
    j["fractions"] = nullptr;
    j["diagnosis"] = nullptr;
  }
  j["thresholds"] = to_json(thr);
  return j;
}

inline json to_json(const LabeledSummary& l) {
  return {{"slide_id", l.summary.slide_id}, {"counts", counts_json(l.summary)}, {"gold", std::string(name(l.gold))}};
}

inline LabeledSummary labeled_from_json(const json& j) {
  return {summary_from_json(j), diagnosis_from_string(j.at("gold").get<std::string>())};
}

// ----- evaluation ----------------------------------------------------------

inline json to_json(const Interval& i) { return {{"low", i.low}, {"high", i.high}}; }

template <class T>
json optional_json(const std::optional<T>& v) {
  if (!v) return nullptr;
  return to_json(*v);
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const MetricWithCi& m) { return {{"value", m.value}, {"ci", to_json(m.ci)}}; }

inline json to_json(const ConfusionMatrix& cm) {
  json labels = json::array();
  for (auto d : kAllDiagnoses) labels.push_back(std::string(name(d)));
  json counts = json::array(), pct = json::array();
  for (auto g : kAllDiagnoses) {
    json row = json::array();
    for (auto v : cm.counts[index(g)]) row.push_back(v);
    counts.push_back(row);
    if (auto p = cm.row_percentages(g)) {
      json prow = json::array();
      for (double v : *p) prow.push_back(round_half_away(v, 1));
      pct.push_back(prow);
    } else {
      pct.push_back(nullptr);
    }
  }
  return {{"labels", labels}, {"rows", "gold"}, {"columns", "predicted"}, {"counts", counts}, {"row_percentages", pct}};
}

inline json to_json(const RaterReport& r) {
  json per_class = json::array();
  for (const auto& c : r.per_class) {
    const auto& m = c.metrics;
    per_class.push_back({{"label", std::string(name(m.label))},
                         {"n", m.n()},
                         {"tp", m.counts.tp},
                         {"fn", m.counts.fn},
                         {"fp", m.counts.fp},
                         {"tn", m.counts.tn},
                         {"accuracy", m.accuracy},
                         {"accuracy_ci", to_json(c.accuracy_ci)},
                         {"sensitivity", optional_number(m.sensitivity)},
                         {"sensitivity_ci", optional_json(c.sensitivity_ci)},
                         {"specificity", optional_number(m.specificity)},
                         {"specificity_ci", optional_json(c.specificity_ci)}});
  }
  return {{"name", r.name},
          {"n", r.n},
          {"per_class", per_class},
          {"mean",
           {{"accuracy", to_json(r.mean_accuracy)},
            {"sensitivity", optional_json(r.mean_sensitivity)},
            {"specificity", optional_json(r.mean_specificity)}}},
          {"confusion_matrix", to_json(r.confusion)}};
}

inline json to_json(const KappaStat& k) {
  json pairs = json::array();
  for (const auto& p : k.pairwise)
    pairs.push_back({{"rater_a", p.rater_a + 1}, {"rater_b", p.rater_b + 1}, {"kappa", p.kappa}});
  return {{"pairwise", pairs}, {"mean", k.mean}, {"ci", to_json(k.ci)}};
}

inline json to_json(const PValues& p) {
  return {{"accuracy", p.accuracy},
          {"sensitivity", optional_number(p.sensitivity)},
          {"specificity", optional_number(p.specificity)}};
}

inline json to_json(const EvaluationReport& r) {
  json excluded = json::array();
  for (const auto& e : r.excluded) excluded.push_back({{"slide_id", e.slide_id}, {"reason", e.reason}});
  return {{"n_slides", r.n_slides},
          {"model", to_json(r.model)},
          {"local", optional_json(r.local)},
          {"kappa", optional_json(r.kappa)},
          {"p_values", optional_json(r.p_values)},
          {"excluded", excluded}};
}

} // namespace polypath
