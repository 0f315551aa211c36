// Library walkthrough: paint a slide, classify its patches with the synthetic
// oracle, diagnose it and score a handful of diagnoses.

#include <iostream>
#include <random>

#include "polypath/classify.hpp"
#include "polypath/eval.hpp"
#include "polypath/infer.hpp"
#include "polypath/rounding.hpp"
#include "polypath/synthetic.hpp"

using namespace polypath;

int main() {
  std::mt19937_64 rng(3);
  const auto slide = synthetic::painted_slide("demo", 12, 9, 224, synthetic::layout_for(Diagnosis::TVA, 108, rng));

  const TilingConfig tiling;
  const ThresholdConfig thr;
  SyntheticOracle oracle(tiling.side_px);
  const auto preds = classify_slide(slide.raster, tiling, oracle, 0);
  const auto summary = summarize(preds, thr, "demo");

  std::cout << "tissue patches: " << preds.size() << "\n";
  for (auto d : kAllDiagnoses) std::cout << "  " << name(d) << " " << format_percent(*summary.fraction(d)) << "%\n";
  std::cout << "diagnosis: " << name(diagnose(summary, thr)) << "\n";

  using D = Diagnosis;
  const std::vector<D> pred = {D::TA, D::TA, D::TVA, D::HP, D::SSA, D::HP};
  const std::vector<D> gold = {D::TA, D::TVA, D::TVA, D::HP, D::SSA, D::SSA};
  const auto ta = per_class_metrics(pred, gold, D::TA);
  const auto ci = wald_ci(ta.accuracy, ta.n());
  std::cout << "TA accuracy " << format_percent(ta.accuracy) << "% (95% CI " << format_percent(ci.low) << "-"
            << format_percent(ci.high) << ")\n";
  std::cout << "kappa " << cohens_kappa(pred, gold) << "\n";
}
