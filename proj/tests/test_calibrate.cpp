#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "polypath/calibrate.hpp"

using namespace polypath;

namespace {

LabeledSummary labeled(std::uint64_t ta, std::uint64_t tva, std::uint64_t hp, std::uint64_t ssa, Diagnosis gold) {
  LabeledSummary l;
  l.summary.counts = {ta, tva, hp, ssa, 0};
  l.gold = gold;
  return l;
}

// Independent oracle: re-derives the slide rule from raw counts and counts
// misclassified slides. Mean one-vs-rest accuracy is 1 - errors / (2n), so
// fewest errors is the same optimum.
struct OracleResult {
  std::size_t v = 0, s = 0;
  std::size_t errors = 0;
};

Diagnosis oracle_rule(const std::array<std::uint64_t, 5>& c, double villous, double ssa) {
  const double total = static_cast<double>(c[0] + c[1] + c[2] + c[3]);
  if (c[0] + c[1] >= c[2] + c[3]) return static_cast<double>(c[1]) / total > villous ? Diagnosis::TVA : Diagnosis::TA;
  return static_cast<double>(c[3]) / total > ssa ? Diagnosis::SSA : Diagnosis::HP;
}

OracleResult exhaustive_sweep(const std::vector<LabeledSummary>& data, const GridSpec& g) {
  OracleResult best{0, 0, data.size() + 1};
  for (std::size_t v = 0; v < g.villous.size(); ++v) {
    for (std::size_t s = 0; s < g.ssa.size(); ++s) {
      std::size_t err = 0;
      for (const auto& d : data) err += oracle_rule(d.summary.counts, g.villous.value(v), g.ssa.value(s)) != d.gold;
      if (err < best.errors) best = {v, s, err};
    }
  }
  return best;
}

std::vector<LabeledSummary> random_dataset(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_d(1, 40), c(0, 60), coin(0, 3);
  std::vector<LabeledSummary> data;
  const int n = n_d(rng);
  for (int i = 0; i < n; ++i) {
    LabeledSummary l;
    do {
      l.summary.counts = {static_cast<std::uint64_t>(c(rng)), static_cast<std::uint64_t>(c(rng) / 2),
                          static_cast<std::uint64_t>(c(rng)), static_cast<std::uint64_t>(c(rng) / 10), 0};
    } while (l.summary.tissue_total() == 0);
    // Gold mostly follows a hidden rule, with label noise.
    const Diagnosis truth = oracle_rule(l.summary.counts, 0.125 + 0.05 * coin(rng), 0.01 * coin(rng));
    l.gold = coin(rng) == 0 ? kAllDiagnoses[static_cast<std::size_t>(c(rng)) % 4] : truth;
    data.push_back(l);
  }
  return data;
}

} // namespace

TEST(GridAxis, SizeAndValues) {
  const GridSpec g;
  EXPECT_EQ(g.villous.size(), 201u);
  EXPECT_EQ(g.ssa.size(), 101u);
  EXPECT_EQ(g.villous.value(60), 0.30);
  EXPECT_EQ(g.ssa.value(15), 0.015);
  EXPECT_EQ(g.villous.value(200), 1.0);
  EXPECT_EQ(g.ssa.value(100), 0.10);
}

TEST(GridSearch, VillousExample) {
  const std::vector<LabeledSummary> data = {
      labeled(65, 35, 0, 0, Diagnosis::TVA), labeled(50, 50, 0, 0, Diagnosis::TVA),
      labeled(90, 10, 0, 0, Diagnosis::TA), labeled(80, 20, 0, 0, Diagnosis::TA)};
  const auto oracle = exhaustive_sweep(data, GridSpec{});
  ASSERT_EQ(oracle.errors, 0u);
  ASSERT_EQ(GridSpec{}.villous.value(oracle.v), 0.20);

  const auto r = grid_search(data);
  EXPECT_EQ(r.best_score, 1.0);
  EXPECT_EQ(r.thresholds.villous_threshold, 0.20);
  EXPECT_EQ(r.thresholds.ssa_threshold, 0.0);
}

TEST(GridSearch, DefaultsAlreadyPerfect) {
  const std::vector<LabeledSummary> data = {
      labeled(60, 40, 0, 0, Diagnosis::TVA), labeled(90, 10, 0, 0, Diagnosis::TA),
      labeled(0, 0, 97, 3, Diagnosis::SSA), labeled(0, 0, 99, 1, Diagnosis::HP)};
  ASSERT_EQ(score_thresholds(data, ThresholdConfig{}), 1.0);
  const auto r = grid_search(data);
  EXPECT_EQ(r.best_score, 1.0);
  EXPECT_LE(r.thresholds.villous_threshold, 0.30);
  EXPECT_LE(r.thresholds.ssa_threshold, 0.015);
  const auto o = exhaustive_sweep(data, GridSpec{});
  EXPECT_EQ(r.thresholds.villous_threshold, GridSpec{}.villous.value(o.v));
  EXPECT_EQ(r.thresholds.ssa_threshold, GridSpec{}.ssa.value(o.s));
}

TEST(GridSearch, SingleSlide) {
  // TA slide with 10% TVA: smallest villous threshold keeping it TA is 0.10.
  const std::vector<LabeledSummary> ta = {labeled(9, 1, 0, 0, Diagnosis::TA)};
  auto r = grid_search(ta);
  EXPECT_EQ(r.best_score, 1.0);
  EXPECT_EQ(r.thresholds.villous_threshold, 0.10);
  EXPECT_EQ(r.thresholds.ssa_threshold, 0.0);

  const std::vector<LabeledSummary> tva = {labeled(6, 4, 0, 0, Diagnosis::TVA)};
  r = grid_search(tva);
  EXPECT_EQ(r.best_score, 1.0);
  EXPECT_EQ(r.thresholds.villous_threshold, 0.0);
  EXPECT_EQ(r.thresholds.ssa_threshold, 0.0);
}

TEST(GridSearch, Errors) {
  EXPECT_THROW(grid_search({}), EmptyDataset);
  const std::vector<LabeledSummary> bad = {labeled(0, 0, 0, 0, Diagnosis::TA)};
  EXPECT_THROW(grid_search(bad), NoTissue);
  GridSpec g;
  g.ssa.step = 0.0;
  const std::vector<LabeledSummary> ok = {labeled(1, 0, 0, 0, Diagnosis::TA)};
  EXPECT_THROW(grid_search(ok, g), InvalidArgument);
}

TEST(GridSearchProperty, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(777);
  const GridSpec g;
  for (int trial = 0; trial < 20; ++trial) {
    auto data = random_dataset(rng);
    const auto r = grid_search(data, g);
    const auto o = exhaustive_sweep(data, g);
    const double oracle_score = 1.0 - static_cast<double>(o.errors) / (2.0 * static_cast<double>(data.size()));
    EXPECT_NEAR(r.best_score, oracle_score, 1e-12) << "trial " << trial;
    EXPECT_EQ(r.thresholds.villous_threshold, g.villous.value(o.v)) << "trial " << trial;
    EXPECT_EQ(r.thresholds.ssa_threshold, g.ssa.value(o.s)) << "trial " << trial;
    EXPECT_EQ(score_thresholds(data, r.thresholds), r.best_score);
    EXPECT_GE(r.best_score, 0.0);
    EXPECT_LE(r.best_score, 1.0);

    std::shuffle(data.begin(), data.end(), rng);
    const auto shuffled = grid_search(data, g, 3);
    EXPECT_EQ(shuffled.thresholds, r.thresholds);
    EXPECT_EQ(shuffled.best_score, r.best_score);
  }
}
