#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "polypath/error.hpp"

namespace polypath {

/// Patch-level output classes. The enumerator order is also the argmax
/// tie-break order.
enum class PolypLabel : std::size_t { TA = 0, TVA = 1, HP = 2, SSA = 3, NORM = 4 };

/// Slide-level diagnoses. NORM is never a slide diagnosis.
enum class Diagnosis : std::size_t { TA = 0, TVA = 1, HP = 2, SSA = 3 };

inline constexpr std::size_t kNumLabels = 5;
inline constexpr std::size_t kNumDiagnoses = 4;

inline constexpr std::array<PolypLabel, kNumLabels> kAllLabels = {
    PolypLabel::TA, PolypLabel::TVA, PolypLabel::HP, PolypLabel::SSA, PolypLabel::NORM};
inline constexpr std::array<Diagnosis, kNumDiagnoses> kAllDiagnoses = {
    Diagnosis::TA, Diagnosis::TVA, Diagnosis::HP, Diagnosis::SSA};

constexpr std::size_t index(PolypLabel l) { return static_cast<std::size_t>(l); }
constexpr std::size_t index(Diagnosis d) { return static_cast<std::size_t>(d); }

constexpr bool is_adenomatous(PolypLabel l) { return l == PolypLabel::TA || l == PolypLabel::TVA; }
constexpr bool is_serrated(PolypLabel l) { return l == PolypLabel::HP || l == PolypLabel::SSA; }

constexpr PolypLabel to_label(Diagnosis d) { return static_cast<PolypLabel>(index(d)); }

constexpr std::optional<Diagnosis> to_diagnosis(PolypLabel l) {
  if (l == PolypLabel::NORM) return std::nullopt;
  return static_cast<Diagnosis>(index(l));
}

constexpr std::string_view name(PolypLabel l) {
  constexpr std::array<std::string_view, kNumLabels> names = {"TA", "TVA", "HP", "SSA", "NORM"};
  return names[index(l)];
}

constexpr std::string_view name(Diagnosis d) { return name(to_label(d)); }

inline std::optional<PolypLabel> parse_label(std::string_view s) {
  for (auto l : kAllLabels)
    if (name(l) == s) return l;
  return std::nullopt;
}

inline std::optional<Diagnosis> parse_diagnosis(std::string_view s) {
  auto l = parse_label(s);
  if (!l) return std::nullopt;
  return to_diagnosis(*l);
}

/// Throwing variant for trusted-format inputs.
inline Diagnosis diagnosis_from_string(std::string_view s) {
  if (auto d = parse_diagnosis(s)) return *d;
  throw InvalidArgument("unknown diagnosis '" + std::string(s) + "' (expected TA, TVA, HP or SSA)");
}

} // namespace polypath
