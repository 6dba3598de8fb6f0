#pragma once

// Hand-evaluated scoring cases and a direct transcription of the admission
// rules, shared by the unit and acceptance suites.

#include <optional>
#include <string>
#include <vector>

#include "trialmatch/rerank.hpp"

namespace golden {

using namespace trialmatch;

struct Tally {
  Category attr;
  Polarity pol;
  EligibilityLabel label;
  std::size_t n;
};

struct ScoringCase {
  std::string name;
  std::vector<Tally> tallies;
  std::optional<CoarseLabel> coarse;
  double ov;
  std::string method;
  double expected;
  bool empty_denominator;
};

inline constexpr auto D = Category::kDisease;
inline constexpr auto T = Category::kTreatment;
inline constexpr auto In = Polarity::kInclusion;
inline constexpr auto Ex = Polarity::kExclusion;
inline constexpr auto E = EligibilityLabel::kEligible;
inline constexpr auto X = EligibilityLabel::kExcluded;
inline constexpr auto N = EligibilityLabel::kNotEnoughInfo;

/// Mixed inclusion tally: 3 eligible, 1 excluded, 2 not-enough-info.
inline std::vector<Tally> mixed() { return {{D, In, E, 3}, {D, In, X, 1}, {D, In, N, 2}}; }

inline std::vector<ScoringCase> scoring_cases() {
  return {
      {"IE all eligible", {{D, In, E, 4}}, {}, 0.0, "ie", 1.0, false},
      {"FIE zeroed by an exclusion hit", {{D, In, E, 2}, {D, Ex, X, 1}}, {}, 0.0, "fie", 0.0, false},
      {"Contrast negative", {{D, In, E, 1}, {D, In, X, 3}}, {}, 0.0, "contrast", -0.5, false},
      {"GE mixed", mixed(), {}, 0.0, "ge", 0.5, false},
      {"Contrast mixed", mixed(), {}, 0.0, "contrast", 1.0 / 3.0, false},
      {"WContrast mixed", mixed(), {}, 0.0, "wcontrast", 1.0 / 6.0, false},
      {"EE", {{D, Ex, E, 3}, {D, Ex, N, 1}}, {}, 0.0, "ee", 0.75, false},
      {"CG boost", {}, CoarseLabel::kEligible, 0.6, "cg", 1.6, false},
      {"Hybrid without boost", {{D, In, E, 2}, {D, In, N, 3}}, CoarseLabel::kExcluded, 0.9, "hybrid", 0.4, false},
      {"Hybrid boost", {{D, In, E, 2}, {D, In, N, 3}}, CoarseLabel::kEligible, 0.9, "hybrid", 1.4, false},
      {"disease-only IE", {{D, In, E, 1}, {D, In, N, 1}, {T, In, X, 2}}, {}, 0.0, "disease-only", 0.5, false},
      {"IE empty denominator", {{D, Ex, E, 2}}, {}, 0.0, "ie", 0.0, true},
  };
}

inline LabelCounts counts_of(const std::vector<Tally>& ts) {
  LabelCounts c;
  for (const auto& t : ts) c.add(t.attr, t.pol, t.label, t.n);
  return c;
}

enum class Expect { kAdmit, kNotRelevant, kExcluded, kNoEligible };

/// Relevance is mandatory; strict mode forbids any exclusion evidence; an
/// admitted trial needs an eligible fine label or an eligible coarse label.
inline Expect gate_oracle(bool age, bool gender, bool condition, bool fine_e, bool fine_x,
                          std::optional<CoarseLabel> coarse, bool strict) {
  if (!(age && gender && condition)) return Expect::kNotRelevant;
  bool coarse_e = coarse == CoarseLabel::kEligible;
  bool coarse_x = coarse == CoarseLabel::kExcluded;
  if (strict && (fine_x || coarse_x)) return Expect::kExcluded;
  if (!(fine_e || coarse_e)) return Expect::kNoEligible;
  return Expect::kAdmit;
}

inline Expect from_decision(GateDecision d) {
  switch (d) {
    case GateDecision::kAdmit: return Expect::kAdmit;
    case GateDecision::kNotRelevant: return Expect::kNotRelevant;
    case GateDecision::kExcludedEvidence: return Expect::kExcluded;
    case GateDecision::kNoEligibleEvidence: return Expect::kNoEligible;
  }
  return Expect::kAdmit;
}

}  // namespace golden
