#pragma once

// Second stage: label tallies, the admission gate and the scoring functions
// that reorder the first-stage candidates.

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trialmatch/labeling.hpp"
#include "trialmatch/retrieval.hpp"

namespace trialmatch {

class RerankError : public std::runtime_error {
 public:
  enum class Kind { kMissingJudgments, kBadMethod };
  RerankError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// How a criterion tagged with several categories is tallied.
enum class CountingMode {
  kPerCategory,  // once in every bucket it carries
  kOnce,         // once, in its first category (treatment, demographic, disease order)
};

/// Label tallies per (attribute, polarity, label).
class LabelCounts {
 public:
  void add(Category attr, Polarity pol, EligibilityLabel label, std::size_t n = 1);
  std::size_t count(Category attr, Polarity pol, EligibilityLabel label) const;
  std::size_t total(Category attr, Polarity pol) const;

  /// Sum of `label` over the attributes in `attrs` and the given polarities.
  std::size_t sum(EligibilityLabel label, bool inclusion, bool exclusion,
                  CategorySet attrs = kAll) const;
  std::size_t sum_total(bool inclusion, bool exclusion, CategorySet attrs = kAll) const;

  static inline const CategorySet kAll{Category::kTreatment, Category::kDemographic,
                                       Category::kDisease};

  friend bool operator==(const LabelCounts&, const LabelCounts&) = default;

 private:
  static std::size_t slot(Category c);
  std::array<std::array<std::array<std::size_t, 3>, 2>, 3> n_{};
};

LabelCounts count_labels(const TrialJudgments& j, CountingMode mode = CountingMode::kPerCategory);

struct ScoringMethod {
  enum class Kind { kIE, kFIE, kFIO, kEE, kGE, kContrast, kWContrast, kCG, kHybrid, kRestrictedIE };

  Kind kind = Kind::kIE;
  double alpha = 1.0;  // WContrast weight on eligible
  double beta = 2.0;   // WContrast weight on excluded
  Category attr = Category::kDisease;  // RestrictedIE

  /// Tokens: ie, fie, fio, ee, ge, contrast, wcontrast[:a:b], cg, hybrid,
  /// disease-only, demo-only, treatment-only. Throws RerankError::kBadMethod.
  static ScoringMethod parse(std::string_view token);
  std::string to_string() const;

  bool uses_coarse() const { return kind == Kind::kCG || kind == Kind::kHybrid; }
};

struct Score {
  double value = 0.0;
  bool empty_denominator = false;
};

/// IE, EE, GE, Contrast, WContrast and RestrictedIE. Throws
/// std::invalid_argument for other kinds.
Score score_fine(const LabelCounts& c, const ScoringMethod& m);

enum class FilterScope { kAllCriteria, kInclusionOnly };
/// 0 when any Excluded label exists in scope, IE otherwise.
Score score_filtered(const LabelCounts& c, FilterScope scope);

/// base + 1 when the coarse label is Eligible.
double score_coarse(double base, CoarseLabel coarse);

/// Dispatches on the method kind. `ov` is the first-stage overlap (the CG
/// base); a missing coarse label counts as Excluded.
Score score_trial(const LabelCounts& c, const TrialJudgments& j, double ov,
                  const ScoringMethod& m);

enum class GateMode { kStrict, kLenient };
GateMode parse_gate_mode(std::string_view token);
std::string to_string(GateMode m);

enum class GateDecision { kAdmit, kNotRelevant, kExcludedEvidence, kNoEligibleEvidence };
std::string to_string(GateDecision d);

/// Age/gender/condition relevance of a trial for a patient.
struct RelevanceSignals {
  bool age = false;
  bool gender = false;
  std::size_t condition_overlap = 0;
  double ov = 0.0;
};

RelevanceSignals relevance_signals(const PatientProfile& p, const TrialRecord& r);

/// Relevance is mandatory in both modes. Strict also rejects any Excluded
/// label (fine or coarse). Both modes require at least one Eligible fine
/// label or an Eligible coarse label.
GateDecision deontic_gate(const RelevanceSignals& rel, const TrialJudgments& j, GateMode mode);

struct RerankResult {
  RankedList ranked;
  std::vector<std::pair<std::string, GateDecision>> rejected;
  std::vector<std::string> empty_denominator;  // admitted with score 0
};

/// Gates and scores every candidate, then orders survivors by score desc,
/// first-stage ov desc, trial id asc. Throws kMissingJudgments when a
/// candidate has no judgments or relevance entry.
RerankResult rerank(const RankedList& cands, const std::map<std::string, TrialJudgments>& judgments,
                    const std::map<std::string, RelevanceSignals>& relevance,
                    const ScoringMethod& method, GateMode gate,
                    CountingMode counting = CountingMode::kPerCategory);

}  // namespace trialmatch
