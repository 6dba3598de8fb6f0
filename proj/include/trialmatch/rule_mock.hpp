#pragma once

// Deterministic labelers for tests and offline runs: a keyword/numeric rule
// engine and a decorator that flips a fixed fraction of its labels.

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "trialmatch/labeling.hpp"

namespace trialmatch {

/// Three-valued truth of a criterion's predicate against patient facts.
enum class Truth { kTrue, kFalse, kUnknown };

/// Rule-based labeler. Facts are matched by phrase containment (with
/// negation cues such as "no", "denies", "without"), numeric comparisons on
/// a shared attribute ("BMI >= 30" vs "BMI of 31.6") and the structured
/// age/gender values. Responses are rendered in the prompt output formats so
/// they round-trip through the same parsers as a remote service.
class RuleMockLabeler : public Labeler {
 public:
  /// (patient id, trial id) -> label returned by label_trial.
  using PlantedCoarse = std::map<std::pair<std::string, std::string>, CoarseLabel>;

  RuleMockLabeler() = default;
  explicit RuleMockLabeler(PlantedCoarse planted) : planted_(std::move(planted)) {}

  std::string id() const override { return "rule-mock"; }

  LabelerReply<PatientExtraction> extract_patient(const PromptTemplate& tmpl,
                                                  const std::string& patient_id,
                                                  std::string_view note) override;
  LabelerReply<CategorySet> categorize(const PromptTemplate& tmpl, const std::string& trial_id,
                                       std::size_t index, std::string_view criterion) override;
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate& tmpl,
                                                 const std::string& trial_id, std::size_t index,
                                                 const Criterion& criterion,
                                                 const PatientContext& ctx) override;
  LabelerReply<CoarseLabel> label_trial(const PromptTemplate& tmpl, const TrialRecord& trial,
                                        const PatientContext& ctx) override;

  static PatientExtraction summarize_note(std::string_view note);
  static CategorySet categorize_text(std::string_view criterion);
  static Truth evaluate(std::string_view criterion, const PatientContext& ctx);
  static EligibilityLabel judge(const Criterion& criterion, const PatientContext& ctx);
  /// Excluded if any criterion is judged Excluded, Eligible if at least one
  /// is Eligible, Excluded otherwise.
  static CoarseLabel judge_trial(const TrialRecord& trial, const PatientContext& ctx);

 private:
  PlantedCoarse planted_;
};

/// Replaces a deterministic pseudo-random fraction of the inner labeler's fine
/// and coarse labels with a different label. The choice depends only on the
/// seed and the (patient, trial, criterion) key.
class NoisyLabeler : public Labeler {
 public:
  NoisyLabeler(Labeler& inner, double rate, std::uint64_t seed)
      : inner_(inner), rate_(rate), seed_(seed) {}

  std::string id() const override;

  LabelerReply<PatientExtraction> extract_patient(const PromptTemplate& tmpl,
                                                  const std::string& patient_id,
                                                  std::string_view note) override {
    return inner_.extract_patient(tmpl, patient_id, note);
  }
  LabelerReply<CategorySet> categorize(const PromptTemplate& tmpl, const std::string& trial_id,
                                       std::size_t index, std::string_view criterion) override {
    return inner_.categorize(tmpl, trial_id, index, criterion);
  }
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate& tmpl,
                                                 const std::string& trial_id, std::size_t index,
                                                 const Criterion& criterion,
                                                 const PatientContext& ctx) override;
  LabelerReply<CoarseLabel> label_trial(const PromptTemplate& tmpl, const TrialRecord& trial,
                                        const PatientContext& ctx) override;

 private:
  double draw(const std::string& key) const;

  Labeler& inner_;
  double rate_;
  std::uint64_t seed_;
};

}  // namespace trialmatch
