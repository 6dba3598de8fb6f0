#pragma once

// Labeler interface and the operations built on it: patient/trial extraction,
// criterion categorization, per-criterion (fine) and whole-trial (coarse)
// eligibility labels.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trialmatch/core_model.hpp"
#include "trialmatch/prompts.hpp"

namespace trialmatch {

class LabelingError : public std::runtime_error {
 public:
  enum class Kind { kMalformedOutput, kEmptyNote, kMissingCriteriaSection, kCacheIo, kTransport };

  LabelingError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Output of the patient-note summarization call.
struct PatientExtraction {
  PhraseSet disease;
  PhraseSet demographics;
  PhraseSet treatment;
  PhraseSet diagnosis;
};

/// What a labeler sees of a patient: the bullet facts selected for the
/// criterion at hand plus the structured age/gender values.
struct PatientContext {
  std::string patient_id;
  std::vector<std::string> facts;
  AgeSet age = AgeSet::full();
  GenderSet gender;
  std::string note;

  /// "- fact" per line.
  std::string render_bullets() const;
  /// The note when present, else the bullet rendering.
  std::string render_profile() const;
};

/// Facts from the attribute sets matching `categories` (treatment, demographics,
/// disease; disease also pulls in the raw diagnoses). Empty `categories`
/// selects everything.
PatientContext make_patient_context(const PatientProfile& patient, CategorySet categories = {});

template <typename T>
struct LabelerReply {
  T value;
  std::string raw_response;
};

/// Pluggable labeling function. Implementations must tolerate concurrent
/// calls.
class Labeler {
 public:
  virtual ~Labeler() = default;

  /// Stable identifier, part of every cache and corpus key.
  virtual std::string id() const = 0;

  virtual LabelerReply<PatientExtraction> extract_patient(const PromptTemplate& tmpl,
                                                          const std::string& patient_id,
                                                          std::string_view note) = 0;
  virtual LabelerReply<CategorySet> categorize(const PromptTemplate& tmpl,
                                               const std::string& trial_id, std::size_t index,
                                               std::string_view criterion) = 0;
  virtual LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate& tmpl,
                                                         const std::string& trial_id,
                                                         std::size_t index,
                                                         const Criterion& criterion,
                                                         const PatientContext& ctx) = 0;
  virtual LabelerReply<CoarseLabel> label_trial(const PromptTemplate& tmpl,
                                                const TrialRecord& trial,
                                                const PatientContext& ctx) = 0;
};

// Response parsers. Each throws LabelingError::kMalformedOutput when the text
// does not contain a usable answer.

/// Accepts strict JSON or the looser dict-with-bare-list-items shape the
/// extraction prompt demonstrates.
PatientExtraction parse_extraction_response(std::string_view raw);
CategorySet parse_categorization_response(std::string_view raw);
/// First {'Criterion': ..., 'Label': ...} record in the response.
EligibilityLabel parse_fine_response(std::string_view raw);
CoarseLabel parse_coarse_response(std::string_view raw);

/// Canonical responses in the prompt output formats; the parsers accept them.
std::string format_extraction_response(const PatientExtraction& e);
std::string format_categorization_response(std::string_view criterion, CategorySet cats);
std::string format_fine_response(std::string_view criterion, EligibilityLabel label);
std::string format_coarse_response(CoarseLabel label);

/// Ages mentioned in free text: ranges ("18-30", "between 18 and 65"),
/// inequalities ("18 years or older", "under 75", ">= 18") and single values
/// ("62-year-old", "age 45", "45 years"). Returns an empty set when nothing is
/// found.
AgeSet scan_age_mentions(std::string_view text);

/// Female/Male when only one gender is mentioned, All when both are, nullopt
/// when neither.
std::optional<GenderSet> scan_gender_mentions(std::string_view text);

/// Runs the extraction prompt and derives age and gender from the
/// demographic phrases. Unknown age is the full range, unknown gender All.
/// Throws kEmptyNote on a blank note.
PatientProfile extract_patient(const std::string& patient_id, std::string_view note, Labeler& lb);

/// A clinical trial record as read from a corpus file.
struct RawTrial {
  std::string id;
  std::vector<std::string> conditions;
  std::vector<std::string> inclusion;
  std::vector<std::string> exclusion;
  std::optional<std::string> min_age;
  std::optional<std::string> max_age;
  std::optional<std::string> gender;
  std::string text;
};

/// Parses structured age bounds such as "18 Years", "6 Months", "N/A" or a
/// bare number, in whole years. nullopt for absent/N/A.
std::optional<int> parse_age_bound(std::string_view s);

/// Builds the pre-normalization trial record. Polarity comes from the source
/// sections; age/gender from structured fields when present, otherwise from
/// the inclusion criteria text. When `lb` is non-null every criterion is
/// categorized. Throws kMissingCriteriaSection when both sections are empty.
TrialRecord extract_trial(const RawTrial& raw, Labeler* lb);

/// Categorizes any criterion that has no categories yet.
void categorize_trial(TrialRecord& trial, Labeler& lb);

struct CriterionJudgment {
  std::string trial_id;
  std::size_t criterion_index = 0;
  Polarity polarity = Polarity::kInclusion;
  CategorySet categories;
  EligibilityLabel label = EligibilityLabel::kNotEnoughInfo;
  bool degraded = false;        // labeler output was unusable
  std::string template_name;    // audit trail for polarity routing
};

struct TrialJudgments {
  std::string trial_id;
  std::vector<CriterionJudgment> fine;
  std::optional<CoarseLabel> coarse;
  bool coarse_degraded = false;
};

/// Labels one categorized criterion with the template matching its polarity.
/// Malformed labeler output degrades to NotEnoughInfo with `degraded` set.
CriterionJudgment fine_label(const std::string& trial_id, std::size_t index,
                             const Criterion& criterion, const PatientProfile& patient,
                             Labeler& lb);

struct CoarseOutcome {
  CoarseLabel label = CoarseLabel::kExcluded;
  bool degraded = false;
};

/// Whole-trial label. Malformed output degrades to Excluded.
CoarseOutcome coarse_label(const TrialRecord& trial, const PatientProfile& patient, Labeler& lb);

/// Fine labels for every categorized criterion and, optionally, the coarse
/// label.
TrialJudgments judge_trial(const TrialRecord& trial, const PatientProfile& patient, Labeler& lb,
                           bool with_coarse);

}  // namespace trialmatch
