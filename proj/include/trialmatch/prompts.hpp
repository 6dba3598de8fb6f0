#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace trialmatch {

/// A versioned prompt body with {{placeholder}} slots. The version hash is
/// derived from the body, so it changes exactly when the wording does.
struct PromptTemplate {
  std::string name;
  std::string_view body;
  std::string hash;

  std::string render(const std::vector<std::pair<std::string, std::string>>& vars) const;
};

PromptTemplate make_template(std::string name, std::string_view body);

namespace templates {

inline constexpr std::string_view kPatientExtraction = "patient_extraction";
inline constexpr std::string_view kCriterionCategorization = "criterion_categorization";
inline constexpr std::string_view kInclusionLabeling = "inclusion_labeling";
inline constexpr std::string_view kExclusionLabeling = "exclusion_labeling";
inline constexpr std::string_view kCoarseLabeling = "coarse_labeling";

/// Placeholder: {{note}}.
const PromptTemplate& patient_extraction();
/// Placeholder: {{criterion}}.
const PromptTemplate& criterion_categorization();
/// Placeholders: {{criteria}}, {{patient}}.
const PromptTemplate& inclusion_labeling();
const PromptTemplate& exclusion_labeling();
/// Placeholders: {{inclusion}}, {{exclusion}}, {{patient}}.
const PromptTemplate& coarse_labeling();

std::vector<const PromptTemplate*> all();

}  // namespace templates
}  // namespace trialmatch
