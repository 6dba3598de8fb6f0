#include "trialmatch/prompts.hpp"

#include "trialmatch/text.hpp"

namespace trialmatch {

namespace prompt_assets {
extern const std::string_view patient_extraction;
extern const std::string_view criterion_categorization;
extern const std::string_view inclusion_labeling;
extern const std::string_view exclusion_labeling;
extern const std::string_view coarse_labeling;
}  // namespace prompt_assets

std::string PromptTemplate::render(
    const std::vector<std::pair<std::string, std::string>>& vars) const {
  return text::render(body, vars);
}

PromptTemplate make_template(std::string name, std::string_view body) {
  return {std::move(name), body, text::hex64(text::fnv1a64(body))};
}

namespace templates {

const PromptTemplate& patient_extraction() {
  static const PromptTemplate t =
      make_template(std::string(kPatientExtraction), prompt_assets::patient_extraction);
  return t;
}

const PromptTemplate& criterion_categorization() {
  static const PromptTemplate t = make_template(std::string(kCriterionCategorization),
                                                prompt_assets::criterion_categorization);
  return t;
}

const PromptTemplate& inclusion_labeling() {
  static const PromptTemplate t =
      make_template(std::string(kInclusionLabeling), prompt_assets::inclusion_labeling);
  return t;
}

const PromptTemplate& exclusion_labeling() {
  static const PromptTemplate t =
      make_template(std::string(kExclusionLabeling), prompt_assets::exclusion_labeling);
  return t;
}

const PromptTemplate& coarse_labeling() {
  static const PromptTemplate t =
      make_template(std::string(kCoarseLabeling), prompt_assets::coarse_labeling);
  return t;
}

std::vector<const PromptTemplate*> all() {
  return {&patient_extraction(), &criterion_categorization(), &inclusion_labeling(),
          &exclusion_labeling(), &coarse_labeling()};
}

}  // namespace templates
}  // namespace trialmatch
