#include "trialmatch/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "trialmatch/text.hpp"

namespace trialmatch {

std::vector<AgeInterval> normalize_intervals(std::vector<AgeInterval> intervals) {
  for (const auto& iv : intervals) {
    if (iv.lo > iv.hi) throw std::invalid_argument("age interval with lo > hi");
    if (iv.lo < 0) throw std::invalid_argument("negative age bound");
  }
  std::sort(intervals.begin(), intervals.end(),
            [](const AgeInterval& a, const AgeInterval& b) {
              return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
            });
  std::vector<AgeInterval> merged;
  for (const auto& iv : intervals) {
    // Integer semantics: [1,3] and [4,5] cover the same set as [1,5].
    if (!merged.empty() && static_cast<long long>(iv.lo) <= static_cast<long long>(merged.back().hi) + 1) {
      merged.back().hi = std::max(merged.back().hi, iv.hi);
    } else {
      merged.push_back(iv);
    }
  }
  return merged;
}

AgeSet::AgeSet(std::vector<AgeInterval> intervals)
    : intervals_(normalize_intervals(std::move(intervals))) {}

AgeSet::AgeSet(std::initializer_list<AgeInterval> intervals)
    : AgeSet(std::vector<AgeInterval>(intervals)) {}

bool AgeSet::contains(int age) const {
  return std::any_of(intervals_.begin(), intervals_.end(),
                     [age](const AgeInterval& iv) { return iv.lo <= age && age <= iv.hi; });
}

bool AgeSet::is_full() const {
  return intervals_.size() == 1 && intervals_[0].lo <= kAgeMin && intervals_[0].hi >= kAgeMax;
}

AgeSet AgeSet::unite(const AgeSet& other) const {
  std::vector<AgeInterval> all = intervals_;
  all.insert(all.end(), other.intervals_.begin(), other.intervals_.end());
  return AgeSet(std::move(all));
}

std::string AgeSet::to_string() const {
  if (intervals_.empty()) return "{}";
  std::string out;
  for (const auto& iv : intervals_) {
    if (!out.empty()) out += "u";
    out += "[" + std::to_string(iv.lo) + "," + std::to_string(iv.hi) + "]";
  }
  return out;
}

AgeSet age_intersect(const AgeSet& a, const AgeSet& b) {
  const auto& x = a.intervals();
  const auto& y = b.intervals();
  std::vector<AgeInterval> out;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    int lo = std::max(x[i].lo, y[j].lo);
    int hi = std::min(x[i].hi, y[j].hi);
    if (lo <= hi) out.push_back({lo, hi});
    if (x[i].hi < y[j].hi) {
      ++i;
    } else {
      ++j;
    }
  }
  return AgeSet(std::move(out));
}

GenderSet GenderSet::parse(std::string_view token) {
  std::string t = normalize_phrase(token);
  if (t.empty() || t == "all" || t == "any" || t == "both" || t == "all genders") return all();
  if (t == "male" || t == "m" || t == "man" || t == "men" || t == "males" || t == "boy" ||
      t == "boys")
    return male();
  if (t == "female" || t == "f" || t == "woman" || t == "women" || t == "females" ||
      t == "girl" || t == "girls")
    return female();
  return GenderSet(Kind::kOther, std::move(t));
}

std::string GenderSet::to_string() const {
  switch (kind_) {
    case Kind::kMale:
      return "Male";
    case Kind::kFemale:
      return "Female";
    case Kind::kAll:
      return "All";
    case Kind::kOther:
      return other_;
  }
  return "All";
}

bool gender_match(const GenderSet& patient, const GenderSet& trial) {
  using K = GenderSet::Kind;
  if (trial.kind() == K::kAll || patient.kind() == K::kAll) return true;
  return patient == trial;
}

namespace {

bool strippable_front(std::string_view s) {
  unsigned char c = static_cast<unsigned char>(s.front());
  if (std::isspace(c)) return true;
  if (!std::ispunct(c)) return false;
  if (c == '(') return s.find(')') == std::string_view::npos;
  if (c == '[') return s.find(']') == std::string_view::npos;
  return true;
}

bool strippable_back(std::string_view s) {
  unsigned char c = static_cast<unsigned char>(s.back());
  if (std::isspace(c)) return true;
  if (!std::ispunct(c)) return false;
  if (c == ')') return s.find('(') == std::string_view::npos;
  if (c == ']') return s.find('[') == std::string_view::npos;
  return true;
}

}  // namespace

std::string normalize_phrase(std::string_view raw) {
  std::string collapsed;
  collapsed.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !collapsed.empty()) collapsed.push_back(' ');
    pending_space = false;
    collapsed.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
  }
  std::string_view v = collapsed;
  while (!v.empty() && (strippable_front(v) || strippable_back(v))) {
    if (strippable_front(v)) v.remove_prefix(1);
    if (!v.empty() && strippable_back(v)) v.remove_suffix(1);
  }
  return std::string(v);
}

PhraseSet::PhraseSet(std::initializer_list<std::string_view> phrases) {
  for (auto p : phrases) insert(p);
}

bool PhraseSet::insert(std::string_view raw) {
  std::string p = normalize_phrase(raw);
  if (p.empty()) return false;
  return phrases_.insert(std::move(p)).second;
}

bool PhraseSet::contains(std::string_view raw) const {
  return phrases_.count(normalize_phrase(raw)) != 0;
}

bool ConceptSet::includes(const ConceptSet& subset) const {
  return std::includes(ids_.begin(), ids_.end(), subset.ids_.begin(), subset.ids_.end());
}

ConceptSet ConceptSet::intersect(const ConceptSet& other) const {
  ConceptSet out;
  std::set_intersection(ids_.begin(), ids_.end(), other.ids_.begin(), other.ids_.end(),
                        std::inserter(out.ids_, out.ids_.end()));
  return out;
}

std::size_t ConceptSet::intersection_size(const ConceptSet& other) const {
  const ConceptSet& small = size() <= other.size() ? *this : other;
  const ConceptSet& large = size() <= other.size() ? other : *this;
  std::size_t n = 0;
  for (const auto& id : small) n += large.contains(id) ? 1 : 0;
  return n;
}

std::size_t CategorySet::size() const {
  std::size_t n = 0;
  for (Category c : kAllCategories) n += contains(c) ? 1 : 0;
  return n;
}

CategorySet CategorySet::from_bits(std::uint8_t bits) {
  if (bits & ~0x7u) throw std::invalid_argument("category bits out of range");
  CategorySet s;
  s.bits_ = bits;
  return s;
}

std::string to_string(Polarity p) { return p == Polarity::kInclusion ? "inclusion" : "exclusion"; }

std::string to_string(Category c) {
  switch (c) {
    case Category::kTreatment:
      return "treatment";
    case Category::kDemographic:
      return "demographic";
    case Category::kDisease:
      return "disease";
  }
  return "disease";
}

std::string to_string(const CategorySet& cats) {
  std::string out;
  for (Category c : kAllCategories) {
    if (!cats.contains(c)) continue;
    if (!out.empty()) out += "|";
    out += to_string(c);
  }
  return out;
}

Polarity parse_polarity(std::string_view s) {
  std::string t = text::to_lower(text::trim(s));
  if (t == "inclusion") return Polarity::kInclusion;
  if (t == "exclusion") return Polarity::kExclusion;
  throw std::invalid_argument("unknown polarity: " + std::string(s));
}

Category parse_category(std::string_view s) {
  std::string t = text::to_lower(text::trim(s));
  if (t == "treatment") return Category::kTreatment;
  if (t == "demographic") return Category::kDemographic;
  if (t == "disease") return Category::kDisease;
  throw std::invalid_argument("unknown category: " + std::string(s));
}

CategorySet parse_categories(std::string_view s) {
  CategorySet out;
  if (text::trim(s).empty()) return out;
  for (const auto& part : text::split(s, '|')) out.insert(parse_category(part));
  return out;
}

std::string to_string(EligibilityLabel l) {
  switch (l) {
    case EligibilityLabel::kEligible:
      return "eligible";
    case EligibilityLabel::kExcluded:
      return "excluded";
    case EligibilityLabel::kNotEnoughInfo:
      return "not enough info";
  }
  return "not enough info";
}

std::string to_string(CoarseLabel l) {
  return l == CoarseLabel::kEligible ? "eligible" : "excluded";
}

EligibilityLabel parse_eligibility_label(std::string_view s) {
  std::string t = normalize_phrase(s);
  if (t == "eligible") return EligibilityLabel::kEligible;
  if (t == "excluded") return EligibilityLabel::kExcluded;
  if (t == "not enough info" || t == "not enough information" || t == "no relevant information")
    return EligibilityLabel::kNotEnoughInfo;
  throw std::invalid_argument("not an eligibility label: " + std::string(s));
}

CoarseLabel parse_coarse_label(std::string_view s) {
  std::string t = normalize_phrase(s);
  if (t == "eligible") return CoarseLabel::kEligible;
  if (t == "excluded") return CoarseLabel::kExcluded;
  throw std::invalid_argument("not a coarse label: " + std::string(s));
}

std::vector<const Criterion*> TrialRecord::criteria_with(Polarity p) const {
  std::vector<const Criterion*> out;
  for (const auto& c : criteria)
    if (c.polarity == p) out.push_back(&c);
  return out;
}

bool TrialRecord::categorized() const {
  return std::all_of(criteria.begin(), criteria.end(),
                     [](const Criterion& c) { return !c.categories.empty(); });
}

}  // namespace trialmatch
