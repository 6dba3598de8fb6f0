#pragma once

// Attribute-set model shared by patients and trials, plus the set algebra the
// retrieval and filtering stages are built on.

#include <cstdint>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch {

inline constexpr int kAgeMin = 0;
inline constexpr int kAgeMax = 200;

/// Closed integer interval of ages in years.
struct AgeInterval {
  int lo = kAgeMin;
  int hi = kAgeMax;

  friend bool operator==(const AgeInterval&, const AgeInterval&) = default;
};

/// A union of closed integer age intervals, kept sorted, disjoint and merged
/// (adjacent intervals such as [1,3] and [4,5] are coalesced, since they
/// denote the same integer set as [1,5]).
class AgeSet {
 public:
  AgeSet() = default;  // empty set
  explicit AgeSet(std::vector<AgeInterval> intervals);
  AgeSet(std::initializer_list<AgeInterval> intervals);

  static AgeSet full() { return AgeSet{{kAgeMin, kAgeMax}}; }
  static AgeSet single(int age) { return AgeSet{{age, age}}; }
  static AgeSet range(int lo, int hi) { return AgeSet{{lo, hi}}; }

  const std::vector<AgeInterval>& intervals() const { return intervals_; }
  bool empty() const { return intervals_.empty(); }
  bool contains(int age) const;
  bool is_full() const;

  AgeSet unite(const AgeSet& other) const;

  std::string to_string() const;

  friend bool operator==(const AgeSet&, const AgeSet&) = default;

 private:
  std::vector<AgeInterval> intervals_;
};

/// Sorts, validates and merges an interval list. Throws std::invalid_argument
/// when an interval has lo > hi or a negative bound.
std::vector<AgeInterval> normalize_intervals(std::vector<AgeInterval> intervals);

AgeSet age_intersect(const AgeSet& a, const AgeSet& b);

/// Singleton gender value. "All" in any letter case unifies with everything.
class GenderSet {
 public:
  enum class Kind { kMale, kFemale, kAll, kOther };

  GenderSet() = default;  // All
  static GenderSet parse(std::string_view token);
  static GenderSet male() { return GenderSet(Kind::kMale, {}); }
  static GenderSet female() { return GenderSet(Kind::kFemale, {}); }
  static GenderSet all() { return GenderSet(Kind::kAll, {}); }

  Kind kind() const { return kind_; }
  const std::string& other() const { return other_; }
  std::string to_string() const;

  friend bool operator==(const GenderSet&, const GenderSet&) = default;

 private:
  GenderSet(Kind kind, std::string other) : kind_(kind), other_(std::move(other)) {}

  Kind kind_ = Kind::kAll;
  std::string other_;
};

/// G_patient ∩ (G_trial ∪ {All}) is non-empty.
bool gender_match(const GenderSet& patient, const GenderSet& trial);

/// Lowercases ASCII, collapses whitespace runs to one space and strips
/// leading/trailing punctuation and whitespace. Returns "" for input that has
/// nothing left, which callers treat as "drop this phrase".
std::string normalize_phrase(std::string_view raw);

/// Set of normalized noun phrases. Empty and duplicate phrases are dropped on
/// insertion.
class PhraseSet {
 public:
  PhraseSet() = default;
  PhraseSet(std::initializer_list<std::string_view> phrases);

  bool insert(std::string_view raw);
  bool contains(std::string_view raw) const;
  std::size_t size() const { return phrases_.size(); }
  bool empty() const { return phrases_.empty(); }
  auto begin() const { return phrases_.begin(); }
  auto end() const { return phrases_.end(); }
  std::vector<std::string> to_vector() const { return {phrases_.begin(), phrases_.end()}; }

  friend bool operator==(const PhraseSet&, const PhraseSet&) = default;

 private:
  std::set<std::string> phrases_;
};

using ConceptId = std::string;

/// Set of ontology concept ids, ordered by id.
class ConceptSet {
 public:
  ConceptSet() = default;
  ConceptSet(std::initializer_list<ConceptId> ids) : ids_(ids) {}
  template <typename It>
  ConceptSet(It first, It last) : ids_(first, last) {}

  void insert(ConceptId id) { ids_.insert(std::move(id)); }
  void insert_all(const ConceptSet& other) { ids_.insert(other.ids_.begin(), other.ids_.end()); }
  bool contains(const ConceptId& id) const { return ids_.count(id) != 0; }
  bool includes(const ConceptSet& subset) const;
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

  ConceptSet intersect(const ConceptSet& other) const;
  std::size_t intersection_size(const ConceptSet& other) const;

  friend bool operator==(const ConceptSet&, const ConceptSet&) = default;

 private:
  std::set<ConceptId> ids_;
};

enum class Polarity { kInclusion, kExclusion };

enum class Category : std::uint8_t { kTreatment = 1, kDemographic = 2, kDisease = 4 };

inline constexpr Category kAllCategories[] = {Category::kTreatment, Category::kDemographic,
                                              Category::kDisease};

/// Small bitset over the three criterion categories.
class CategorySet {
 public:
  CategorySet() = default;
  CategorySet(std::initializer_list<Category> cats) {
    for (Category c : cats) insert(c);
  }

  void insert(Category c) { bits_ |= static_cast<std::uint8_t>(c); }
  bool contains(Category c) const { return (bits_ & static_cast<std::uint8_t>(c)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::uint8_t bits() const { return bits_; }
  static CategorySet from_bits(std::uint8_t bits);

  friend bool operator==(const CategorySet&, const CategorySet&) = default;

 private:
  std::uint8_t bits_ = 0;
};

std::string to_string(Polarity p);
std::string to_string(Category c);
std::string to_string(const CategorySet& cats);  // e.g. "disease|treatment"
Polarity parse_polarity(std::string_view s);
Category parse_category(std::string_view s);
CategorySet parse_categories(std::string_view s);

struct Criterion {
  std::string text;
  Polarity polarity = Polarity::kInclusion;
  CategorySet categories;  // empty until categorized

  friend bool operator==(const Criterion&, const Criterion&) = default;
};

enum class EligibilityLabel { kEligible, kExcluded, kNotEnoughInfo };
enum class CoarseLabel { kEligible, kExcluded };

std::string to_string(EligibilityLabel l);
std::string to_string(CoarseLabel l);
/// Accepts the canonical tokens plus the prompt vocabulary ("no relevant
/// information"), case-insensitively. Throws std::invalid_argument otherwise.
EligibilityLabel parse_eligibility_label(std::string_view s);
CoarseLabel parse_coarse_label(std::string_view s);

struct PatientProfile {
  std::string id;
  AgeSet age = AgeSet::full();
  GenderSet gender;
  PhraseSet treatment;
  PhraseSet diagnosis_raw;
  ConceptSet diagnosis_norm;
  ConceptSet diagnosis_expanded;
  PhraseSet demographics;
  PhraseSet disease;
  std::string note_text;

  friend bool operator==(const PatientProfile&, const PatientProfile&) = default;
};

struct TrialRecord {
  std::string id;
  AgeSet age = AgeSet::full();
  GenderSet gender;
  PhraseSet condition_raw;
  ConceptSet condition_norm;
  std::vector<Criterion> criteria;
  std::string raw_text;

  std::vector<const Criterion*> criteria_with(Polarity p) const;
  bool categorized() const;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

}  // namespace trialmatch
