#include "trialmatch/labeling.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include <json.hpp>

#include "trialmatch/text.hpp"

namespace trialmatch {

namespace {

LabelingError malformed(const std::string& what, std::string_view raw) {
  std::string excerpt(raw.substr(0, 160));
  return LabelingError(LabelingError::Kind::kMalformedOutput, what + ": " + excerpt);
}

void add_facts(std::vector<std::string>& out, const PhraseSet& set) {
  for (const auto& p : set) out.push_back(p);
}

}  // namespace

std::string PatientContext::render_bullets() const {
  std::string out;
  for (const auto& f : facts) {
    out += "- ";
    out += f;
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::string PatientContext::render_profile() const {
  return note.empty() ? render_bullets() : note;
}

PatientContext make_patient_context(const PatientProfile& patient, CategorySet categories) {
  if (categories.empty()) {
    categories = {Category::kTreatment, Category::kDemographic, Category::kDisease};
  }
  PatientContext ctx;
  ctx.patient_id = patient.id;
  ctx.age = patient.age;
  ctx.gender = patient.gender;
  ctx.note = patient.note_text;
  if (categories.contains(Category::kTreatment)) add_facts(ctx.facts, patient.treatment);
  if (categories.contains(Category::kDemographic)) add_facts(ctx.facts, patient.demographics);
  if (categories.contains(Category::kDisease)) {
    add_facts(ctx.facts, patient.disease);
    for (const auto& d : patient.diagnosis_raw) {
      if (!patient.disease.contains(d)) ctx.facts.push_back(d);
    }
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Response parsing

namespace {

// Splits "a, b (c, d), 'e, f'" on top-level commas.
std::vector<std::string> split_list_items(std::string_view body) {
  std::vector<std::string> items;
  std::string cur;
  int depth = 0;
  char quote = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        cur.push_back(c);
      }
      continue;
    }
    if ((c == '"' || c == '\'') && text::trim(cur).empty()) {
      quote = c;
      cur.clear();
      continue;
    }
    if (c == '(' || c == '[' || c == '{') ++depth;
    if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    if (c == ',' && depth == 0) {
      items.emplace_back(text::trim(cur));
      cur.clear();
      continue;
    }
    cur.push_back(c);
  }
  if (!text::trim(cur).empty()) items.emplace_back(text::trim(cur));
  items.erase(std::remove_if(items.begin(), items.end(),
                             [](const std::string& s) { return s.empty(); }),
              items.end());
  return items;
}

PhraseSet* extraction_slot(PatientExtraction& e, std::string_view key) {
  std::string k = text::to_lower(key);
  if (k.find("diagnos") != std::string::npos) return &e.diagnosis;
  if (k.find("demographic") != std::string::npos) return &e.demographics;
  if (k.find("disease") != std::string::npos) return &e.disease;
  if (k.find("treatment") != std::string::npos) return &e.treatment;
  return nullptr;
}

}  // namespace

PatientExtraction parse_extraction_response(std::string_view raw) {
  PatientExtraction e;
  bool any_key = false;

  auto first = raw.find('{');
  auto last = raw.rfind('}');
  if (first != std::string_view::npos && last != std::string_view::npos && last > first) {
    auto j = nlohmann::json::parse(raw.substr(first, last - first + 1), nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it) {
        PhraseSet* slot = extraction_slot(e, it.key());
        if (!slot) continue;
        any_key = true;
        if (it->is_array()) {
          for (const auto& v : *it)
            if (v.is_string()) slot->insert(v.get<std::string>());
        } else if (it->is_string()) {
          slot->insert(it->get<std::string>());
        }
      }
      if (any_key) return e;
    }
  }

  // Loose form: "Key": [bare item, bare item (with, commas), ...]
  static const std::regex key_re(R"re(["']([^"'\n]+)["']\s*:\s*\[)re");
  std::string s(raw);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), key_re); it != std::sregex_iterator();
       ++it) {
    PhraseSet* slot = extraction_slot(e, (*it)[1].str());
    if (!slot) continue;
    std::size_t open = static_cast<std::size_t>(it->position(0) + it->length(0));
    int depth = 1;
    std::size_t pos = open;
    for (; pos < s.size() && depth > 0; ++pos) {
      if (s[pos] == '[') ++depth;
      if (s[pos] == ']') --depth;
    }
    if (depth != 0) throw malformed("unterminated list in extraction output", raw);
    any_key = true;
    for (const auto& item : split_list_items(std::string_view(s).substr(open, pos - 1 - open)))
      slot->insert(item);
  }
  if (!any_key) throw malformed("no characteristic lists in extraction output", raw);
  return e;
}

CategorySet parse_categorization_response(std::string_view raw) {
  static const std::regex re(R"re(["']?categor(?:y|ies)["']?\s*:\s*\[([^\]]*)\])re",
                             std::regex::icase);
  std::string s(raw);
  std::smatch m;
  if (!std::regex_search(s, m, re)) throw malformed("no category list in output", raw);
  CategorySet cats;
  for (const auto& item : split_list_items(m[1].str())) {
    std::string t = text::to_lower(item);
    if (t.find("disease") != std::string::npos) cats.insert(Category::kDisease);
    if (t.find("demographic") != std::string::npos) cats.insert(Category::kDemographic);
    if (t.find("treatment") != std::string::npos) cats.insert(Category::kTreatment);
  }
  if (cats.empty()) throw malformed("no recognised category in output", raw);
  return cats;
}

EligibilityLabel parse_fine_response(std::string_view raw) {
  static const std::regex re(R"re(["']label["']\s*:\s*["']?\s*([a-z][a-z ]*[a-z])\s*["']?\s*[,}])re",
                             std::regex::icase);
  std::string s(raw);
  std::smatch m;
  if (!std::regex_search(s, m, re)) throw malformed("no label field in output", raw);
  try {
    return parse_eligibility_label(m[1].str());
  } catch (const std::invalid_argument&) {
    throw malformed("unknown label token", raw);
  }
}

CoarseLabel parse_coarse_response(std::string_view raw) {
  static const std::regex re(R"re(["']label["']\s*:\s*["']?\s*([a-z]+)\s*["']?\s*[,}])re",
                             std::regex::icase);
  std::string s(raw);
  std::smatch m;
  if (!std::regex_search(s, m, re)) throw malformed("no label field in output", raw);
  try {
    return parse_coarse_label(m[1].str());
  } catch (const std::invalid_argument&) {
    throw malformed("unknown coarse label token", raw);
  }
}

std::string format_extraction_response(const PatientExtraction& e) {
  nlohmann::ordered_json j;
  j["Disease characteristics"] = e.disease.to_vector();
  j["demographic characteristics"] = e.demographics.to_vector();
  j["Treatment"] = e.treatment.to_vector();
  j["Suggested Diagnosis"] = e.diagnosis.to_vector();
  return j.dump();
}

std::string format_categorization_response(std::string_view criterion, CategorySet cats) {
  nlohmann::ordered_json j;
  j["Criterion"] = std::string(criterion);
  auto list = nlohmann::ordered_json::array();
  if (cats.contains(Category::kDisease)) list.push_back("Disease Criteria");
  if (cats.contains(Category::kDemographic)) list.push_back("Demographic Criteria");
  if (cats.contains(Category::kTreatment)) list.push_back("Treatment Criteria");
  j["Category"] = list;
  return j.dump();
}

std::string format_fine_response(std::string_view criterion, EligibilityLabel label) {
  std::string token = label == EligibilityLabel::kNotEnoughInfo ? "no relevant information"
                                                                 : to_string(label);
  std::string crit(criterion);
  std::replace(crit.begin(), crit.end(), '\n', ' ');
  return "{'Criterion': " + crit + ", 'Label': '" + token + "'}";
}

std::string format_coarse_response(CoarseLabel label) {
  return "{'label': '" + to_string(label) + "'}";
}

// ---------------------------------------------------------------------------
// Age and gender scanning

namespace {

bool is_age_word(const std::string& w) {
  static const char* words[] = {"age",      "aged",     "ages",     "between", "patients",
                                "patient",  "subjects", "adults",   "adult",   "men",
                                "women",    "males",    "females",  "male",    "female",
                                "children", "persons",  "people",   "individuals",
                                "participants", "volunteers", "old", "older", "younger"};
  return std::find(std::begin(words), std::end(words), w) != std::end(words);
}

bool is_year_word(const std::string& w) {
  return w == "year" || w == "years" || w == "yr" || w == "yrs" || w == "y" || w == "yo";
}

std::string word_before(const std::string& s, std::size_t pos) {
  std::size_t end = pos;
  while (end > 0 && !std::isalnum(static_cast<unsigned char>(s[end - 1]))) --end;
  std::size_t begin = end;
  while (begin > 0 && std::isalnum(static_cast<unsigned char>(s[begin - 1]))) --begin;
  return s.substr(begin, end - begin);
}

std::string word_after(const std::string& s, std::size_t pos) {
  std::size_t begin = pos;
  while (begin < s.size() && !std::isalnum(static_cast<unsigned char>(s[begin]))) ++begin;
  std::size_t end = begin;
  while (end < s.size() && std::isalnum(static_cast<unsigned char>(s[end]))) ++end;
  return s.substr(begin, end - begin);
}

struct AgeMatch {
  std::size_t begin, end;
  enum Kind { kRange, kLower, kUpper } kind;
  int lo, hi;
};

}  // namespace

AgeSet scan_age_mentions(std::string_view input) {
  std::string s = text::to_lower(input);
  std::vector<bool> used(s.size() + 1, false);
  std::vector<AgeMatch> found;

  auto overlaps = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      if (used[i]) return true;
    return false;
  };
  auto claim = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) used[i] = true;
  };
  auto chained = [&](std::size_t b) {
    // "age 18-30 or 50-70": a match joined to an accepted one by or/and.
    std::string w = word_before(s, b);
    if (w != "or" && w != "and") return false;
    for (const auto& f : found)
      if (f.end <= b && b - f.end <= 6) return true;
    return false;
  };
  auto age_context = [&](std::size_t b, std::size_t e) {
    return is_year_word(word_after(s, e)) || is_age_word(word_before(s, b)) || chained(b);
  };

  struct Pattern {
    std::regex re;
    AgeMatch::Kind kind;
    int strict;        // 1 when the comparator excludes the bound itself
    bool needs_context;
    bool bare_years;   // "N years": reject durations such as "for 40 years"
  };
  static const std::vector<Pattern> patterns = [] {
    std::vector<Pattern> p;
    const char* num = R"((\d{1,3}))";
    const char* yrs = R"((?:\s*(?:years?|yrs?)(?:\s+of\s+age)?)?)";
    p.push_back({std::regex(std::string(R"(between\s+)") + num + yrs + R"(\s+and\s+)" + num),
                 AgeMatch::kRange, 0, false, false});
    p.push_back({std::regex(std::string(num) + yrs + R"(\s*(?:-|–|to)\s*)" + num),
                 AgeMatch::kRange, 0, true, false});
    p.push_back({std::regex(std::string(num) + yrs +
                            R"(\s*(?:or|and)\s+(?:older|over|above|more|greater))"),
                 AgeMatch::kLower, 0, false, false});
    p.push_back({std::regex(std::string(num) + R"(\s*\+)"), AgeMatch::kLower, 0, true, false});
    p.push_back({std::regex(std::string(num) + yrs +
                            R"(\s*(?:or|and)\s+(?:younger|under|below|less))"),
                 AgeMatch::kUpper, 0, false, false});
    p.push_back({std::regex(std::string(R"((?:>=|≥|at least|no less than|not less than|greater than or equal to)\s*)") + num),
                 AgeMatch::kLower, 0, true, false});
    p.push_back({std::regex(std::string(R"((?:>|older than|over|above|greater than|more than)\s*)") + num),
                 AgeMatch::kLower, 1, true, false});
    p.push_back({std::regex(std::string(R"((?:<=|≤|at most|up to|no more than|no older than|not older than|less than or equal to)\s*)") + num),
                 AgeMatch::kUpper, 0, true, false});
    p.push_back({std::regex(std::string(R"((?:<|younger than|under|below|less than)\s*)") + num),
                 AgeMatch::kUpper, 1, true, false});
    p.push_back({std::regex(std::string(num) + R"(\s*-?\s*(?:years?|yrs?)\s*-?\s*old)"),
                 AgeMatch::kRange, 0, false, false});
    p.push_back({std::regex(std::string(num) + R"(\s*(?:y/o|yo)\b)"), AgeMatch::kRange, 0, false,
                 false});
    p.push_back({std::regex(std::string(R"(\bage[d]?\s*(?::|of|is|=)?\s*)") + num),
                 AgeMatch::kRange, 0, false, false});
    p.push_back({std::regex(std::string(num) + R"(\s*(?:years?|yrs?)\b)"), AgeMatch::kRange, 0,
                 false, true});
    return p;
  }();

  for (const auto& pat : patterns) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pat.re); it != std::sregex_iterator();
         ++it) {
      const auto& m = *it;
      auto b = static_cast<std::size_t>(m.position(0));
      auto e = b + static_cast<std::size_t>(m.length(0));
      if (overlaps(b, e)) continue;
      if (pat.needs_context && !age_context(b, e)) continue;
      if (pat.bare_years) {
        std::string w = word_before(s, b);
        if (w == "for" || w == "since" || w == "past" || w == "last" || w == "within" ||
            w == "the" || w == "than")
          continue;
      }
      AgeMatch am{b, e, pat.kind, kAgeMin, kAgeMax};
      int first = std::stoi(m[1].str());
      if (pat.kind == AgeMatch::kRange) {
        int second = m.size() > 2 && m[2].matched ? std::stoi(m[2].str()) : first;
        am.lo = std::min(first, second);
        am.hi = std::max(first, second);
      } else if (pat.kind == AgeMatch::kLower) {
        am.lo = first + pat.strict;
      } else {
        am.hi = first - pat.strict;
        if (am.hi < kAgeMin) continue;
      }
      claim(b, e);
      found.push_back(am);
    }
  }

  // Half-line bounds in the same text combine by intersection ("18 or older
  // and under 65"); explicit ranges and single values are alternatives.
  std::vector<AgeInterval> out;
  bool have_bound = false;
  AgeInterval bound{kAgeMin, kAgeMax};
  for (const auto& f : found) {
    if (f.kind == AgeMatch::kRange) {
      out.push_back({f.lo, f.hi});
    } else {
      have_bound = true;
      bound.lo = std::max(bound.lo, f.lo);
      bound.hi = std::min(bound.hi, f.hi);
    }
  }
  if (have_bound && bound.lo <= bound.hi) out.push_back(bound);
  for (auto& iv : out) {
    iv.lo = std::clamp(iv.lo, kAgeMin, kAgeMax);
    iv.hi = std::clamp(iv.hi, kAgeMin, kAgeMax);
  }
  return AgeSet(std::move(out));
}

std::optional<GenderSet> scan_gender_mentions(std::string_view input) {
  static const char* female[] = {"female",   "females",     "woman",          "women",
                                 "girl",     "girls",       "pregnant",       "nonpregnant",
                                 "postmenopausal", "premenopausal", "lactating"};
  static const char* male[] = {"male", "males", "man", "men", "boy", "boys"};
  bool f = false, m = false;
  for (const auto& w : text::word_tokens(input)) {
    if (std::find_if(std::begin(female), std::end(female), [&](const char* x) { return w == x; }) !=
        std::end(female))
      f = true;
    if (std::find_if(std::begin(male), std::end(male), [&](const char* x) { return w == x; }) !=
        std::end(male))
      m = true;
  }
  if (f && m) return GenderSet::all();
  if (f) return GenderSet::female();
  if (m) return GenderSet::male();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Extraction

PatientProfile extract_patient(const std::string& patient_id, std::string_view note, Labeler& lb) {
  if (text::trim(note).empty()) {
    throw LabelingError(LabelingError::Kind::kEmptyNote, "empty note for patient " + patient_id);
  }
  auto reply = lb.extract_patient(templates::patient_extraction(), patient_id, note);
  PatientProfile p;
  p.id = patient_id;
  p.note_text = std::string(note);
  p.disease = reply.value.disease;
  p.demographics = reply.value.demographics;
  p.treatment = reply.value.treatment;
  p.diagnosis_raw = reply.value.diagnosis;

  AgeSet age;
  std::optional<GenderSet> gender;
  for (const auto& phrase : p.demographics) {
    age = age.unite(scan_age_mentions(phrase));
    if (auto g = scan_gender_mentions(phrase)) {
      gender = gender && !(*gender == *g) ? GenderSet::all() : *g;
    }
  }
  p.age = age.empty() ? AgeSet::full() : age;
  p.gender = gender.value_or(GenderSet::all());
  return p;
}

std::optional<int> parse_age_bound(std::string_view s) {
  std::string t = text::to_lower(text::trim(s));
  if (t.empty() || t == "n/a" || t == "na" || t == "none") return std::nullopt;
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  if (i == 0) return std::nullopt;
  long value = std::stol(t.substr(0, i));
  std::string unit(text::trim(std::string_view(t).substr(i)));
  if (unit.rfind("month", 0) == 0) value /= 12;
  else if (unit.rfind("week", 0) == 0) value /= 52;
  else if (unit.rfind("day", 0) == 0) value /= 365;
  else if (unit.rfind("hour", 0) == 0 || unit.rfind("minute", 0) == 0) value = 0;
  return static_cast<int>(std::min<long>(value, kAgeMax));
}

TrialRecord extract_trial(const RawTrial& raw, Labeler* lb) {
  TrialRecord t;
  t.id = raw.id;
  t.raw_text = raw.text;
  for (const auto& c : raw.conditions) t.condition_raw.insert(c);
  for (const auto& c : raw.inclusion)
    if (!text::trim(c).empty()) t.criteria.push_back({std::string(text::trim(c)), Polarity::kInclusion, {}});
  for (const auto& c : raw.exclusion)
    if (!text::trim(c).empty()) t.criteria.push_back({std::string(text::trim(c)), Polarity::kExclusion, {}});
  if (t.criteria.empty()) {
    throw LabelingError(LabelingError::Kind::kMissingCriteriaSection,
                        "trial " + raw.id + " has no eligibility criteria");
  }

  std::optional<int> lo = raw.min_age ? parse_age_bound(*raw.min_age) : std::nullopt;
  std::optional<int> hi = raw.max_age ? parse_age_bound(*raw.max_age) : std::nullopt;
  if (lo || hi) {
    int a = lo.value_or(kAgeMin), b = hi.value_or(kAgeMax);
    t.age = a <= b ? AgeSet::range(a, b) : AgeSet::full();
  } else {
    AgeSet scanned;
    for (const auto& c : raw.inclusion) scanned = scanned.unite(scan_age_mentions(c));
    t.age = scanned.empty() ? AgeSet::full() : scanned;
  }

  if (raw.gender && !text::trim(*raw.gender).empty()) {
    t.gender = GenderSet::parse(*raw.gender);
  } else {
    std::optional<GenderSet> g;
    for (const auto& c : raw.inclusion) {
      if (auto found = scan_gender_mentions(c)) g = g && !(*g == *found) ? GenderSet::all() : *found;
    }
    t.gender = g.value_or(GenderSet::all());
  }

  if (lb) categorize_trial(t, *lb);
  return t;
}

void categorize_trial(TrialRecord& trial, Labeler& lb) {
  for (std::size_t i = 0; i < trial.criteria.size(); ++i) {
    auto& c = trial.criteria[i];
    if (!c.categories.empty()) continue;
    auto reply = lb.categorize(templates::criterion_categorization(), trial.id, i, c.text);
    if (reply.value.empty()) {
      throw LabelingError(LabelingError::Kind::kMalformedOutput,
                          "empty category set for " + trial.id + "#" + std::to_string(i));
    }
    c.categories = reply.value;
  }
}

// ---------------------------------------------------------------------------
// Eligibility labels

CriterionJudgment fine_label(const std::string& trial_id, std::size_t index,
                             const Criterion& criterion, const PatientProfile& patient,
                             Labeler& lb) {
  const PromptTemplate& tmpl = criterion.polarity == Polarity::kInclusion
                                   ? templates::inclusion_labeling()
                                   : templates::exclusion_labeling();
  CriterionJudgment j;
  j.trial_id = trial_id;
  j.criterion_index = index;
  j.polarity = criterion.polarity;
  j.categories = criterion.categories;
  j.template_name = tmpl.name;
  PatientContext ctx = make_patient_context(patient, criterion.categories);
  try {
    j.label = lb.label_criterion(tmpl, trial_id, index, criterion, ctx).value;
  } catch (const LabelingError& e) {
    if (e.kind() != LabelingError::Kind::kMalformedOutput) throw;
    j.label = EligibilityLabel::kNotEnoughInfo;
    j.degraded = true;
  }
  return j;
}

CoarseOutcome coarse_label(const TrialRecord& trial, const PatientProfile& patient, Labeler& lb) {
  PatientContext ctx = make_patient_context(patient);
  try {
    return {lb.label_trial(templates::coarse_labeling(), trial, ctx).value, false};
  } catch (const LabelingError& e) {
    if (e.kind() != LabelingError::Kind::kMalformedOutput) throw;
    return {CoarseLabel::kExcluded, true};
  }
}

TrialJudgments judge_trial(const TrialRecord& trial, const PatientProfile& patient, Labeler& lb,
                           bool with_coarse) {
  TrialJudgments out;
  out.trial_id = trial.id;
  for (std::size_t i = 0; i < trial.criteria.size(); ++i) {
    const auto& c = trial.criteria[i];
    if (c.categories.empty()) continue;
    out.fine.push_back(fine_label(trial.id, i, c, patient, lb));
  }
  if (with_coarse) {
    auto co = coarse_label(trial, patient, lb);
    out.coarse = co.label;
    out.coarse_degraded = co.degraded;
  }
  return out;
}

}  // namespace trialmatch
