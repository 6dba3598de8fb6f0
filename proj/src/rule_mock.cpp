#include "trialmatch/rule_mock.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <optional>
#include <regex>
#include <set>

#include "trialmatch/text.hpp"

namespace trialmatch {

namespace {

using Tokens = std::vector<std::string>;

bool starts_at(const std::string& s, std::size_t i, std::string_view what) {
  return s.compare(i, what.size(), what) == 0;
}

// Lowercase tokens that keep hyphenated words ("non-small"), decimals
// ("31.6"), thousands ("1,500" -> "1500") and comparison symbols.
Tokens tokenize(std::string_view in) {
  std::string s = text::to_lower(in);
  Tokens out;
  auto word_char = [](unsigned char c) { return std::isalnum(c) != 0; };
  auto special = [&](std::size_t i) {
    return starts_at(s, i, "\xE2\x89\xA5") || starts_at(s, i, "\xE2\x89\xA4") ||
           starts_at(s, i, "\xE2\x80\x93");
  };
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    if (starts_at(s, i, "\xE2\x89\xA5")) {  // ≥
      out.emplace_back(">=");
      i += 3;
    } else if (starts_at(s, i, "\xE2\x89\xA4")) {  // ≤
      out.emplace_back("<=");
      i += 3;
    } else if (starts_at(s, i, "\xE2\x80\x93")) {  // en dash
      out.emplace_back("-");
      i += 3;
    } else if (c == '>' || c == '<') {
      bool eq = i + 1 < s.size() && s[i + 1] == '=';
      out.push_back(std::string(1, static_cast<char>(c)) + (eq ? "=" : ""));
      i += eq ? 2 : 1;
    } else if (c == '+' || c == '-' || c == '=') {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else if (word_char(c) || (c >= 0x80 && !special(i))) {
      std::string w;
      std::size_t j = i;
      while (j < s.size()) {
        auto d = static_cast<unsigned char>(s[j]);
        bool next_alpha = j + 1 < s.size() && std::isalpha(static_cast<unsigned char>(s[j + 1]));
        bool next_digit = j + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[j + 1]));
        bool next_word = j + 1 < s.size() && word_char(static_cast<unsigned char>(s[j + 1]));
        bool last_alpha = !w.empty() && std::isalpha(static_cast<unsigned char>(w.back()));
        bool last_digit = !w.empty() && std::isdigit(static_cast<unsigned char>(w.back()));
        if (word_char(d) || (d >= 0x80 && !special(j))) {
          w.push_back(static_cast<char>(d));
        } else if (d == '-' && last_alpha && next_alpha) {
          w.push_back('-');
        } else if (d == '.' && last_digit && next_digit) {
          w.push_back('.');
        } else if (d == ',' && last_digit && next_digit && j + 3 < s.size() &&
                   std::isdigit(static_cast<unsigned char>(s[j + 3])) &&
                   (j + 4 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[j + 4])))) {
          // thousands separator: drop it
        } else if (d == '/' && !w.empty() && next_word) {
          w.push_back('/');
        } else {
          break;
        }
        ++j;
      }
      out.push_back(std::move(w));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

bool is_word(const std::string& t) {
  return !t.empty() && (std::isalnum(static_cast<unsigned char>(t[0])) || static_cast<unsigned char>(t[0]) >= 0x80);
}

std::optional<double> as_number(const std::string& t) {
  if (t.empty() || !std::isdigit(static_cast<unsigned char>(t[0]))) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return std::nullopt;
  return v;
}

bool in(const std::set<std::string>& s, const std::string& t) { return s.count(t) != 0; }

bool contains_seq(const Tokens& hay, const Tokens& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

const std::set<std::string>& negation_words() {
  static const std::set<std::string> s = {"no", "not", "denies", "denied", "deny", "without",
                                          "never", "none", "negative", "absence", "free", "lack"};
  return s;
}

const std::set<std::string>& filler_words() {
  static const std::set<std::string> s = {
      "must",     "should",      "have",      "has",       "had",       "having",   "be",
      "is",       "are",         "was",       "were",      "with",      "a",        "an",
      "the",      "known",       "documented", "confirmed", "suspected", "current",  "currently",
      "active",   "prior",       "previous",  "previously", "any",      "of",       "on",
      "received", "receiving",   "taking",    "using",     "use",       "undergone", "underwent",
      "history",  "diagnosis",   "diagnosed", "presence",  "evidence",  "patients", "patient",
      "subjects", "subject",     "participants", "trial",  "for",       "who",      "that",
      "do",       "does",        "did",       "he",        "she",       "they",     "his",
      "her",      "their",       "to",        "for",       "in",        "at",       "there"};
  return s;
}

const std::set<std::string>& gender_words() {
  static const std::set<std::string> s = {"female", "females", "woman", "women", "girl", "girls",
                                          "male",   "males",   "man",   "men",   "boy",  "boys"};
  return s;
}

const std::set<std::string>& demographic_words() {
  static const std::set<std::string> s = {
      "age",        "aged",          "ages",          "year-old",    "years-old",  "male",
      "males",      "female",        "females",       "man",         "men",        "woman",
      "women",      "gender",        "sex",           "pregnant",    "pregnancy",  "nonpregnant",
      "non-pregnant", "postpartum",  "postmenopausal", "premenopausal", "lactating", "breastfeeding",
      "english",    "spanish",       "french",        "chinese",     "arabic",     "language",
      "interpreter", "ethnicity",    "ethnic",        "race",        "racial",     "caucasian",
      "african-american", "hispanic", "latino",       "asian",       "adult",      "adults",
      "child",      "children",      "pediatric",     "adolescent",  "adolescents", "elderly"};
  return s;
}

const std::set<std::string>& treatment_words() {
  static const std::set<std::string> s = {
      "therapy",    "therapies",  "treatment",   "treatments",  "treated",       "chemotherapy",
      "radiotherapy", "radiation", "surgery",    "surgical",    "resection",     "medication",
      "medications", "drug",      "drugs",       "dose",        "doses",         "transplant",
      "transplantation", "vaccine", "vaccination", "received",  "receiving",     "prescribed",
      "immunotherapy", "agent",   "agents",      "regimen",     "inhibitor",     "inhibitors",
      "antibiotics", "steroids",  "corticosteroids", "insulin", "statin",        "hormone",
      "intervention", "procedure", "chemoradiotherapy", "infusion", "injection", "injections"};
  return s;
}

const std::set<std::string>& disease_words() {
  static const std::set<std::string> s = {
      "disease",    "diseases",  "cancer",     "carcinoma",  "tumor",      "tumors",
      "tumour",     "diagnosis", "diagnosed",  "history",    "syndrome",   "disorder",
      "disorders",  "infection", "metastases", "metastasis", "metastatic", "diabetes",
      "hypertension", "failure", "stage",      "lesion",     "lesions",    "lymphoma",
      "leukemia",   "sclerosis", "stroke",     "bmi",        "ecog",       "performance",
      "count",      "function",  "pain",       "symptoms",   "condition",  "conditions",
      "nsclc",      "copd",      "asthma",     "dementia",   "depression", "clearance",
      "creatinine", "hemoglobin", "platelet",  "platelets",  "neutrophil", "score",
      "degeneration", "insufficiency", "fracture", "injury",  "obesity",    "cardiac"};
  return s;
}

bool disease_suffix(const std::string& w) {
  static const char* suffixes[] = {"itis", "oma", "emia", "pathy", "osis", "algia", "plegia"};
  for (const char* suf : suffixes) {
    std::string_view sv(suf);
    if (w.size() > sv.size() + 2 && w.compare(w.size() - sv.size(), sv.size(), sv) == 0)
      return true;
  }
  return false;
}

Tokens words_only(const Tokens& toks) {
  Tokens out;
  for (const auto& t : toks)
    if (is_word(t)) out.push_back(t);
  return out;
}

Tokens strip_fillers(Tokens toks) {
  std::size_t i = 0;
  while (i < toks.size() && in(filler_words(), toks[i])) ++i;
  toks.erase(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(i));
  return toks;
}

// A phrase split at its first negation cue. For criteria only a cue among the
// first few words counts ("must not have x"), so trailing qualifiers such as
// "..., not on hormone therapy" leave the criterion positive.
struct Polar {
  bool negated = false;
  Tokens core;
};

Polar polarize(const Tokens& all, std::size_t window) {
  Tokens w = words_only(all);
  Polar p;
  std::size_t limit = std::min(window, w.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (in(negation_words(), w[i])) {
      p.negated = true;
      p.core = strip_fillers(Tokens(w.begin() + static_cast<std::ptrdiff_t>(i) + 1, w.end()));
      // "negative for", "free of", "absence of"
      if (!p.core.empty() && (p.core.front() == "for" || p.core.front() == "of"))
        p.core.erase(p.core.begin());
      return p;
    }
  }
  p.core = strip_fillers(w);
  return p;
}

struct NumericCond {
  Tokens attr;
  enum Cmp { kEq, kGe, kGt, kLe, kLt, kRange } cmp = kEq;
  double a = 0, b = 0;

  bool holds(double v) const {
    switch (cmp) {
      case kEq: return v == a;
      case kGe: return v >= a;
      case kGt: return v > a;
      case kLe: return v <= a;
      case kLt: return v < a;
      case kRange: return a <= v && v <= b;
    }
    return false;
  }
};

std::optional<NumericCond> parse_numeric(const Tokens& toks) {
  static const std::set<std::string> cmp_words = {
      ">=", ">", "<=", "<", "=", "at", "least", "most", "greater", "less", "more", "than", "or",
      "equal", "to", "over", "under", "above", "below", "up", "of", "is", "be", "exceeding",
      "between", "a", "an", "no", "not", ":"};
  static const std::set<std::string> stop = {
      "must", "have", "has", "had", "with", "and", "or", "of", "the", "a", "an", "is", "not",
      "no", "patients", "patient", "subjects", "be", "who", "his", "her", "he", "she", "their",
      "was", "were", "are", "without", "denies", "-", "+", "=", ">", "<", ">=", "<="};

  std::size_t k = 0;
  for (; k < toks.size(); ++k)
    if (as_number(toks[k])) break;
  if (k == toks.size()) return std::nullopt;

  NumericCond c;
  c.a = *as_number(toks[k]);
  std::size_t j = k;
  Tokens cmp;
  while (j > 0 && in(cmp_words, toks[j - 1])) cmp.insert(cmp.begin(), toks[--j]);
  while (j > 0 && c.attr.size() < 3 && is_word(toks[j - 1]) && !in(stop, toks[j - 1]) &&
         !as_number(toks[j - 1])) {
    c.attr.insert(c.attr.begin(), toks[--j]);
  }
  if (c.attr.empty()) return std::nullopt;

  std::string phrase;
  for (const auto& t : cmp) phrase += t + " ";
  auto has = [&](std::string_view x) { return phrase.find(x) != std::string::npos; };
  bool between = has("between");
  if (has(">=") || has("at least") || has("greater than or equal") || has("no less than") ||
      has("not less than"))
    c.cmp = NumericCond::kGe;
  else if (has("<=") || has("at most") || has("up to") || has("less than or equal") ||
           has("no more than") || has("not more than"))
    c.cmp = NumericCond::kLe;
  else if (has("> ") || has("greater than") || has("more than") || has("over ") ||
           has("above") || has("exceeding"))
    c.cmp = NumericCond::kGt;
  else if (has("< ") || has("less than") || has("under") || has("below"))
    c.cmp = NumericCond::kLt;

  auto at = [&](std::size_t i) -> std::string { return i < toks.size() ? toks[i] : std::string(); };
  if ((at(k + 1) == "-" || at(k + 1) == "to" || (between && at(k + 1) == "and")) &&
      as_number(at(k + 2))) {
    c.cmp = NumericCond::kRange;
    c.b = *as_number(at(k + 2));
    if (c.b < c.a) std::swap(c.a, c.b);
    return c;
  }
  std::size_t after = k + 1;
  while (after < toks.size() && is_word(toks[after]) && !as_number(toks[after]) &&
         toks[after] != "or" && toks[after] != "and" && after - k <= 2 &&
         (toks[after].find('/') != std::string::npos || toks[after] == "mg" ||
          toks[after] == "kg" || toks[after] == "mm3" || toks[after] == "years" ||
          toks[after] == "year" || toks[after] == "weeks" || toks[after] == "months" ||
          toks[after] == "points" || toks[after] == "percent")) {
    ++after;  // skip a unit
  }
  std::string tail = at(after) + " " + at(after + 1);
  static const std::set<std::string> ge_tail = {"or higher", "or more", "or greater", "or above",
                                                "and above", "or over", "and over", "or older",
                                                "and older"};
  static const std::set<std::string> le_tail = {"or lower", "or less", "or below", "or fewer",
                                                "or younger", "and younger", "or under",
                                                "and below"};
  if (in(ge_tail, tail) || at(after) == "+") c.cmp = NumericCond::kGe;
  if (in(le_tail, tail)) c.cmp = NumericCond::kLe;
  return c;
}

bool attr_match(const Tokens& x, const Tokens& y) {
  const Tokens& s = x.size() <= y.size() ? x : y;
  const Tokens& l = x.size() <= y.size() ? y : x;
  if (s.empty()) return false;
  return std::equal(s.rbegin(), s.rend(), l.rbegin());
}

struct Fact {
  Tokens tokens;
  Polar polar;
};

std::vector<Fact> parse_facts(const PatientContext& ctx) {
  std::vector<Fact> out;
  for (const auto& f : ctx.facts) {
    Fact fact;
    fact.tokens = tokenize(f);
    fact.polar = polarize(fact.tokens, fact.tokens.size());
    out.push_back(std::move(fact));
  }
  return out;
}

Truth combine_and(const std::vector<Truth>& parts) {
  bool unknown = false;
  for (Truth t : parts) {
    if (t == Truth::kFalse) return Truth::kFalse;
    if (t == Truth::kUnknown) unknown = true;
  }
  return unknown ? Truth::kUnknown : Truth::kTrue;
}

Truth phrase_truth(const Tokens& alt, const std::vector<Fact>& facts) {
  if (alt.empty()) return Truth::kUnknown;
  bool pos = false, neg = false;
  for (const auto& f : facts) {
    const Tokens& core = f.polar.core;
    bool hit = contains_seq(core, alt) || (core.size() >= 2 && contains_seq(alt, core));
    if (!hit) continue;
    (f.polar.negated ? neg : pos) = true;
  }
  if (pos && !neg) return Truth::kTrue;
  if (neg && !pos) return Truth::kFalse;
  return Truth::kUnknown;
}

bool criterion_negated(const Tokens& toks) { return polarize(toks, 4).negated; }

}  // namespace

// ---------------------------------------------------------------------------

Truth RuleMockLabeler::evaluate(std::string_view criterion, const PatientContext& ctx) {
  Tokens toks = tokenize(criterion);
  Tokens words = words_only(toks);

  // Demographic predicates: age ranges and bare gender requirements.
  AgeSet ages = scan_age_mentions(criterion);
  bool female = false, male = false, residual = false;
  static const std::set<std::string> demo_filler = {
      "age", "aged", "ages", "years", "year", "old", "year-old", "or", "and", "older", "younger",
      "between", "to", "over", "under", "at", "least", "most", "than", "yrs", "only"};
  for (const auto& w : words) {
    if (in(gender_words(), w)) {
      (w.rfind("fem", 0) == 0 || w.rfind("wom", 0) == 0 || w.rfind("girl", 0) == 0 ? female
                                                                                    : male) = true;
    } else if (!as_number(w) && !in(demo_filler, w) && !in(filler_words(), w) &&
               !in(negation_words(), w)) {
      residual = true;
    }
  }
  bool gendered = female || male;
  if (!ages.empty() || (gendered && !residual)) {
    std::vector<Truth> parts;
    if (!ages.empty()) {
      if (ctx.age.is_full()) {
        parts.push_back(Truth::kUnknown);
      } else {
        AgeSet common = age_intersect(ctx.age, ages);
        parts.push_back(common == ctx.age ? Truth::kTrue
                        : common.empty()  ? Truth::kFalse
                                          : Truth::kUnknown);
      }
    }
    if (gendered) {
      using K = GenderSet::Kind;
      K pk = ctx.gender.kind();
      if (female && male) {
        parts.push_back(Truth::kTrue);
      } else if (pk == K::kFemale || pk == K::kMale) {
        parts.push_back((pk == K::kFemale) == female ? Truth::kTrue : Truth::kFalse);
      } else {
        parts.push_back(Truth::kUnknown);
      }
    }
    return combine_and(parts);
  }

  std::vector<Fact> facts = parse_facts(ctx);

  if (auto cond = parse_numeric(toks)) {
    for (const auto& f : facts) {
      if (f.polar.negated) continue;
      auto pv = parse_numeric(f.tokens);
      if (!pv || pv->cmp != NumericCond::kEq || !attr_match(pv->attr, cond->attr)) continue;
      return cond->holds(pv->a) ? Truth::kTrue : Truth::kFalse;
    }
    return Truth::kUnknown;
  }

  Polar crit = polarize(toks, 4);
  std::vector<Tokens> alts(1);
  for (const auto& w : crit.core) {
    if (w == "or" && !alts.back().empty()) {
      alts.emplace_back();
    } else {
      alts.back().push_back(w);
    }
  }
  bool unknown = false;
  for (auto& alt : alts) {
    alt = strip_fillers(alt);
    Truth t = phrase_truth(alt, facts);
    if (t == Truth::kTrue) return Truth::kTrue;
    if (t == Truth::kUnknown) unknown = true;
  }
  return unknown ? Truth::kUnknown : Truth::kFalse;
}

EligibilityLabel RuleMockLabeler::judge(const Criterion& criterion, const PatientContext& ctx) {
  Truth t = evaluate(criterion.text, ctx);
  if (t == Truth::kUnknown) return EligibilityLabel::kNotEnoughInfo;
  if (criterion.polarity == Polarity::kExclusion) {
    // Satisfying an exclusion criterion excludes, whatever its wording.
    return t == Truth::kTrue ? EligibilityLabel::kExcluded : EligibilityLabel::kEligible;
  }
  bool satisfied = (t == Truth::kTrue) != criterion_negated(tokenize(criterion.text));
  return satisfied ? EligibilityLabel::kEligible : EligibilityLabel::kExcluded;
}

CoarseLabel RuleMockLabeler::judge_trial(const TrialRecord& trial, const PatientContext& ctx) {
  bool any_eligible = false;
  for (const auto& c : trial.criteria) {
    EligibilityLabel l = judge(c, ctx);
    if (l == EligibilityLabel::kExcluded) return CoarseLabel::kExcluded;
    if (l == EligibilityLabel::kEligible) any_eligible = true;
  }
  return any_eligible ? CoarseLabel::kEligible : CoarseLabel::kExcluded;
}

CategorySet RuleMockLabeler::categorize_text(std::string_view criterion) {
  CategorySet cats;
  bool disease = false;
  for (const auto& w : words_only(tokenize(criterion))) {
    if (in(demographic_words(), w)) cats.insert(Category::kDemographic);
    if (in(treatment_words(), w)) cats.insert(Category::kTreatment);
    if (in(disease_words(), w) || disease_suffix(w)) disease = true;
  }
  if (!scan_age_mentions(criterion).empty()) cats.insert(Category::kDemographic);
  if (disease || cats.empty()) cats.insert(Category::kDisease);
  return cats;
}

namespace {

std::vector<std::string> split_top_level(const std::string& s,
                                         const std::vector<std::string>& seps) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (std::size_t i = 0; i < s.size();) {
    char c = s[i];
    if (c == '(' || c == '[') ++depth;
    if ((c == ')' || c == ']') && depth > 0) --depth;
    bool cut = false;
    if (depth == 0) {
      for (const auto& sep : seps) {
        if (s.compare(i, sep.size(), sep) == 0) {
          out.push_back(cur);
          cur.clear();
          i += sep.size();
          cut = true;
          break;
        }
      }
    }
    if (cut) continue;
    cur.push_back(c);
    ++i;
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_sentences(std::string_view note) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < note.size(); ++i) {
    char c = note[i];
    bool end = c == '\n' || c == ';' ||
               ((c == '.' || c == '!' || c == '?') &&
                (i + 1 == note.size() || std::isspace(static_cast<unsigned char>(note[i + 1])) ||
                 note[i + 1] == '"'));
    if (end) {
      if (!text::trim(cur).empty()) out.emplace_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!text::trim(cur).empty()) out.emplace_back(text::trim(cur));
  return out;
}

std::string strip_subject(std::string clause) {
  static const std::vector<std::string> prefixes = {"the patient ", "patient ", "he ", "she ",
                                                    "they ", "is ", "was ", "has ", "had ",
                                                    "also ", "a ", "an "};
  clause = text::to_lower(text::trim(clause));
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& p : prefixes) {
      if (clause.rfind(p, 0) == 0) {
        clause = std::string(text::trim(std::string_view(clause).substr(p.size())));
        changed = true;
      }
    }
  }
  return clause;
}

}  // namespace

PatientExtraction RuleMockLabeler::summarize_note(std::string_view note) {
  static const std::regex dx_re(R"((?:diagnosed with|diagnosis of)\s+(?:an?\s+)?(.+))");
  PatientExtraction e;
  for (const auto& sentence : split_sentences(note)) {
    auto clauses = split_top_level(text::to_lower(sentence), {", ", " and ", " but ", " with no "});
    bool sentence_negated = false;
    for (std::size_t ci = 0; ci < clauses.size(); ++ci) {
      std::string clause = strip_subject(clauses[ci]);
      if (clause.empty()) continue;
      Tokens toks = tokenize(clause);
      bool negated = polarize(toks, toks.size()).negated;
      if (ci == 0) sentence_negated = negated;
      if (!negated && sentence_negated && toks.size() <= 4 &&
          std::none_of(toks.begin(), toks.end(), [](const std::string& t) { return as_number(t).has_value(); })) {
        clause = "no " + clause;
        negated = true;
      }

      std::smatch m;
      if (!negated && std::regex_search(clause, m, dx_re)) {
        e.diagnosis.insert(m[1].str());
        e.disease.insert(m[1].str());
      }

      CategorySet cats = categorize_text(clause);
      if (cats.contains(Category::kDemographic)) e.demographics.insert(clause);
      if (cats.contains(Category::kTreatment)) e.treatment.insert(clause);
      if (cats.contains(Category::kDisease)) e.disease.insert(clause);
    }
  }
  if (e.diagnosis.empty()) {
    for (const auto& d : e.disease) {
      Tokens t = tokenize(d);
      if (!polarize(t, t.size()).negated) e.diagnosis.insert(d);
    }
  }
  return e;
}

LabelerReply<PatientExtraction> RuleMockLabeler::extract_patient(const PromptTemplate&,
                                                                 const std::string&,
                                                                 std::string_view note) {
  PatientExtraction e = summarize_note(note);
  return {e, format_extraction_response(e)};
}

LabelerReply<CategorySet> RuleMockLabeler::categorize(const PromptTemplate&, const std::string&,
                                                      std::size_t, std::string_view criterion) {
  CategorySet cats = categorize_text(criterion);
  return {cats, format_categorization_response(criterion, cats)};
}

LabelerReply<EligibilityLabel> RuleMockLabeler::label_criterion(const PromptTemplate&,
                                                                const std::string&, std::size_t,
                                                                const Criterion& criterion,
                                                                const PatientContext& ctx) {
  EligibilityLabel l = judge(criterion, ctx);
  return {l, format_fine_response(criterion.text, l)};
}

LabelerReply<CoarseLabel> RuleMockLabeler::label_trial(const PromptTemplate&,
                                                       const TrialRecord& trial,
                                                       const PatientContext& ctx) {
  auto it = planted_.find({ctx.patient_id, trial.id});
  CoarseLabel l = it != planted_.end() ? it->second : judge_trial(trial, ctx);
  return {l, format_coarse_response(l)};
}

// ---------------------------------------------------------------------------

std::string NoisyLabeler::id() const {
  return "noisy(" + inner_.id() + "," + text::format_double(rate_) + "," +
         std::to_string(seed_) + ")";
}

double NoisyLabeler::draw(const std::string& key) const {
  std::uint64_t h = text::fnv1a64(key, 0xcbf29ce484222325ULL ^ (seed_ * 0x9E3779B97F4A7C15ULL));
  // Final avalanche so nearby keys spread over the unit interval.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

LabelerReply<EligibilityLabel> NoisyLabeler::label_criterion(const PromptTemplate& tmpl,
                                                             const std::string& trial_id,
                                                             std::size_t index,
                                                             const Criterion& criterion,
                                                             const PatientContext& ctx) {
  auto reply = inner_.label_criterion(tmpl, trial_id, index, criterion, ctx);
  std::string key = ctx.patient_id + "|" + trial_id + "|" + std::to_string(index);
  if (draw(key) < rate_) {
    static constexpr EligibilityLabel order[] = {EligibilityLabel::kEligible,
                                                 EligibilityLabel::kExcluded,
                                                 EligibilityLabel::kNotEnoughInfo};
    std::size_t cur = 0;
    while (order[cur] != reply.value) ++cur;
    std::size_t step = draw(key + "|alt") < 0.5 ? 1 : 2;
    reply.value = order[(cur + step) % 3];
    reply.raw_response = format_fine_response(criterion.text, reply.value);
  }
  return reply;
}

LabelerReply<CoarseLabel> NoisyLabeler::label_trial(const PromptTemplate& tmpl,
                                                    const TrialRecord& trial,
                                                    const PatientContext& ctx) {
  auto reply = inner_.label_trial(tmpl, trial, ctx);
  if (draw(ctx.patient_id + "|" + trial.id + "|COARSE") < rate_) {
    reply.value = reply.value == CoarseLabel::kEligible ? CoarseLabel::kExcluded
                                                        : CoarseLabel::kEligible;
    reply.raw_response = format_coarse_response(reply.value);
  }
  return reply;
}

}  // namespace trialmatch
