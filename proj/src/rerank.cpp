#include "trialmatch/rerank.hpp"

#include <algorithm>
#include <cstdlib>

#include "trialmatch/text.hpp"

namespace trialmatch {

namespace {

std::size_t label_slot(EligibilityLabel l) {
  switch (l) {
    case EligibilityLabel::kEligible:
      return 0;
    case EligibilityLabel::kExcluded:
      return 1;
    case EligibilityLabel::kNotEnoughInfo:
      return 2;
  }
  return 2;
}

std::size_t pol_slot(Polarity p) { return p == Polarity::kInclusion ? 0 : 1; }

}  // namespace

std::size_t LabelCounts::slot(Category c) {
  switch (c) {
    case Category::kTreatment:
      return 0;
    case Category::kDemographic:
      return 1;
    case Category::kDisease:
      return 2;
  }
  return 2;
}

void LabelCounts::add(Category attr, Polarity pol, EligibilityLabel label, std::size_t n) {
  n_[slot(attr)][pol_slot(pol)][label_slot(label)] += n;
}

std::size_t LabelCounts::count(Category attr, Polarity pol, EligibilityLabel label) const {
  return n_[slot(attr)][pol_slot(pol)][label_slot(label)];
}

std::size_t LabelCounts::total(Category attr, Polarity pol) const {
  const auto& b = n_[slot(attr)][pol_slot(pol)];
  return b[0] + b[1] + b[2];
}

std::size_t LabelCounts::sum(EligibilityLabel label, bool inclusion, bool exclusion,
                             CategorySet attrs) const {
  std::size_t s = 0;
  for (Category c : kAllCategories) {
    if (!attrs.contains(c)) continue;
    if (inclusion) s += count(c, Polarity::kInclusion, label);
    if (exclusion) s += count(c, Polarity::kExclusion, label);
  }
  return s;
}

std::size_t LabelCounts::sum_total(bool inclusion, bool exclusion, CategorySet attrs) const {
  std::size_t s = 0;
  for (Category c : kAllCategories) {
    if (!attrs.contains(c)) continue;
    if (inclusion) s += total(c, Polarity::kInclusion);
    if (exclusion) s += total(c, Polarity::kExclusion);
  }
  return s;
}

LabelCounts count_labels(const TrialJudgments& j, CountingMode mode) {
  LabelCounts out;
  for (const auto& cj : j.fine) {
    for (Category c : kAllCategories) {
      if (!cj.categories.contains(c)) continue;
      out.add(c, cj.polarity, cj.label);
      if (mode == CountingMode::kOnce) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ScoringMethod ScoringMethod::parse(std::string_view token) {
  std::string t = text::to_lower(text::trim(token));
  using K = Kind;
  ScoringMethod m;
  if (t == "ie") m.kind = K::kIE;
  else if (t == "fie") m.kind = K::kFIE;
  else if (t == "fio") m.kind = K::kFIO;
  else if (t == "ee") m.kind = K::kEE;
  else if (t == "ge") m.kind = K::kGE;
  else if (t == "contrast") m.kind = K::kContrast;
  else if (t == "cg") m.kind = K::kCG;
  else if (t == "hybrid") m.kind = K::kHybrid;
  else if (t == "disease-only") m = {K::kRestrictedIE, 1.0, 2.0, Category::kDisease};
  else if (t == "demo-only") m = {K::kRestrictedIE, 1.0, 2.0, Category::kDemographic};
  else if (t == "treatment-only") m = {K::kRestrictedIE, 1.0, 2.0, Category::kTreatment};
  else if (t.rfind("wcontrast", 0) == 0) {
    m.kind = K::kWContrast;
    auto parts = text::split(t, ':');
    if (parts.size() == 3) {
      char* end = nullptr;
      m.alpha = std::strtod(parts[1].c_str(), &end);
      if (*end) throw RerankError(RerankError::Kind::kBadMethod, "bad alpha in " + t);
      m.beta = std::strtod(parts[2].c_str(), &end);
      if (*end) throw RerankError(RerankError::Kind::kBadMethod, "bad beta in " + t);
    } else if (parts.size() != 1) {
      throw RerankError(RerankError::Kind::kBadMethod, "expected wcontrast:alpha:beta, got " + t);
    }
    if (!(m.alpha > 0) || !(m.beta > 0))
      throw RerankError(RerankError::Kind::kBadMethod, "wcontrast weights must be positive");
  } else {
    throw RerankError(RerankError::Kind::kBadMethod, "unknown scoring method '" + t + "'");
  }
  return m;
}

std::string ScoringMethod::to_string() const {
  switch (kind) {
    case Kind::kIE: return "ie";
    case Kind::kFIE: return "fie";
    case Kind::kFIO: return "fio";
    case Kind::kEE: return "ee";
    case Kind::kGE: return "ge";
    case Kind::kContrast: return "contrast";
    case Kind::kWContrast:
      return "wcontrast:" + text::format_double(alpha) + ":" + text::format_double(beta);
    case Kind::kCG: return "cg";
    case Kind::kHybrid: return "hybrid";
    case Kind::kRestrictedIE:
      return attr == Category::kDisease       ? "disease-only"
             : attr == Category::kDemographic ? "demo-only"
                                              : "treatment-only";
  }
  return "ie";
}

namespace {

Score ratio(double num, std::size_t den) {
  if (den == 0) return {0.0, true};
  return {num / static_cast<double>(den), false};
}

}  // namespace

Score score_fine(const LabelCounts& c, const ScoringMethod& m) {
  using K = ScoringMethod::Kind;
  const auto E = EligibilityLabel::kEligible;
  const auto X = EligibilityLabel::kExcluded;
  switch (m.kind) {
    case K::kIE:
      return ratio(static_cast<double>(c.sum(E, true, false)), c.sum_total(true, false));
    case K::kEE:
      return ratio(static_cast<double>(c.sum(E, false, true)), c.sum_total(false, true));
    case K::kGE:
      return ratio(static_cast<double>(c.sum(E, true, true)), c.sum_total(true, true));
    case K::kContrast:
      return ratio(static_cast<double>(c.sum(E, true, true)) - static_cast<double>(c.sum(X, true, true)),
                   c.sum_total(true, true));
    case K::kWContrast:
      return ratio(m.alpha * static_cast<double>(c.sum(E, true, true)) -
                       m.beta * static_cast<double>(c.sum(X, true, true)),
                   c.sum_total(true, true));
    case K::kRestrictedIE: {
      CategorySet only{m.attr};
      return ratio(static_cast<double>(c.sum(E, true, false, only)), c.sum_total(true, false, only));
    }
    default:
      throw std::invalid_argument("score_fine does not handle " + m.to_string());
  }
}

Score score_filtered(const LabelCounts& c, FilterScope scope) {
  bool excl = scope == FilterScope::kAllCriteria;
  Score ie = score_fine(c, ScoringMethod{});
  if (c.sum(EligibilityLabel::kExcluded, true, excl) > 0) return {0.0, ie.empty_denominator};
  return ie;
}

double score_coarse(double base, CoarseLabel coarse) {
  return coarse == CoarseLabel::kEligible ? base + 1.0 : base;
}

Score score_trial(const LabelCounts& c, const TrialJudgments& j, double ov,
                  const ScoringMethod& m) {
  using K = ScoringMethod::Kind;
  CoarseLabel coarse = j.coarse.value_or(CoarseLabel::kExcluded);
  switch (m.kind) {
    case K::kFIE:
      return score_filtered(c, FilterScope::kAllCriteria);
    case K::kFIO:
      return score_filtered(c, FilterScope::kInclusionOnly);
    case K::kCG:
      return {score_coarse(ov, coarse), false};
    case K::kHybrid: {
      Score ie = score_fine(c, ScoringMethod{});
      return {score_coarse(ie.value, coarse), ie.empty_denominator};
    }
    default:
      return score_fine(c, m);
  }
}

// ---------------------------------------------------------------------------

GateMode parse_gate_mode(std::string_view token) {
  std::string t = text::to_lower(text::trim(token));
  if (t == "strict") return GateMode::kStrict;
  if (t == "lenient") return GateMode::kLenient;
  throw RerankError(RerankError::Kind::kBadMethod, "unknown gate mode '" + t + "'");
}

std::string to_string(GateMode m) { return m == GateMode::kStrict ? "strict" : "lenient"; }

std::string to_string(GateDecision d) {
  switch (d) {
    case GateDecision::kAdmit:
      return "admit";
    case GateDecision::kNotRelevant:
      return "not-relevant";
    case GateDecision::kExcludedEvidence:
      return "excluded-evidence";
    case GateDecision::kNoEligibleEvidence:
      return "no-eligible-evidence";
  }
  return "admit";
}

RelevanceSignals relevance_signals(const PatientProfile& p, const TrialRecord& r) {
  RelevanceSignals s;
  s.age = !age_intersect(p.age, r.age).empty();
  s.gender = gender_match(p.gender, r.gender);
  s.condition_overlap = p.diagnosis_expanded.intersection_size(r.condition_norm);
  s.ov = overlap_coefficient(p, r);
  return s;
}

GateDecision deontic_gate(const RelevanceSignals& rel, const TrialJudgments& j, GateMode mode) {
  if (!rel.age || !rel.gender || rel.condition_overlap == 0) return GateDecision::kNotRelevant;
  bool any_excluded = j.coarse == CoarseLabel::kExcluded;
  bool any_eligible = j.coarse == CoarseLabel::kEligible;
  for (const auto& cj : j.fine) {
    if (cj.label == EligibilityLabel::kExcluded) any_excluded = true;
    if (cj.label == EligibilityLabel::kEligible) any_eligible = true;
  }
  if (mode == GateMode::kStrict && any_excluded) return GateDecision::kExcludedEvidence;
  if (!any_eligible) return GateDecision::kNoEligibleEvidence;
  return GateDecision::kAdmit;
}

RerankResult rerank(const RankedList& cands, const std::map<std::string, TrialJudgments>& judgments,
                    const std::map<std::string, RelevanceSignals>& relevance,
                    const ScoringMethod& method, GateMode gate, CountingMode counting) {
  struct Row {
    RankedEntry entry;
    double ov;
  };
  RerankResult out;
  std::vector<Row> rows;
  for (const auto& e : cands) {
    auto jit = judgments.find(e.trial_id);
    auto rit = relevance.find(e.trial_id);
    if (jit == judgments.end() || rit == relevance.end()) {
      throw RerankError(RerankError::Kind::kMissingJudgments,
                        "no judgments for candidate trial " + e.trial_id);
    }
    GateDecision d = deontic_gate(rit->second, jit->second, gate);
    if (d != GateDecision::kAdmit) {
      out.rejected.emplace_back(e.trial_id, d);
      continue;
    }
    LabelCounts counts = count_labels(jit->second, counting);
    Score s = score_trial(counts, jit->second, rit->second.ov, method);
    if (s.empty_denominator) out.empty_denominator.push_back(e.trial_id);
    RankedEntry r = e;
    r.score = s.value;
    rows.push_back({r, rit->second.ov});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.entry.score != b.entry.score) return a.entry.score > b.entry.score;
    if (a.ov != b.ov) return a.ov > b.ov;
    return a.entry.trial_id < b.entry.trial_id;
  });
  for (auto& r : rows) out.ranked.push_back(std::move(r.entry));
  renumber(out.ranked);
  return out;
}

}  // namespace trialmatch
