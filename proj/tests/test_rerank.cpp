#include <doctest.h>

#include <random>

#include "golden.hpp"
#include "trialmatch/rerank.hpp"

using namespace trialmatch;

namespace {

CriterionJudgment cj(std::size_t i, Polarity pol, CategorySet cats, EligibilityLabel l) {
  CriterionJudgment j;
  j.trial_id = "t";
  j.criterion_index = i;
  j.polarity = pol;
  j.categories = cats;
  j.label = l;
  return j;
}

TrialJudgments judgments(std::string id, std::vector<EligibilityLabel> inclusion,
                         std::optional<CoarseLabel> coarse = {}) {
  TrialJudgments j;
  j.trial_id = std::move(id);
  for (std::size_t i = 0; i < inclusion.size(); ++i)
    j.fine.push_back(cj(i, Polarity::kInclusion, {Category::kDisease}, inclusion[i]));
  j.coarse = coarse;
  return j;
}

RelevanceSignals relevant(double ov = 1.0) { return {true, true, 1, ov}; }

}  // namespace

TEST_CASE("count_labels") {
  using golden::D;
  CHECK(count_labels(TrialJudgments{}) == LabelCounts{});

  auto j = judgments("t", {golden::E, golden::E, golden::N});
  LabelCounts c = count_labels(j);
  CHECK(c.count(D, Polarity::kInclusion, golden::E) == 2);
  CHECK(c.total(D, Polarity::kInclusion) == 3);

  TrialJudgments dual;
  dual.fine.push_back(cj(0, Polarity::kExclusion, {Category::kDisease, Category::kTreatment}, golden::X));
  LabelCounts per = count_labels(dual, CountingMode::kPerCategory);
  CHECK(per.count(Category::kDisease, Polarity::kExclusion, golden::X) == 1);
  CHECK(per.count(Category::kTreatment, Polarity::kExclusion, golden::X) == 1);
  LabelCounts once = count_labels(dual, CountingMode::kOnce);
  CHECK(once.count(Category::kTreatment, Polarity::kExclusion, golden::X) == 1);
  CHECK(once.count(Category::kDisease, Polarity::kExclusion, golden::X) == 0);
}

TEST_CASE("scoring golden table") {
  for (const auto& gc : golden::scoring_cases()) {
    CAPTURE(gc.name);
    TrialJudgments j;
    j.coarse = gc.coarse;
    Score s = score_trial(golden::counts_of(gc.tallies), j, gc.ov, ScoringMethod::parse(gc.method));
    CHECK(s.value == doctest::Approx(gc.expected).epsilon(1e-12));
    CHECK(s.empty_denominator == gc.empty_denominator);
  }
}

TEST_CASE("filtered variants") {
  LabelCounts c = golden::counts_of({{golden::D, golden::In, golden::E, 2}, {golden::D, golden::Ex, golden::X, 1}});
  CHECK(score_filtered(c, FilterScope::kAllCriteria).value == 0.0);
  CHECK(score_filtered(c, FilterScope::kInclusionOnly).value == 1.0);
  LabelCounts clean = golden::counts_of({{golden::D, golden::In, golden::E, 1}, {golden::D, golden::In, golden::N, 1}});
  CHECK(score_filtered(clean, FilterScope::kAllCriteria).value == score_fine(clean, {}).value);
  LabelCounts bad = golden::counts_of({{golden::D, golden::In, golden::X, 3}});
  CHECK(score_filtered(bad, FilterScope::kAllCriteria).value == 0.0);
  CHECK(score_coarse(0.6, CoarseLabel::kEligible) == doctest::Approx(1.6));
  CHECK(score_coarse(0.4, CoarseLabel::kExcluded) == 0.4);
  CHECK_THROWS_AS(score_fine(c, ScoringMethod::parse("cg")), std::invalid_argument);
}

TEST_CASE("method tokens") {
  for (const char* t : {"ie", "fie", "fio", "ee", "ge", "contrast", "cg", "hybrid", "disease-only", "demo-only",
                        "treatment-only"})
    CHECK(ScoringMethod::parse(t).to_string() == t);
  ScoringMethod w = ScoringMethod::parse("wcontrast:1.5:3");
  CHECK(w.alpha == 1.5);
  CHECK(w.beta == 3.0);
  CHECK_THROWS_AS(ScoringMethod::parse("bogus"), RerankError);
}

TEST_CASE("gate truth table") {
  for (int mask = 0; mask < 8; ++mask)
    for (int fine = 0; fine < 8; ++fine)
      for (int coarse = 0; coarse < 3; ++coarse)
        for (bool strict : {false, true}) {
          bool age = mask & 1, gender = mask & 2, cond = mask & 4;
          TrialJudgments j;
          if (fine & 1) j.fine.push_back(cj(0, Polarity::kInclusion, {Category::kDisease}, golden::E));
          if (fine & 2) j.fine.push_back(cj(1, Polarity::kExclusion, {Category::kDisease}, golden::X));
          if (fine & 4) j.fine.push_back(cj(2, Polarity::kInclusion, {Category::kDisease}, golden::N));
          if (coarse == 1) j.coarse = CoarseLabel::kEligible;
          if (coarse == 2) j.coarse = CoarseLabel::kExcluded;
          RelevanceSignals rel{age, gender, cond ? 1u : 0u, cond ? 0.5 : 0.0};
          auto got = deontic_gate(rel, j, strict ? GateMode::kStrict : GateMode::kLenient);
          CHECK(golden::from_decision(got) ==
                golden::gate_oracle(age, gender, cond, fine & 1, fine & 2, j.coarse, strict));
        }

  TrialJudgments one_x = judgments("t", {golden::E, golden::X});
  CHECK(deontic_gate(relevant(), one_x, GateMode::kStrict) == GateDecision::kExcludedEvidence);
  CHECK(deontic_gate(relevant(), one_x, GateMode::kLenient) == GateDecision::kAdmit);
  CHECK(deontic_gate(relevant(), judgments("t", {golden::N, golden::N}), GateMode::kLenient) ==
        GateDecision::kNoEligibleEvidence);
  CHECK(deontic_gate({true, true, 0, 0.0}, judgments("t", {golden::E}), GateMode::kLenient) ==
        GateDecision::kNotRelevant);
}

TEST_CASE("rerank ordering") {
  RankedList cands{{"B", 0.9, 1, {}}, {"A", 0.9, 2, {}}, {"C", 0.5, 3, {}}};
  std::map<std::string, TrialJudgments> js{{"A", judgments("A", {golden::E})},
                                           {"B", judgments("B", {golden::E})},
                                           {"C", judgments("C", {golden::E})}};
  std::map<std::string, RelevanceSignals> rel{{"A", relevant(0.9)}, {"B", relevant(0.9)}, {"C", relevant(0.5)}};
  auto r = rerank(cands, js, rel, ScoringMethod::parse("ie"), GateMode::kLenient);
  REQUIRE(r.ranked.size() == 3);
  CHECK(r.ranked[0].trial_id == "A");  // equal scores and ov: id ascending
  CHECK(r.ranked[1].trial_id == "B");
  CHECK(r.ranked[2].trial_id == "C");

  js["C"] = judgments("C", {golden::E, golden::E});
  js["A"] = judgments("A", {golden::E, golden::N});
  r = rerank(cands, js, rel, ScoringMethod::parse("ie"), GateMode::kLenient);
  CHECK(r.ranked[0].trial_id == "B");
  CHECK(r.ranked[2].trial_id == "A");

  js.erase("A");
  CHECK_THROWS_AS(rerank(cands, js, rel, ScoringMethod::parse("ie"), GateMode::kLenient), RerankError);
}

TEST_CASE("strict gate with exclusions everywhere empties the ranking") {
  RankedList cands;
  std::map<std::string, TrialJudgments> js;
  std::map<std::string, RelevanceSignals> rel;
  for (int i = 0; i < 10; ++i) {
    std::string id = "T" + std::to_string(i);
    cands.push_back({id, 1.0, static_cast<std::size_t>(i + 1), {}});
    js[id] = judgments(id, {golden::E, golden::X}, CoarseLabel::kEligible);
    rel[id] = relevant();
  }
  auto r = rerank(cands, js, rel, ScoringMethod::parse("hybrid"), GateMode::kStrict);
  CHECK(r.ranked.empty());
  CHECK(r.rejected.size() == 10);
  CHECK(rerank(cands, js, rel, ScoringMethod::parse("hybrid"), GateMode::kLenient).ranked.size() == 10);
}

TEST_CASE("rank 1 matches the exhaustive IE argmax") {
  std::mt19937_64 rng(4);
  for (int iter = 0; iter < 200; ++iter) {
    RankedList cands;
    std::map<std::string, TrialJudgments> js;
    std::map<std::string, RelevanceSignals> rel;
    std::string best;
    double best_score = -1, best_ov = -1;
    for (int i = 0; i < 25; ++i) {
      std::string id = "T" + std::to_string(100 + i);
      std::vector<EligibilityLabel> ls;
      for (int k = 1 + rng() % 6; k > 0; --k) ls.push_back(static_cast<EligibilityLabel>(rng() % 3));
      ls.push_back(golden::E);
      double ov = static_cast<double>(rng() % 5) / 4.0;
      cands.push_back({id, ov, 0, {}});
      js[id] = judgments(id, ls);
      rel[id] = relevant(ov);
      double e = 0;
      for (auto l : ls) e += l == golden::E;
      double s = e / static_cast<double>(ls.size());
      if (s > best_score || (s == best_score && (ov > best_ov || (ov == best_ov && id < best)))) {
        best = id;
        best_score = s;
        best_ov = ov;
      }
    }
    renumber(cands);
    auto r = rerank(cands, js, rel, ScoringMethod::parse("ie"), GateMode::kLenient);
    REQUIRE_FALSE(r.ranked.empty());
    CHECK(r.ranked[0].trial_id == best);
  }
}

TEST_CASE("score ranges and strict-lenient monotonicity on random tallies") {
  std::mt19937_64 rng(12);
  const char* bounded[] = {"ie", "ee", "ge", "fie", "fio", "disease-only", "demo-only", "treatment-only"};
  for (int iter = 0; iter < 20000; ++iter) {
    LabelCounts c;
    for (Category a : kAllCategories)
      for (Polarity p : {Polarity::kInclusion, Polarity::kExclusion})
        for (auto l : {golden::E, golden::X, golden::N}) c.add(a, p, l, rng() % 4);
    TrialJudgments j;
    if (rng() % 2) j.coarse = rng() % 2 ? CoarseLabel::kEligible : CoarseLabel::kExcluded;
    double ov = static_cast<double>(rng() % 101) / 100.0;
    for (const char* m : bounded) {
      double v = score_trial(c, j, ov, ScoringMethod::parse(m)).value;
      CHECK((v >= 0.0 && v <= 1.0));
    }
    double con = score_trial(c, j, ov, ScoringMethod::parse("contrast")).value;
    CHECK((con >= -1.0 && con <= 1.0));
    double wc = score_trial(c, j, ov, ScoringMethod::parse("wcontrast")).value;
    CHECK((wc >= -2.0 && wc <= 1.0));
    for (const char* m : {"cg", "hybrid"}) {
      double v = score_trial(c, j, ov, ScoringMethod::parse(m)).value;
      CHECK((v >= 0.0 && v <= 2.0));
    }

    TrialJudgments fj;
    for (std::size_t k = rng() % 5; k > 0; --k)
      fj.fine.push_back(cj(k, rng() % 2 ? Polarity::kInclusion : Polarity::kExclusion, {Category::kDisease},
                           static_cast<EligibilityLabel>(rng() % 3)));
    fj.coarse = j.coarse;
    RelevanceSignals rs{rng() % 4 != 0, rng() % 4 != 0, rng() % 4, 0.5};
    if (deontic_gate(rs, fj, GateMode::kStrict) == GateDecision::kAdmit)
      CHECK(deontic_gate(rs, fj, GateMode::kLenient) == GateDecision::kAdmit);
  }
}
