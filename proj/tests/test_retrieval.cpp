#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "trialmatch/retrieval.hpp"

using namespace trialmatch;

namespace {

TrialRecord trial(std::string id, ConceptSet conds, AgeSet age = AgeSet::full(), GenderSet g = {}) {
  TrialRecord t;
  t.id = std::move(id);
  t.condition_norm = std::move(conds);
  t.age = age;
  t.gender = g;
  t.criteria = {{"x", Polarity::kInclusion, {Category::kDisease}}};
  return t;
}

PatientProfile patient(ConceptSet expanded, AgeSet age = AgeSet::full(), GenderSet g = {}) {
  PatientProfile p;
  p.id = "p";
  p.diagnosis_norm = expanded;
  p.diagnosis_expanded = std::move(expanded);
  p.age = age;
  p.gender = g;
  return p;
}

std::vector<TrialRecord> random_trials(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::vector<TrialRecord> out;
  std::uniform_int_distribution<int> nc(0, 4), c(0, vocab - 1), age(0, 90), coin(0, 3);
  for (std::size_t i = 0; i < n; ++i) {
    ConceptSet cs;
    for (int k = nc(rng); k > 0; --k) cs.insert("C" + std::to_string(c(rng)));
    int lo = age(rng);
    GenderSet g = coin(rng) == 0 ? GenderSet::male() : coin(rng) == 0 ? GenderSet::female() : GenderSet::all();
    out.push_back(trial("NCT" + std::to_string(100000 + rng() % 900000) + "_" + std::to_string(i), cs,
                        AgeSet::range(lo, lo + 30), g));
  }
  return out;
}

}  // namespace

TEST_CASE("condition relevance and overlap coefficient") {
  PatientProfile p = patient({"a", "b", "c"});
  CHECK(condition_relevance(p, trial("t", {"a", "b", "c"})) == ConceptSet{"a", "b", "c"});
  CHECK(condition_relevance(p, trial("t", {"x"})).empty());
  CHECK(condition_relevance(p, trial("t", {"b", "c", "d"})) == ConceptSet{"b", "c"});

  CHECK(overlap_coefficient({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(overlap_coefficient({"a", "b", "x", "y"}, {"a", "b", "c", "d", "e", "f", "g"}) == 0.5);
  CHECK(overlap_coefficient(ConceptSet{}, ConceptSet{"a"}) == 0.0);
  CHECK(overlap_coefficient(ConceptSet{"a"}, ConceptSet{}) == 0.0);
  CHECK(overlap_coefficient({"a"}, {"a", "b", "c"}) == 1.0);  // smaller set fully covered
}

TEST_CASE("retrieve_by_condition basics") {
  TrialCorpus corpus({trial("NCT3", {"z"}), trial("NCT1", {"a"}), trial("NCT2", {"q"})});
  ConditionIndex idx(corpus);
  auto one = retrieve_by_condition(patient({"a", "b"}), idx, 10);
  REQUIRE(one.size() == 1);
  CHECK(one[0].trial_id == "NCT1");
  CHECK(one[0].rank == 1);

  TrialCorpus tied({trial("B", {"a"}), trial("A", {"a"}), trial("C", {"a", "x"})});
  ConditionIndex tidx(tied);
  auto r = retrieve_by_condition(patient({"a"}), tidx, 10);
  REQUIRE(r.size() == 3);
  CHECK(r[0].trial_id == "A");
  CHECK(r[1].trial_id == "B");
  CHECK(r[2].trial_id == "C");
  CHECK(retrieve_by_condition(patient({"a"}), tidx, 2).size() == 2);
  CHECK(retrieve_by_condition(patient({}), tidx, 2).empty());
  CHECK_THROWS_AS(TrialCorpus({trial("A", {}), trial("A", {})}), std::invalid_argument);
}

TEST_CASE("retrieve_by_condition equals the exhaustive scan") {
  std::mt19937_64 rng(21);
  for (int iter = 0; iter < 20; ++iter) {
    auto trials = random_trials(rng, 100 + 50 * iter, 30);
    TrialCorpus corpus(trials);
    ConditionIndex idx(corpus);
    for (int q = 0; q < 5; ++q) {
      ConceptSet d;
      for (int k = 1 + rng() % 5; k > 0; --k) d.insert("C" + std::to_string(rng() % 30));
      std::size_t k = 1 + rng() % 200;
      auto got = retrieve_by_condition(patient(d), idx, k);
      auto want = oracle::exhaustive_ov(d, corpus.records(), k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].trial_id == want[i].id);
        CHECK(got[i].score == want[i].ov);
        CHECK(got[i].rank == i + 1);
        CHECK(got[i].score >= 0.0);
        CHECK(got[i].score <= 1.0);
      }
    }
  }
}

TEST_CASE("BM25 against hand computation") {
  std::vector<std::pair<std::string, std::string>> docs{{"d1", "lung cancer trial"},
                                                        {"d2", "lung cancer lung"},
                                                        {"d3", "asthma trial"},
                                                        {"d4", "heart failure study"},
                                                        {"d5", "cancer of the breast"}};
  TextIndex idx(docs);
  CHECK(idx.avg_doc_length() == 3.0);
  // k1 = 1.2, b = 0.75; idf = ln(1 + (N - df + 0.5) / (df + 0.5))
  const double idf_lung = std::log(1.0 + 3.5 / 2.5);
  const double idf_cancer = std::log(1.0 + 2.5 / 3.5);
  // docs of average length: tf=1 -> 1, tf=2 -> 4.4 / 3.2; length 4: tf=1 -> 2.2 / 2.5
  CHECK(idx.score("lung cancer", "d1") == doctest::Approx(idf_lung + idf_cancer).epsilon(1e-12));
  CHECK(std::abs(idx.score("lung cancer", "d2") - (1.375 * idf_lung + idf_cancer)) < 1e-9);
  CHECK(std::abs(idx.score("lung cancer", "d5") - 0.88 * idf_cancer) < 1e-9);
  CHECK(idx.score("lung cancer", "d3") == 0.0);
  CHECK(idx.score("Lung LUNG cancer", "d1") == idx.score("lung cancer", "d1"));

  auto r = idx.retrieve("lung cancer", 10);
  REQUIRE(r.size() == 3);
  CHECK(r[0].trial_id == "d2");
  CHECK(r[1].trial_id == "d1");
  CHECK(r[2].trial_id == "d5");
  CHECK(r[0].provenance == Provenance::kText);
  CHECK(idx.retrieve("zebra", 10).empty());

  TextIndex single(std::vector<std::pair<std::string, std::string>>{{"only", "renal failure"}});
  auto s = single.retrieve("acute renal injury", 5);
  REQUIRE(s.size() == 1);
  CHECK(s[0].trial_id == "only");
}

TEST_CASE("BM25 term score never grows with document length") {
  TextIndex idx(std::vector<std::pair<std::string, std::string>>{{"a", "x y z"}, {"b", "x"}, {"c", "q r s t"}});
  for (std::size_t tf = 1; tf < 6; ++tf)
    for (std::size_t df = 1; df <= 3; ++df)
      for (std::size_t len = tf; len < 40; ++len)
        CHECK(idx.term_score(tf, df, len + 1) <= idx.term_score(tf, df, len));
}

TEST_CASE("demographic filter") {
  TrialCorpus corpus({trial("old", {"a"}, AgeSet::range(40, kAgeMax)),
                      trial("any", {"a"}, AgeSet::full(), GenderSet::all()),
                      trial("women", {"a"}, AgeSet::full(), GenderSet::female())});
  PatientProfile man = patient({"a"}, AgeSet::single(38), GenderSet::male());
  RankedList cands{{"old", 1, 1, {}}, {"any", 1, 2, {}}, {"women", 1, 3, {}}};
  auto kept = demographic_filter(cands, man, corpus);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].trial_id == "any");
  CHECK(kept[0].rank == 1);

  PatientProfile unknown = patient({"a"});
  CHECK(demographic_filter(cands, unknown, corpus).size() == 3);
}

TEST_CASE("demographic filter is a predicate subsequence") {
  std::mt19937_64 rng(8);
  auto trials = random_trials(rng, 300, 10);
  TrialCorpus corpus(trials);
  for (int iter = 0; iter < 100; ++iter) {
    RankedList cands;
    for (const auto& t : corpus.records())
      if (rng() % 3 == 0) cands.push_back({t.id, 0.5, 0, Provenance::kConditionRelevance});
    std::shuffle(cands.begin(), cands.end(), rng);
    renumber(cands);
    int age = static_cast<int>(rng() % 100);
    GenderSet g = rng() % 2 ? GenderSet::male() : GenderSet::female();
    PatientProfile p = patient({"C1"}, AgeSet::single(age), g);
    auto kept = demographic_filter(cands, p, corpus);
    std::vector<std::string> want;
    for (const auto& c : cands) {
      const auto& t = corpus.get(c.trial_id);
      if (!age_intersect(t.age, p.age).empty() && gender_match(p.gender, t.gender)) want.push_back(c.trial_id);
    }
    REQUIRE(kept.size() == want.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK(kept[i].trial_id == want[i]);
      CHECK(kept[i].rank == i + 1);
    }
  }
}

TEST_CASE("backfill to K") {
  std::vector<TrialRecord> ts;
  for (int i = 0; i < 6; ++i) ts.push_back(trial("T" + std::to_string(i), {"c" + std::to_string(i)}));
  ts.push_back(trial("T6", {"zz"}, AgeSet::range(80, 90)));
  TrialCorpus corpus(ts);
  PatientProfile p = patient({"c0", "c1", "c2"}, AgeSet::single(30));
  ConditionIndex idx(corpus);
  RankedList full = rank_corpus_by_overlap(p, idx);
  REQUIRE(full.size() == corpus.size());

  RankedList filtered = retrieve_by_condition(p, idx, 10);
  REQUIRE(filtered.size() == 3);
  CHECK(backfill_to_k(filtered, full, p, corpus, 2).size() == 2);

  RankedList out = backfill_to_k(filtered, full, p, corpus, 5);
  REQUIRE(out.size() == 5);
  CHECK(out[3].provenance == Provenance::kBackfill);
  CHECK(out[4].provenance == Provenance::kBackfill);
  bool seen_backfill = false;
  for (const auto& e : out) {
    if (e.provenance == Provenance::kBackfill) seen_backfill = true;
    else CHECK_FALSE(seen_backfill);
  }
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].rank == i + 1);

  // only 3 more trials pass the filter (T6 fails on age)
  CHECK(backfill_to_k(filtered, full, p, corpus, 10).size() == 6);
}
