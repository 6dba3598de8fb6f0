#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "trialmatch/ontology.hpp"

using namespace trialmatch;

namespace {

const std::string kData = TRIALMATCH_TEST_DATA;

OntologyGraph toy() { return load_ontology(std::filesystem::path(kData + "/toy_ontology.jsonl")); }

OntologyError::Kind load_error(const std::string& jsonl) {
  std::istringstream in(jsonl);
  try {
    load_ontology(in);
  } catch (const OntologyError& e) {
    return e.kind();
  }
  FAIL("expected an OntologyError");
  return OntologyError::Kind::kParse;
}

}  // namespace

TEST_CASE("loading a chain") {
  std::istringstream in(R"({"id":"a","label":"A","synonyms":[],"parents":[]}
{"id":"b","label":"B","synonyms":[],"parents":["a"]}

{"id":"c","label":"C","synonyms":["see"],"parents":["b"]}
)");
  OntologyGraph g = load_ontology(in);
  CHECK(g.size() == 3);
  CHECK(g.roots() == std::vector<ConceptId>{"a"});
  CHECK(concept_depth("c", g) == 2);
  CHECK(concept_depth("a", g) == 0);
  CHECK(g.get("c").synonyms == std::vector<std::string>{"see"});
}

TEST_CASE("load errors") {
  CHECK(load_error(R"({"id":"c","label":"C","parents":["zzz"]})") == OntologyError::Kind::kDanglingParent);
  CHECK(load_error(R"({"id":"a","label":"A","parents":["a"]})") == OntologyError::Kind::kSelfParent);
  CHECK(load_error("{\"id\":\"a\",\"label\":\"A\"}\n{\"id\":\"a\",\"label\":\"B\"}") ==
        OntologyError::Kind::kDuplicateId);
  CHECK(load_error("{\"id\":\"a\",\"label\":\"A\",\"parents\":[\"b\"]}\n"
                   "{\"id\":\"b\",\"label\":\"B\",\"parents\":[\"a\"]}") ==
        OntologyError::Kind::kCycleDetected);
  CHECK(load_error("not json") == OntologyError::Kind::kParse);
}

TEST_CASE("toy fixture depths agree with the all-paths oracle") {
  OntologyGraph g = toy();
  CHECK(g.size() == 50);
  CHECK(g.roots() == std::vector<ConceptId>{"T000"});
  for (const auto& c : g.concepts()) CHECK(concept_depth(c.id, g) == oracle::depth_all_paths(g.concepts(), c.id));
  CHECK(concept_depth("T083", g) == 4);

  // two parents at different depths: the shorter path wins
  OntologyGraph dag({{"r", "r", {}, {}}, {"a", "a", {}, {"r"}}, {"b", "b", {}, {"a"}},
                     {"x", "x", {}, {"b", "r"}}});
  CHECK(concept_depth("x", dag) == 1);
}

TEST_CASE("1-level relevance of narcolepsy misses a condition two hops away") {
  OntologyGraph g = toy();
  ConceptSet n1 = expand_neighborhood("T053", 1, g);
  CHECK(n1.contains("T053"));
  CHECK(n1.contains("T052"));  // hypersomnia
  CHECK(n1.contains("T054"));
  CHECK(n1.contains("T055"));
  CHECK_FALSE(n1.contains("T056"));  // idiopathic hypersomnia, a sibling
  CHECK(expand_neighborhood("T053", 2, g).contains("T056"));
  CHECK(expand_neighborhood("T053", 0, g) == ConceptSet{"T053"});
  CHECK_THROWS_AS(expand_neighborhood("nope", 1, g), OntologyError);
}

TEST_CASE("expand_diagnosis is the union of neighbourhoods") {
  OntologyGraph g = toy();
  CHECK(expand_diagnosis(ConceptSet{"T041"}, 0, g) == ConceptSet{"T041"});
  CHECK(expand_diagnosis(ConceptSet{}, 3, g).empty());
  ConceptSet u = expand_diagnosis(ConceptSet{"T041", "T043"}, 1, g);
  ConceptSet want = expand_neighborhood("T041", 1, g);
  want.insert_all(expand_neighborhood("T043", 1, g));
  CHECK(u == want);
  CHECK(u.contains("T040"));
}

TEST_CASE("expansion matches BFS on random DAGs") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 30; ++iter) {
    auto cs = oracle::random_dag(rng, 40 + iter * 5, 3);
    OntologyGraph g(cs);
    for (int probe = 0; probe < 5; ++probe) {
      const auto& t = cs[rng() % cs.size()].id;
      ConceptSet prev;
      for (int n = 0; n <= 4; ++n) {
        ConceptSet got = expand_neighborhood(t, n, g);
        auto want = oracle::bfs_neighbourhood(cs, t, n);
        CHECK(std::set<std::string>(got.begin(), got.end()) == want);
        CHECK(got.includes(prev));
        prev = got;
      }
      CHECK(concept_depth(t, g) == oracle::depth_all_paths(cs, t));
    }
  }
}

TEST_CASE("phrase similarity") {
  CHECK(phrase_similarity("lung cancer", "lung cancer") == 1.0);
  CHECK(phrase_similarity("lung cancer", "renal failure") == 0.0);
  CHECK(phrase_similarity("", "") == 0.0);
  // {non, small, cell, lung, cancer} vs {small, cell, lung, cancer}
  CHECK(phrase_similarity("non-small cell lung cancer", "small cell lung cancer") == doctest::Approx(4.0 / 5.0));
  // character trigrams: "abcd" -> {abc, bcd}; "abce" -> {abc, bce}
  CHECK(phrase_similarity("abcd", "abce", ShingleConfig::chars(3)) == doctest::Approx(1.0 / 3.0));
  CHECK(shingles("Lung  CANCER lung") == std::vector<std::string>{"cancer", "lung"});
}

TEST_CASE("exact normalization is the exhaustive argmax") {
  OntologyGraph g = toy();
  NNIndex idx(g);
  CHECK(normalize_term("asthma", g, nullptr, NormalizeMode::kExact).concept_id == "T041");
  CHECK(normalize_term("asthma", g, nullptr, NormalizeMode::kExact).score == 1.0);

  std::ifstream in(kData + "/normalization_queries.txt");
  std::string q;
  std::size_t checked = 0;
  while (std::getline(in, q)) {
    if (q.empty()) continue;
    double best = -1;
    std::string best_id;
    for (const auto& c : g.concepts()) {
      std::vector<std::string> terms{c.preferred_label};
      terms.insert(terms.end(), c.synonyms.begin(), c.synonyms.end());
      for (const auto& t : terms) {
        double s = phrase_similarity(q, t);
        if (s > best || (s == best && c.id < best_id)) {
          best = s;
          best_id = c.id;
        }
      }
    }
    Normalization got = normalize_term(q, g, nullptr, NormalizeMode::kExact);
    CHECK_MESSAGE(got.concept_id == best_id, q);
    CHECK(got.score == best);
    ++checked;
  }
  CHECK(checked >= 40);
}

TEST_CASE("approximate normalization finds exact labels") {
  OntologyGraph g = toy();
  NNIndex idx(g);
  auto exact = normalize_term("age related macular degeneration", g, nullptr, NormalizeMode::kExact);
  auto approx = normalize_term("age related macular degeneration", g, &idx, NormalizeMode::kApprox);
  CHECK(exact.concept_id == "T072");
  CHECK(approx.concept_id == exact.concept_id);
  for (const auto& c : g.concepts())
    CHECK(normalize_term(c.preferred_label, g, &idx, NormalizeMode::kApprox).score == 1.0);
  CHECK_THROWS_AS(normalize_term("zzzz qqqq", g, &idx, NormalizeMode::kApprox), OntologyError);
  CHECK(normalize_term_with_fallback("zzzz qqqq", g, idx).score == 0.0);
  OntologyGraph empty;
  CHECK_THROWS_AS(normalize_term("x", empty, nullptr, NormalizeMode::kExact), OntologyError);
}

TEST_CASE("LSH signatures are deterministic per seed") {
  OntologyGraph g = toy();
  NNIndex a(g), b(g);
  LshParams other;
  other.seed = 99;
  NNIndex c(g, other);
  auto sh = shingles("chronic kidney disease");
  CHECK(a.signature(sh) == b.signature(sh));
  CHECK(a.signature(sh) != c.signature(sh));
  CHECK(a.signature(sh).size() == 128);
}

TEST_CASE("mean normalization similarity") {
  OntologyGraph g({{"A", "lung cancer", {}, {}}, {"B", "asthma", {}, {}}});
  CHECK(mean_normalization_similarity({{"lung cancer", "A"}, {"asthma", "B"}}, g) == 1.0);
  CHECK(mean_normalization_similarity({{"lung", "A"}, {"asthma", "B"}}, g) == doctest::Approx(0.75));
  CHECK_THROWS_AS(mean_normalization_similarity({}, g), OntologyError);
}
