#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "trialmatch/benchmark.hpp"
#include "trialmatch/pipeline.hpp"
#include "trialmatch/rule_mock.hpp"

using namespace trialmatch;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("trialmatch_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A small benchmark on disk plus its config.
struct Fixture {
  fs::path dir;
  Benchmark bench;
  PipelineConfig cfg;
};

Fixture make_fixture(const std::string& name, std::size_t topics = 3,
                     std::vector<std::string> overrides = {}) {
  Fixture f;
  f.dir = temp_dir(name);
  f.bench = generate_benchmark({topics, 42});
  write_benchmark(f.bench, f.dir);
  overrides.push_back("output_dir=" + (f.dir / "runs").string());
  overrides.push_back("workers=2");
  f.cfg = load_config(f.dir / "config.toml", overrides);
  return f;
}

std::string run_text(const RunFile& r) {
  std::ostringstream out;
  write_run(out, r);
  return out.str();
}

class AllExcludedLabeler : public RuleMockLabeler {
 public:
  std::string id() const override { return "all-excluded"; }
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate&, const std::string&, std::size_t,
                                                 const Criterion& c, const PatientContext&) override {
    return {EligibilityLabel::kExcluded, format_fine_response(c.text, EligibilityLabel::kExcluded)};
  }
  LabelerReply<CoarseLabel> label_trial(const PromptTemplate&, const TrialRecord&, const PatientContext&) override {
    return {CoarseLabel::kExcluded, format_coarse_response(CoarseLabel::kExcluded)};
  }
};

class BrokenLabeler : public RuleMockLabeler {
 public:
  std::string id() const override { return "broken"; }
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate&, const std::string&, std::size_t,
                                                 const Criterion&, const PatientContext&) override {
    throw LabelingError(LabelingError::Kind::kTransport, "service unavailable");
  }
};

}  // namespace

TEST_CASE("config parsing") {
  auto kv = parse_key_values(R"(# comment
ontology = "a b.jsonl"   # trailing
seed = 7
[rerank]
method = cg
gate = "strict # not a comment"
)");
  CHECK(kv.at("ontology") == "a b.jsonl");
  CHECK(kv.at("seed") == "7");
  CHECK(kv.at("rerank.method") == "cg");
  CHECK(kv.at("rerank.gate") == "strict # not a comment");
  CHECK_THROWS_AS(parse_key_values("just words\n"), ConfigError);

  PipelineConfig c;
  c.set("rerank.method", "wcontrast:1:3");
  c.set("retrieval.demographic_filter", "false");
  CHECK_FALSE(c.demographic_filter);
  CHECK_THROWS_AS(c.set("nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("workers", "many"), ConfigError);
  c.set("rerank.gate", "sometimes");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  PipelineConfig d;
  d.set("retrieval.n_level", "-1");
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("config files resolve paths and round-trip") {
  Fixture f = make_fixture("config", 1, {"rerank.method=ie", "retrieval.n_level=2"});
  CHECK(f.cfg.ontology == (f.dir / "ontology.jsonl").lexically_normal());
  CHECK(f.cfg.ontology.is_absolute());
  CHECK(f.cfg.method == "ie");
  CHECK(f.cfg.n_level == 2);
  CHECK(f.cfg.effective_store_dir() == f.cfg.output_dir / "store");

  fs::path copy = f.dir / "copy.toml";
  std::ofstream(copy) << f.cfg.to_toml();
  PipelineConfig again = load_config(copy);
  CHECK(again.to_toml() == f.cfg.to_toml());
  CHECK_THROWS_AS(load_config(f.dir / "config.toml", {"malformed"}), ConfigError);
}

TEST_CASE("store round-trips records and skips torn lines") {
  fs::path dir = temp_dir("store");
  TrialRecord t;
  t.id = "NCT1";
  t.age = AgeSet({{18, 30}, {50, 70}});
  t.gender = GenderSet::female();
  t.condition_raw.insert("lung cancer");
  t.condition_norm.insert("C1");
  t.criteria = {{"age 18-30", Polarity::kInclusion, {Category::kDemographic, Category::kDisease}}};
  CHECK(trial_from_json(trial_to_json(t)) == t);

  ExtractionProvenance prov{"rule-mock", "h"};
  {
    CorpusStore store(dir);
    CHECK(store.put_trial("k1", t, prov));
    CHECK_FALSE(store.put_trial("k1", t, prov));
  }
  {
    std::ofstream torn(dir / "trials.jsonl", std::ios::app);
    torn << "{\"key\":\"k2\",\"id\":\"NC";
  }
  CorpusStore reopened(dir);
  CHECK(reopened.trial_count() == 1);
  CHECK(*reopened.trial_by_key("k1") == t);
  TrialRecord u = t;
  u.id = "NCT2";
  CHECK(reopened.put_trial("k2", u, prov));
  CorpusStore third(dir);
  CHECK(third.trial_count() == 2);

  TrialRecord bad;
  CHECK_THROWS_AS(validate_record(bad), StoreError);
}

TEST_CASE("ingestion is idempotent and skips malformed records") {
  fs::path dir = temp_dir("ingest");
  Benchmark b = generate_benchmark({1, 42});
  OntologyGraph g(b.ontology);
  Normalizer norm(g, NormalizeMode::kApprox);
  {
    std::ofstream out(dir / "corpus.jsonl");
    for (std::size_t i = 0; i < 10; ++i) out << raw_trial_to_json(b.trials[i]) << "\n";
  }
  CorpusStore store(dir / "store");
  IngestSummary first = ingest_corpus(dir / "corpus.jsonl", norm, nullptr, store);
  CHECK(first.stored == 10);
  IngestSummary second = ingest_corpus(dir / "corpus.jsonl", norm, nullptr, store);
  CHECK(second.stored == 0);
  CHECK(second.existing == 10);

  {
    std::ofstream out(dir / "bad.jsonl");
    for (std::size_t i = 10; i < 19; ++i) {
      out << raw_trial_to_json(b.trials[i]) << "\n";
      if (i == 14) out << "{\"id\": \"NCT_BROKEN\", \"condition\": \n";
    }
  }
  CorpusStore other(dir / "store2");
  IngestSummary mixed = ingest_corpus(dir / "bad.jsonl", norm, nullptr, other);
  CHECK(mixed.stored == 9);
  CHECK(mixed.failed == 1);
  REQUIRE(mixed.errors.size() == 1);
  CHECK(mixed.errors[0].rfind("line 6", 0) == 0);
}

TEST_CASE("interrupted ingestion resumes to the same store") {
  fs::path dir = temp_dir("resume");
  Benchmark b = generate_benchmark({2, 42});
  OntologyGraph g(b.ontology);
  Normalizer norm(g, NormalizeMode::kApprox);
  {
    std::ofstream full(dir / "full.jsonl"), half(dir / "half.jsonl");
    for (std::size_t i = 0; i < b.trials.size(); ++i) {
      full << raw_trial_to_json(b.trials[i]) << "\n";
      if (i < b.trials.size() / 2) half << raw_trial_to_json(b.trials[i]) << "\n";
    }
  }
  {
    CorpusStore s(dir / "a");
    ingest_corpus(dir / "half.jsonl", norm, nullptr, s);
  }
  {
    std::ofstream torn(dir / "a" / "trials.jsonl", std::ios::app);
    torn << "{\"key\":\"abc\",\"id\":";
  }
  CorpusStore resumed(dir / "a");
  ingest_corpus(dir / "full.jsonl", norm, nullptr, resumed);
  CorpusStore straight(dir / "b");
  ingest_corpus(dir / "full.jsonl", norm, nullptr, straight);
  CHECK(resumed.trials() == straight.trials());
  CHECK(resumed.trial_count() == b.trials.size());
}

TEST_CASE("normalizer fingerprint tracks ontology and settings") {
  Benchmark b = generate_benchmark({1, 42});
  OntologyGraph g(b.ontology);
  Normalizer approx(g, NormalizeMode::kApprox), exact(g, NormalizeMode::kExact);
  CHECK(approx.fingerprint() != exact.fingerprint());
  auto changed = b.ontology;
  changed.back().synonyms.push_back("extra synonym");
  OntologyGraph g2(changed);
  CHECK(Normalizer(g2, NormalizeMode::kApprox).fingerprint() != approx.fingerprint());
  CHECK_FALSE(approx.normalize("qqqq zzzz").has_value());
}

TEST_CASE("end to end on a small benchmark") {
  Fixture f = make_fixture("e2e");
  PipelineResult a = run_pipeline(f.cfg);
  REQUIRE(a.metrics);
  CHECK(a.metrics->macro.at("ndcg@10") == doctest::Approx(1.0));
  CHECK(a.metrics->macro.at("mrr") == 1.0);
  for (const char* file : {"config.toml", "run.txt", "judgments.jsonl", "metrics.json", "metrics.tsv"})
    CHECK(fs::exists(a.run_dir / file));
  CHECK(slurp(a.run_dir / "run.txt") == run_text(a.run));
  CHECK(a.upstream_calls > 0);

  PipelineResult b = run_pipeline(f.cfg);
  CHECK(b.upstream_calls == 0);
  CHECK(b.run_dir != a.run_dir);
  CHECK(slurp(b.run_dir / "run.txt") == slurp(a.run_dir / "run.txt"));

  // the run-directory config reproduces the run
  PipelineResult c = run_pipeline(load_config(a.run_dir / "config.toml"), {nullptr, false});
  CHECK(run_text(c.run) == run_text(a.run));
}

TEST_CASE("strict gate with an all-excluded labeler yields empty rankings") {
  Fixture f = make_fixture("strict", 2, {"rerank.gate=strict", "cache_path="});
  AllExcludedLabeler lb;
  PipelineResult r = run_pipeline(f.cfg, {&lb, false});
  for (const auto& t : r.topics) {
    CHECK(t.final_ranking.empty());
    CHECK_FALSE(t.rejected.empty());
  }
  REQUIRE(r.metrics);
  for (const auto& [name, v] : r.metrics->macro) CHECK(v == 0.0);
}

TEST_CASE("labeler failures surface with their stage") {
  Fixture f = make_fixture("broken", 2, {"cache_path="});
  BrokenLabeler lb;
  PipelineOptions opts{&lb, true};
  try {
    run_pipeline(f.cfg, opts);
    FAIL("expected a PipelineError");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == "label");
  }
  bool found = false;
  for (const auto& entry : fs::directory_iterator(f.cfg.output_dir))
    if (fs::exists(entry.path() / "errors.tsv")) found = true;
  CHECK(found);
}

TEST_CASE("disabling the demographic filter keeps the first-stage candidates") {
  Fixture on = make_fixture("df_on", 3);
  PipelineConfig off_cfg = on.cfg;
  off_cfg.demographic_filter = false;
  PipelineContext with(on.cfg), without(off_cfg);
  for (const auto& t : with.topics()) {
    TopicResult a = with.retrieve(t, with.patient(t));
    TopicResult b = without.retrieve(t, without.patient(t));
    std::multiset<std::string> first, unfiltered, filtered;
    for (const auto& e : a.first_stage) first.insert(e.trial_id);
    for (const auto& e : b.filtered) unfiltered.insert(e.trial_id);
    for (const auto& e : a.filtered) filtered.insert(e.trial_id);
    CHECK(unfiltered == first);
    CHECK(std::includes(first.begin(), first.end(), filtered.begin(), filtered.end()));
    CHECK(b.candidates.size() == std::min<std::size_t>(b.first_stage.size(), off_cfg.rerank_k));
  }
}

TEST_CASE("n-level sweep") {
  Fixture f = make_fixture("sweep", 3);
  PipelineContext ctx(f.cfg);
  auto one = sweep_n_level(ctx, {2});
  REQUIRE(one.size() == 1);
  CHECK(one[0].level == 2);

  // level 0: trials sharing a normalized diagnosis, after the filter
  auto rows = sweep_n_level(ctx, {0});
  double recall_sum = 0;
  int topics = 0;
  for (const auto& t : ctx.topics()) {
    PatientProfile p = with_level(ctx.patient(t), 0, ctx.ontology());
    CHECK(p.diagnosis_expanded == p.diagnosis_norm);
    auto hits = oracle::exhaustive_ov(p.diagnosis_norm, ctx.corpus().records(), f.cfg.first_stage_k);
    std::size_t rel = ctx.qrels()->relevant_count(t.id, 2), found = 0;
    for (const auto& h : hits)
      if (passes_demographics(p, ctx.corpus().get(h.id)) && ctx.qrels()->grade(t.id, h.id) >= 2) ++found;
    if (rel == 0) continue;
    recall_sum += static_cast<double>(found) / static_cast<double>(rel);
    ++topics;
  }
  CHECK(rows[0].recall == doctest::Approx(recall_sum / topics));
  CHECK_THROWS_AS(sweep_n_level(ctx, {}), PipelineError);
}

TEST_CASE("depth analysis") {
  std::mt19937_64 rng(17);
  std::vector<DepthPoint> null_points, positive;
  for (int i = 0; i < 2000; ++i) {
    int depth = 1 + i % 9;
    null_points.push_back({"t" + std::to_string(i), depth, static_cast<double>(rng() % 1000) / 1000.0,
                           static_cast<double>(rng() % 1000) / 1000.0});
    positive.push_back({"t" + std::to_string(i), depth, depth / 10.0, 1.0 - depth / 10.0});
  }
  DepthAnalysis n = depth_analysis(null_points);
  CHECK(std::abs(n.recall_r) < 0.1);
  CHECK(std::abs(n.precision_r) < 0.1);
  DepthAnalysis p = depth_analysis(positive);
  CHECK(p.recall_r == doctest::Approx(1.0));
  CHECK(p.precision_r == doctest::Approx(-1.0));
  CHECK_THROWS_AS(depth_analysis({{"only", 3, 0.5, 0.5}}), EvalError);

  std::ostringstream tsv;
  write_depth_tsv(tsv, p);
  CHECK(tsv.str().find("topic\tdepth") != std::string::npos);
}
