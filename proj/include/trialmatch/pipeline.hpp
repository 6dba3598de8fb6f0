#pragma once

// End-to-end orchestration: ingestion, patient extraction, first-stage
// retrieval, demographic filtering, labeling, gating, re-ranking and
// evaluation, plus the n-level sweep and the depth analysis.

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trialmatch/config.hpp"
#include "trialmatch/corpus_store.hpp"
#include "trialmatch/eval.hpp"
#include "trialmatch/label_cache.hpp"
#include "trialmatch/ontology.hpp"
#include "trialmatch/rerank.hpp"
#include "trialmatch/retrieval.hpp"

namespace trialmatch {

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Maps free-text terms to ontology concepts with the configured mode.
class Normalizer {
 public:
  Normalizer(const OntologyGraph& graph, NormalizeMode mode, LshParams params = {});

  /// nullopt when no label or synonym shares a shingle with the phrase.
  std::optional<ConceptId> normalize(std::string_view phrase) const;
  ConceptSet normalize_all(const PhraseSet& phrases) const;

  const OntologyGraph& graph() const { return graph_; }
  /// Changes whenever the ontology content or normalization settings do.
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  const OntologyGraph& graph_;
  NormalizeMode mode_;
  LshParams params_;
  std::unique_ptr<NNIndex> index_;
  std::string fingerprint_;
};

/// Counts calls reaching the wrapped labeler.
class CallCountingLabeler : public Labeler {
 public:
  explicit CallCountingLabeler(Labeler& inner) : inner_(inner) {}

  std::string id() const override { return inner_.id(); }
  std::size_t calls() const { return calls_.load(); }

  LabelerReply<PatientExtraction> extract_patient(const PromptTemplate& tmpl,
                                                  const std::string& patient_id,
                                                  std::string_view note) override;
  LabelerReply<CategorySet> categorize(const PromptTemplate& tmpl, const std::string& trial_id,
                                       std::size_t index, std::string_view criterion) override;
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate& tmpl,
                                                 const std::string& trial_id, std::size_t index,
                                                 const Criterion& criterion,
                                                 const PatientContext& ctx) override;
  LabelerReply<CoarseLabel> label_trial(const PromptTemplate& tmpl, const TrialRecord& trial,
                                        const PatientContext& ctx) override;

 private:
  Labeler& inner_;
  std::atomic<std::size_t> calls_{0};
};

/// Builds the base labeler named by the config (rule-mock, noisy or external).
std::unique_ptr<Labeler> make_labeler(const PipelineConfig& cfg);

struct IngestSummary {
  std::size_t read = 0;
  std::size_t stored = 0;    // newly written
  std::size_t existing = 0;  // already present
  std::size_t failed = 0;
  std::vector<std::string> errors;  // "line N: message"
  std::vector<std::string> keys;    // store key per successfully ingested record
};

/// Streams a raw CTR JSONL file into the store: extract, normalize conditions,
/// optionally categorize (when `categorizer` is given), persist. Bad records
/// are logged and skipped.
IngestSummary ingest_corpus(const std::filesystem::path& path, const Normalizer& norm,
                            Labeler* categorizer, CorpusStore& store);

/// Extraction, normalization and n-level expansion of one patient note.
PatientProfile build_patient(const Topic& topic, Labeler& lb, const Normalizer& norm, int n_level);

/// Re-expands an already normalized profile at another level.
PatientProfile with_level(PatientProfile p, int n_level, const OntologyGraph& graph);

/// Everything a topic went through, kept for inspection and the analyses.
struct TopicResult {
  std::string topic_id;
  PatientProfile patient;
  RankedList first_stage;  // top-K
  RankedList filtered;     // after the demographic filter
  RankedList candidates;   // backfilled/truncated to the re-ranking depth
  std::map<std::string, TrialJudgments> judgments;
  std::vector<std::pair<std::string, GateDecision>> rejected;
  RankedList final_ranking;
  std::string error_stage;
  std::string error;
};

/// Loaded inputs and shared services for one configuration.
class PipelineContext {
 public:
  /// Loads the ontology, topics and qrels, ingests the corpus into the store
  /// and assembles the labeler chain (base -> call counter -> cache). A
  /// non-null `base_labeler` replaces the configured one.
  explicit PipelineContext(PipelineConfig cfg, Labeler* base_labeler = nullptr);
  ~PipelineContext();

  const PipelineConfig& config() const { return cfg_; }
  const OntologyGraph& ontology() const { return graph_; }
  const Normalizer& normalizer() const { return *norm_; }
  const TrialCorpus& corpus() const { return corpus_; }
  const ConditionIndex& condition_index() const { return *cindex_; }
  const std::vector<Topic>& topics() const { return topics_; }
  const std::optional<Qrels>& qrels() const { return qrels_; }
  const IngestSummary& ingest_summary() const { return ingest_; }
  CorpusStore& store() { return *store_; }

  Labeler& labeler() { return *caching_; }
  LabelCache& cache() { return *cache_; }
  /// Calls that reached the base labeler (cache misses).
  std::size_t upstream_calls() const { return counter_->calls(); }

  PatientProfile patient(const Topic& t);
  /// Store key of a patient profile built under this configuration.
  std::string patient_key(const Topic& t) const;
  /// First stage only: retrieve, filter, backfill.
  TopicResult retrieve(const Topic& t, const PatientProfile& p) const;
  /// Full per-topic pipeline; stage failures are recorded, not thrown.
  TopicResult run_topic(const Topic& t);

 private:
  RankedList full_ranking(const PatientProfile& p) const;

  PipelineConfig cfg_;
  OntologyGraph graph_;
  std::unique_ptr<Normalizer> norm_;
  std::unique_ptr<CorpusStore> store_;
  IngestSummary ingest_;
  TrialCorpus corpus_;
  std::unique_ptr<ConditionIndex> cindex_;
  std::unique_ptr<TextIndex> tindex_;
  std::vector<Topic> topics_;
  std::optional<Qrels> qrels_;
  std::unique_ptr<Labeler> owned_base_;
  std::unique_ptr<CallCountingLabeler> counter_;
  std::unique_ptr<LabelCache> cache_;
  std::unique_ptr<CachingLabeler> caching_;
};

struct PipelineResult {
  RunFile run;
  std::optional<MetricReport> metrics;
  std::vector<TopicResult> topics;  // in topic file order
  std::filesystem::path run_dir;    // empty when outputs were not written
  std::size_t upstream_calls = 0;
  IngestSummary ingest;
};

struct PipelineOptions {
  Labeler* base_labeler = nullptr;
  bool write_outputs = true;
};

/// Runs every topic (in parallel up to cfg.workers) and evaluates against the
/// qrels when configured. Outputs go to a fresh run-stamped directory under
/// cfg.output_dir: config.toml, run.txt, judgments.jsonl, metrics.json,
/// metrics.tsv. When any topic fails the partial run file is still written
/// and a PipelineError naming the stage is thrown.
PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts = {});
PipelineResult run_pipeline(PipelineContext& ctx, bool write_outputs = true);

/// One row per level of first-stage (post-filter) retrieval quality.
struct SweepRow {
  int level = 0;
  double recall = 0.0;     // mean over topics with a relevant trial
  double precision = 0.0;  // mean over topics with a retrieved trial
  double mean_candidates = 0.0;
};

std::vector<SweepRow> sweep_n_level(PipelineContext& ctx, const std::vector<int>& levels);
void write_sweep_tsv(std::ostream& out, const std::vector<SweepRow>& rows);

struct DepthPoint {
  std::string topic_id;
  int depth = 0;  // deepest normalized diagnosis
  double recall = 0.0;
  double precision = 0.0;
};

struct DepthAnalysis {
  std::vector<DepthPoint> points;
  double recall_r = 0.0;
  double precision_r = 0.0;
};

/// Per-topic depth against retrieval quality. Topics without normalized
/// diagnoses are skipped. Throws EvalError::kZeroVariance from pearson_r.
DepthAnalysis depth_analysis(const std::vector<DepthPoint>& points);
/// Builds the points from first-stage results and the qrels.
std::vector<DepthPoint> depth_points(const std::vector<TopicResult>& results, const Qrels& qrels,
                                     const OntologyGraph& graph, int threshold);
void write_depth_tsv(std::ostream& out, const DepthAnalysis& a);

void write_metrics_json(std::ostream& out, const MetricReport& m);
void write_metrics_tsv(std::ostream& out, const MetricReport& m);

}  // namespace trialmatch
