#include "trialmatch/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "trialmatch/external_labeler.hpp"
#include "trialmatch/rule_mock.hpp"
#include "trialmatch/text.hpp"

namespace trialmatch {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Normalizer

namespace {

ShingleConfig shingle_config(const std::string& value) {
  if (value == "tokens") return ShingleConfig::tokens();
  auto parts = text::split(value, ':');
  return ShingleConfig::chars(static_cast<std::size_t>(std::stoul(parts.at(1))));
}

std::string ontology_fingerprint(const OntologyGraph& g) {
  std::uint64_t h = text::fnv1a64("ontology");
  for (const auto& c : g.concepts()) {
    h = text::fnv1a64(c.id, h);
    h = text::fnv1a64("\x1f" + c.preferred_label, h);
    for (const auto& s : c.synonyms) h = text::fnv1a64("\x1e" + s, h);
    for (const auto& p : c.parents) h = text::fnv1a64("\x1d" + p, h);
  }
  return text::hex64(h);
}

}  // namespace

Normalizer::Normalizer(const OntologyGraph& graph, NormalizeMode mode, LshParams params)
    : graph_(graph), mode_(mode), params_(params) {
  if (mode_ == NormalizeMode::kApprox && !graph_.empty())
    index_ = std::make_unique<NNIndex>(graph_, params_);
  std::string settings = ontology_fingerprint(graph_) + "|" +
                         (mode_ == NormalizeMode::kExact ? "exact" : "approx") + "|" +
                         std::to_string(params_.bands) + "x" + std::to_string(params_.rows) + "|" +
                         std::to_string(params_.seed) + "|" +
                         (params_.shingle.mode == ShingleConfig::Mode::kTokens ? "tok" : "chr") +
                         std::to_string(params_.shingle.k);
  fingerprint_ = text::hex64(text::fnv1a64(settings));
}

std::optional<ConceptId> Normalizer::normalize(std::string_view phrase) const {
  if (normalize_phrase(phrase).empty()) return std::nullopt;
  Normalization n = index_ ? normalize_term_with_fallback(phrase, graph_, *index_)
                           : normalize_term(phrase, graph_, nullptr, NormalizeMode::kExact,
                                            params_.shingle);
  if (n.score <= 0.0) return std::nullopt;
  return n.concept_id;
}

ConceptSet Normalizer::normalize_all(const PhraseSet& phrases) const {
  ConceptSet out;
  for (const auto& p : phrases)
    if (auto c = normalize(p)) out.insert(*c);
  return out;
}

// ---------------------------------------------------------------------------
// Labeler plumbing

LabelerReply<PatientExtraction> CallCountingLabeler::extract_patient(const PromptTemplate& tmpl,
                                                                     const std::string& patient_id,
                                                                     std::string_view note) {
  ++calls_;
  return inner_.extract_patient(tmpl, patient_id, note);
}

LabelerReply<CategorySet> CallCountingLabeler::categorize(const PromptTemplate& tmpl,
                                                          const std::string& trial_id,
                                                          std::size_t index,
                                                          std::string_view criterion) {
  ++calls_;
  return inner_.categorize(tmpl, trial_id, index, criterion);
}

LabelerReply<EligibilityLabel> CallCountingLabeler::label_criterion(
    const PromptTemplate& tmpl, const std::string& trial_id, std::size_t index,
    const Criterion& criterion, const PatientContext& ctx) {
  ++calls_;
  return inner_.label_criterion(tmpl, trial_id, index, criterion, ctx);
}

LabelerReply<CoarseLabel> CallCountingLabeler::label_trial(const PromptTemplate& tmpl,
                                                           const TrialRecord& trial,
                                                           const PatientContext& ctx) {
  ++calls_;
  return inner_.label_trial(tmpl, trial, ctx);
}

namespace {

// Owns the rule engine a NoisyLabeler wraps.
class OwnedNoisyLabeler : public Labeler {
 public:
  OwnedNoisyLabeler(double rate, std::uint64_t seed) : noisy_(mock_, rate, seed) {}

  std::string id() const override { return noisy_.id(); }
  LabelerReply<PatientExtraction> extract_patient(const PromptTemplate& t, const std::string& p,
                                                  std::string_view n) override {
    return noisy_.extract_patient(t, p, n);
  }
  LabelerReply<CategorySet> categorize(const PromptTemplate& t, const std::string& id,
                                       std::size_t i, std::string_view c) override {
    return noisy_.categorize(t, id, i, c);
  }
  LabelerReply<EligibilityLabel> label_criterion(const PromptTemplate& t, const std::string& id,
                                                 std::size_t i, const Criterion& c,
                                                 const PatientContext& ctx) override {
    return noisy_.label_criterion(t, id, i, c, ctx);
  }
  LabelerReply<CoarseLabel> label_trial(const PromptTemplate& t, const TrialRecord& r,
                                        const PatientContext& ctx) override {
    return noisy_.label_trial(t, r, ctx);
  }

 private:
  RuleMockLabeler mock_;
  NoisyLabeler noisy_;
};

}  // namespace

std::unique_ptr<Labeler> make_labeler(const PipelineConfig& cfg) {
  if (cfg.labeler == "rule-mock") return std::make_unique<RuleMockLabeler>();
  if (cfg.labeler == "noisy") return std::make_unique<OwnedNoisyLabeler>(cfg.noise_rate, cfg.seed);
  if (cfg.labeler == "external") {
    HttpChatConfig h;
    h.base_url = cfg.endpoint;
    h.path = cfg.endpoint_path;
    h.model = cfg.model;
    h.api_key_env = cfg.api_key_env;
    h.max_in_flight = cfg.max_in_flight;
    h.timeout_ms = cfg.timeout_ms;
    h.max_retries = cfg.max_retries;
    return std::make_unique<ExternalServiceLabeler>(std::make_shared<HttpChatClient>(h));
  }
  throw ConfigError("unknown labeler " + cfg.labeler);
}

// ---------------------------------------------------------------------------
// Ingestion and patients

IngestSummary ingest_corpus(const std::filesystem::path& path, const Normalizer& norm,
                            Labeler* categorizer, CorpusStore& store) {
  std::ifstream in(path);
  if (!in) throw PipelineError("ingest", "cannot open corpus " + path.string());
  IngestSummary s;
  ExtractionProvenance prov;
  std::string mode_tag = "lazy";
  if (categorizer) {
    prov.labeler = categorizer->id();
    prov.template_hash = templates::criterion_categorization().hash;
    mode_tag = "eager|" + prov.labeler + "|" + prov.template_hash;
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    ++s.read;
    try {
      RawTrial raw = parse_raw_trial(line);
      std::string key = text::hex64(
          text::fnv1a64(raw_trial_to_json(raw) + "|" + norm.fingerprint() + "|" + mode_tag));
      if (store.has_trial(key)) {
        ++s.existing;
        s.keys.push_back(key);
        continue;
      }
      TrialRecord r = extract_trial(raw, categorizer);
      r.condition_norm = norm.normalize_all(r.condition_raw);
      if (store.put_trial(key, r, prov)) ++s.stored;
      else ++s.existing;
      s.keys.push_back(key);
    } catch (const std::exception& e) {
      ++s.failed;
      s.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return s;
}

PatientProfile with_level(PatientProfile p, int n_level, const OntologyGraph& graph) {
  p.diagnosis_expanded = expand_diagnosis(p.diagnosis_norm, n_level, graph);
  return p;
}

PatientProfile build_patient(const Topic& topic, Labeler& lb, const Normalizer& norm, int n_level) {
  PatientProfile p = extract_patient(topic.id, topic.note, lb);
  p.diagnosis_norm = norm.normalize_all(p.diagnosis_raw);
  return with_level(std::move(p), n_level, norm.graph());
}

// ---------------------------------------------------------------------------
// Context

PipelineContext::PipelineContext(PipelineConfig cfg, Labeler* base_labeler) : cfg_(std::move(cfg)) {
  cfg_.validate();
  cfg_.check_paths();
  try {
    graph_ = load_ontology(cfg_.ontology);
  } catch (const std::exception& e) {
    throw PipelineError("ontology", e.what());
  }
  LshParams lsh;
  lsh.bands = static_cast<std::size_t>(cfg_.lsh_bands);
  lsh.rows = static_cast<std::size_t>(cfg_.lsh_rows);
  lsh.seed = cfg_.seed;
  lsh.shingle = shingle_config(cfg_.shingles);
  norm_ = std::make_unique<Normalizer>(
      graph_, cfg_.normalization == "exact" ? NormalizeMode::kExact : NormalizeMode::kApprox, lsh);

  if (base_labeler == nullptr) {
    owned_base_ = make_labeler(cfg_);
    base_labeler = owned_base_.get();
  }
  counter_ = std::make_unique<CallCountingLabeler>(*base_labeler);
  try {
    std::filesystem::create_directories(cfg_.effective_cache_path().parent_path());
    cache_ = std::make_unique<LabelCache>(cfg_.effective_cache_path());
  } catch (const std::exception& e) {
    throw PipelineError("cache", e.what());
  }
  caching_ = std::make_unique<CachingLabeler>(*counter_, *cache_);

  try {
    store_ = std::make_unique<CorpusStore>(cfg_.effective_store_dir());
    ingest_ = ingest_corpus(cfg_.corpus, *norm_,
                            cfg_.categorization == "eager" ? caching_.get() : nullptr, *store_);
    std::vector<TrialRecord> records;
    std::set<std::string> seen;
    for (const auto& key : ingest_.keys) {
      auto r = store_->trial_by_key(key);
      if (r && seen.insert(r->id).second) records.push_back(std::move(*r));
    }
    corpus_ = TrialCorpus(std::move(records));
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError("ingest", e.what());
  }
  cindex_ = std::make_unique<ConditionIndex>(corpus_);
  if (cfg_.retrieval == "bm25") tindex_ = std::make_unique<TextIndex>(corpus_);

  try {
    topics_ = read_topics(cfg_.topics);
    if (!cfg_.qrels.empty()) qrels_ = read_qrels(cfg_.qrels);
  } catch (const std::exception& e) {
    throw PipelineError("topics", e.what());
  }
}

PipelineContext::~PipelineContext() = default;

PatientProfile PipelineContext::patient(const Topic& t) {
  return build_patient(t, labeler(), *norm_, cfg_.n_level);
}

std::string PipelineContext::patient_key(const Topic& t) const {
  return text::hex64(text::fnv1a64(t.id + "\x1f" + t.note + "\x1f" + caching_->id() + "\x1f" +
                                   templates::patient_extraction().hash + "\x1f" +
                                   norm_->fingerprint() + "\x1f" + std::to_string(cfg_.n_level)));
}

RankedList PipelineContext::full_ranking(const PatientProfile& p) const {
  if (tindex_) return tindex_->retrieve(p.note_text, corpus_.size());
  return rank_corpus_by_overlap(p, *cindex_);
}

TopicResult PipelineContext::retrieve(const Topic& t, const PatientProfile& p) const {
  TopicResult r;
  r.topic_id = t.id;
  r.patient = p;
  const auto k = static_cast<std::size_t>(cfg_.first_stage_k);
  const auto rk = static_cast<std::size_t>(cfg_.rerank_k);
  r.first_stage = tindex_ ? tindex_->retrieve(p.note_text, k) : retrieve_by_condition(p, *cindex_, k);
  if (cfg_.demographic_filter) {
    r.filtered = demographic_filter(r.first_stage, p, corpus_);
    r.candidates = backfill_to_k(r.filtered, full_ranking(p), p, corpus_, rk);
  } else {
    r.filtered = r.first_stage;
    r.candidates.assign(r.first_stage.begin(),
                        r.first_stage.begin() + static_cast<std::ptrdiff_t>(std::min(rk, r.first_stage.size())));
  }
  return r;
}

TopicResult PipelineContext::run_topic(const Topic& t) {
  TopicResult r;
  r.topic_id = t.id;
  std::string stage = "extract";
  try {
    PatientProfile p = patient(t);
    stage = "retrieve";
    r = retrieve(t, p);
    if (cfg_.method == "ov") {
      r.final_ranking = r.candidates;
      return r;
    }
    stage = "label";
    ScoringMethod method = ScoringMethod::parse(cfg_.method);
    std::map<std::string, RelevanceSignals> relevance;
    for (const auto& e : r.candidates) {
      TrialRecord trial = corpus_.get(e.trial_id);
      if (!trial.categorized()) categorize_trial(trial, labeler());
      r.judgments[e.trial_id] = judge_trial(trial, p, labeler(), method.uses_coarse());
      relevance[e.trial_id] = relevance_signals(p, trial);
    }
    stage = "rerank";
    RerankResult rr =
        rerank(r.candidates, r.judgments, relevance, method, parse_gate_mode(cfg_.gate),
               cfg_.counting == "once" ? CountingMode::kOnce : CountingMode::kPerCategory);
    r.final_ranking = std::move(rr.ranked);
    r.rejected = std::move(rr.rejected);
  } catch (const std::exception& e) {
    r.error_stage = stage;
    r.error = e.what();
    r.final_ranking.clear();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Outputs

namespace {

std::filesystem::path make_run_dir(const PipelineConfig& cfg) {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  std::string base = std::string("run-") + stamp + "-" +
                     text::hex64(text::fnv1a64(cfg.to_toml())).substr(0, 8);
  std::filesystem::create_directories(cfg.output_dir);
  for (int i = 1;; ++i) {
    auto dir = cfg.output_dir / (i == 1 ? base : base + "-" + std::to_string(i));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
  if (!out) throw PipelineError("output", "cannot write " + p.string());
}

std::string judgments_jsonl(const std::vector<TopicResult>& results) {
  std::ostringstream out;
  for (const auto& r : results) {
    for (const auto& [trial, j] : r.judgments) {
      ordered_json line;
      line["topic"] = r.topic_id;
      line["trial"] = trial;
      line["coarse"] = j.coarse ? ordered_json(to_string(*j.coarse)) : ordered_json(nullptr);
      ordered_json fine = ordered_json::array();
      for (const auto& c : j.fine) {
        fine.push_back({{"index", c.criterion_index},
                        {"polarity", to_string(c.polarity)},
                        {"categories", to_string(c.categories)},
                        {"label", to_string(c.label)},
                        {"degraded", c.degraded}});
      }
      line["fine"] = fine;
      out << line.dump() << "\n";
    }
  }
  return out.str();
}

}  // namespace

void write_metrics_json(std::ostream& out, const MetricReport& m) {
  ordered_json j;
  ordered_json macro = ordered_json::object();
  for (const auto& [k, v] : m.macro) macro[k] = v;
  j["macro"] = macro;
  ordered_json per = ordered_json::object();
  for (const auto& [topic, vals] : m.per_topic) {
    ordered_json t = ordered_json::object();
    for (const auto& [k, v] : vals) t[k] = v;
    per[topic] = t;
  }
  j["per_topic"] = per;
  j["warnings"] = m.warnings;
  out << j.dump(2) << "\n";
}

void write_metrics_tsv(std::ostream& out, const MetricReport& m) {
  std::vector<std::string> names;
  for (const auto& [k, _] : m.macro) names.push_back(k);
  out << "topic";
  for (const auto& n : names) out << "\t" << n;
  out << "\n";
  auto row = [&](const std::string& label, const std::map<std::string, double>& vals) {
    out << label;
    for (const auto& n : names) {
      auto it = vals.find(n);
      out << "\t" << (it == vals.end() ? std::string("NA") : text::format_double(it->second));
    }
    out << "\n";
  };
  for (const auto& [topic, vals] : m.per_topic) row(topic, vals);
  row("all", m.macro);
}

PipelineResult run_pipeline(PipelineContext& ctx, bool write_outputs) {
  const PipelineConfig& cfg = ctx.config();
  const auto& topics = ctx.topics();
  PipelineResult res;
  res.ingest = ctx.ingest_summary();
  res.topics.resize(topics.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < topics.size(); i = next++) res.topics[i] = ctx.run_topic(topics[i]);
  };
  std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), topics.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  const TopicResult* failed = nullptr;
  for (const auto& r : res.topics) {
    if (!r.error.empty()) {
      if (!failed) failed = &r;
      continue;
    }
    res.run.set_topic(r.topic_id, r.final_ranking, cfg.run_tag);
  }
  if (ctx.qrels() && !failed) {
    EvalConfig ec;
    ec.threshold = cfg.relevance_threshold;
    ec.gain = cfg.gain == "exponential" ? Gain::kExponential : Gain::kLinear;
    res.metrics = evaluate_run(res.run, *ctx.qrels(), ec);
  }
  res.upstream_calls = ctx.upstream_calls();

  if (write_outputs) {
    res.run_dir = make_run_dir(cfg);
    write_file(res.run_dir / "config.toml", cfg.to_toml());
    std::ostringstream run;
    write_run(run, res.run);
    write_file(res.run_dir / "run.txt", run.str());
    write_file(res.run_dir / "judgments.jsonl", judgments_jsonl(res.topics));
    if (res.metrics) {
      std::ostringstream mj, mt;
      write_metrics_json(mj, *res.metrics);
      write_metrics_tsv(mt, *res.metrics);
      write_file(res.run_dir / "metrics.json", mj.str());
      write_file(res.run_dir / "metrics.tsv", mt.str());
    }
    if (failed) {
      std::ostringstream errs;
      for (const auto& r : res.topics)
        if (!r.error.empty()) errs << r.topic_id << "\t" << r.error_stage << "\t" << r.error << "\n";
      write_file(res.run_dir / "errors.tsv", errs.str());
    }
  }
  if (failed) {
    throw PipelineError(failed->error_stage, "topic " + failed->topic_id + ": " + failed->error);
  }
  return res;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts) {
  PipelineContext ctx(cfg, opts.base_labeler);
  return run_pipeline(ctx, opts.write_outputs);
}

// ---------------------------------------------------------------------------
// Analyses

namespace {

struct Quality {
  std::optional<double> recall;
  std::optional<double> precision;
};

Quality retrieval_quality(const RankedList& retrieved, const TopicQrels& q, int threshold) {
  std::size_t relevant = 0, hits = 0;
  for (const auto& [_, g] : q) relevant += g >= threshold ? 1 : 0;
  for (const auto& e : retrieved) {
    auto it = q.find(e.trial_id);
    hits += it != q.end() && it->second >= threshold ? 1 : 0;
  }
  Quality out;
  if (relevant) out.recall = static_cast<double>(hits) / static_cast<double>(relevant);
  if (!retrieved.empty()) out.precision = static_cast<double>(hits) / static_cast<double>(retrieved.size());
  return out;
}

}  // namespace

std::vector<SweepRow> sweep_n_level(PipelineContext& ctx, const std::vector<int>& levels) {
  if (levels.empty()) throw PipelineError("sweep", "no levels given");
  if (!ctx.qrels()) throw PipelineError("sweep", "qrels are required");
  std::vector<std::pair<const Topic*, PatientProfile>> patients;
  for (const auto& t : ctx.topics()) {
    try {
      patients.emplace_back(&t, ctx.patient(t));
    } catch (const std::exception& e) {
      throw PipelineError("extract", "topic " + t.id + ": " + e.what());
    }
  }
  std::vector<SweepRow> rows;
  for (int level : levels) {
    if (level < 0) throw PipelineError("sweep", "negative level");
    SweepRow row;
    row.level = level;
    double rsum = 0, psum = 0, csum = 0;
    std::size_t rn = 0, pn = 0;
    for (const auto& [t, base] : patients) {
      TopicResult r = ctx.retrieve(*t, with_level(base, level, ctx.ontology()));
      Quality q = retrieval_quality(r.filtered, ctx.qrels()->topic(t->id),
                                    ctx.config().relevance_threshold);
      if (q.recall) rsum += *q.recall, ++rn;
      if (q.precision) psum += *q.precision, ++pn;
      csum += static_cast<double>(r.filtered.size());
    }
    row.recall = rn ? rsum / static_cast<double>(rn) : 0.0;
    row.precision = pn ? psum / static_cast<double>(pn) : 0.0;
    row.mean_candidates = patients.empty() ? 0.0 : csum / static_cast<double>(patients.size());
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_tsv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "level\trecall\tprecision\tmean_ctrs\n";
  for (const auto& r : rows) {
    out << r.level << "\t" << text::format_double(r.recall) << "\t"
        << text::format_double(r.precision) << "\t" << text::format_double(r.mean_candidates)
        << "\n";
  }
}

std::vector<DepthPoint> depth_points(const std::vector<TopicResult>& results, const Qrels& qrels,
                                     const OntologyGraph& graph, int threshold) {
  std::vector<DepthPoint> out;
  for (const auto& r : results) {
    if (r.patient.diagnosis_norm.empty()) continue;
    Quality q = retrieval_quality(r.filtered, qrels.topic(r.topic_id), threshold);
    if (!q.recall) continue;
    DepthPoint p;
    p.topic_id = r.topic_id;
    for (const auto& c : r.patient.diagnosis_norm) p.depth = std::max(p.depth, concept_depth(c, graph));
    p.recall = *q.recall;
    p.precision = q.precision.value_or(0.0);
    out.push_back(p);
  }
  return out;
}

DepthAnalysis depth_analysis(const std::vector<DepthPoint>& points) {
  DepthAnalysis a;
  a.points = points;
  std::vector<double> d, rec, prec;
  for (const auto& p : points) {
    d.push_back(p.depth);
    rec.push_back(p.recall);
    prec.push_back(p.precision);
  }
  a.recall_r = pearson_r(d, rec);
  a.precision_r = pearson_r(d, prec);
  return a;
}

void write_depth_tsv(std::ostream& out, const DepthAnalysis& a) {
  out << "topic\tdepth\trecall\tprecision\n";
  for (const auto& p : a.points) {
    out << p.topic_id << "\t" << p.depth << "\t" << text::format_double(p.recall) << "\t"
        << text::format_double(p.precision) << "\n";
  }
  out << "# pearson_recall\t" << text::format_double(a.recall_r) << "\n";
  out << "# pearson_precision\t" << text::format_double(a.precision_r) << "\n";
}

}  // namespace trialmatch
