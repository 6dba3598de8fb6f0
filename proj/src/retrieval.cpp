#include "trialmatch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "trialmatch/text.hpp"

namespace trialmatch {

TrialCorpus::TrialCorpus(std::vector<TrialRecord> records) : records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(),
            [](const TrialRecord& a, const TrialRecord& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second)
      throw std::invalid_argument("duplicate trial id " + records_[i].id);
  }
}

const TrialRecord& TrialCorpus::get(const std::string& id) const {
  return records_[ordinal_of(id)];
}

std::size_t TrialCorpus::ordinal_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown trial " + id);
  return it->second;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kConditionRelevance:
      return "condition";
    case Provenance::kBackfill:
      return "backfill";
    case Provenance::kText:
      return "text";
  }
  return "condition";
}

void renumber(RankedList& list) {
  for (std::size_t i = 0; i < list.size(); ++i) list[i].rank = i + 1;
}

ConceptSet condition_relevance(const PatientProfile& p, const TrialRecord& r) {
  return p.diagnosis_expanded.intersect(r.condition_norm);
}

double overlap_coefficient(const ConceptSet& d, const ConceptSet& c) {
  if (d.empty() || c.empty()) return 0.0;
  return static_cast<double>(d.intersection_size(c)) /
         static_cast<double>(std::min(d.size(), c.size()));
}

double overlap_coefficient(const PatientProfile& p, const TrialRecord& r) {
  return overlap_coefficient(p.diagnosis_expanded, r.condition_norm);
}

// ---------------------------------------------------------------------------

ConditionIndex::ConditionIndex(const TrialCorpus& corpus) : corpus_(&corpus) {
  sizes_.resize(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& conds = corpus.at(i).condition_norm;
    sizes_[i] = conds.size();
    for (const auto& c : conds) postings_[c].push_back(static_cast<std::uint32_t>(i));
  }
}

const std::vector<std::uint32_t>& ConditionIndex::postings(const ConceptId& c) const {
  static const std::vector<std::uint32_t> empty;
  auto it = postings_.find(c);
  return it == postings_.end() ? empty : it->second;
}

namespace {

struct Scored {
  std::uint32_t ordinal;
  double ov;
};

std::vector<Scored> overlap_scores(const PatientProfile& p, const ConditionIndex& idx) {
  std::unordered_map<std::uint32_t, std::size_t> hits;
  for (const auto& c : p.diagnosis_expanded)
    for (std::uint32_t t : idx.postings(c)) ++hits[t];
  std::vector<Scored> out;
  out.reserve(hits.size());
  const double dsize = static_cast<double>(p.diagnosis_expanded.size());
  for (const auto& [t, n] : hits) {
    double denom = std::min(dsize, static_cast<double>(idx.condition_count(t)));
    out.push_back({t, static_cast<double>(n) / denom});
  }
  // Ordinals follow id order, so ordinal ascending is id ascending.
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    return a.ov != b.ov ? a.ov > b.ov : a.ordinal < b.ordinal;
  });
  return out;
}

}  // namespace

RankedList retrieve_by_condition(const PatientProfile& p, const ConditionIndex& idx,
                                 std::size_t k) {
  RankedList out;
  for (const auto& s : overlap_scores(p, idx)) {
    if (out.size() >= k) break;
    out.push_back({idx.corpus().at(s.ordinal).id, s.ov, 0, Provenance::kConditionRelevance});
  }
  renumber(out);
  return out;
}

RankedList rank_corpus_by_overlap(const PatientProfile& p, const ConditionIndex& idx) {
  RankedList out;
  std::vector<bool> seen(idx.corpus().size(), false);
  for (const auto& s : overlap_scores(p, idx)) {
    seen[s.ordinal] = true;
    out.push_back({idx.corpus().at(s.ordinal).id, s.ov, 0, Provenance::kConditionRelevance});
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) out.push_back({idx.corpus().at(i).id, 0.0, 0, Provenance::kBackfill});
  }
  renumber(out);
  return out;
}

// ---------------------------------------------------------------------------

TextIndex::TextIndex(const std::vector<std::pair<std::string, std::string>>& docs,
                     Bm25Params params)
    : params_(params) {
  build(docs);
}

TextIndex::TextIndex(const TrialCorpus& corpus, Bm25Params params) : params_(params) {
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& r : corpus.records()) docs.emplace_back(r.id, trial_document_text(r));
  build(docs);
}

void TextIndex::build(const std::vector<std::pair<std::string, std::string>>& docs) {
  std::size_t total = 0;
  for (const auto& [id, body] : docs) {
    auto doc = static_cast<std::uint32_t>(ids_.size());
    ids_.push_back(id);
    auto toks = text::word_tokens(body);
    lengths_.push_back(toks.size());
    total += toks.size();
    std::unordered_map<std::string, std::uint32_t> tf;
    for (auto& t : toks) ++tf[t];
    for (auto& [term, n] : tf) postings_[term].push_back({doc, n});
  }
  avgdl_ = ids_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(ids_.size());
}

std::size_t TextIndex::doc_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double TextIndex::idf(std::size_t df) const {
  double n = static_cast<double>(ids_.size());
  double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double TextIndex::term_score(std::size_t tf, std::size_t df, std::size_t doc_len) const {
  if (tf == 0) return 0.0;
  double f = static_cast<double>(tf);
  double norm = avgdl_ > 0.0 ? static_cast<double>(doc_len) / avgdl_ : 0.0;
  double denom = f + params_.k1 * (1.0 - params_.b + params_.b * norm);
  return idf(df) * f * (params_.k1 + 1.0) / denom;
}

namespace {

std::vector<std::string> unique_terms(std::string_view query) {
  auto toks = text::word_tokens(query);
  std::sort(toks.begin(), toks.end());
  toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
  return toks;
}

}  // namespace

double TextIndex::score(std::string_view query, const std::string& doc_id) const {
  auto pos = std::find(ids_.begin(), ids_.end(), doc_id);
  if (pos == ids_.end()) throw std::out_of_range("unknown document " + doc_id);
  auto doc = static_cast<std::uint32_t>(pos - ids_.begin());
  double s = 0.0;
  for (const auto& term : unique_terms(query)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    for (const auto& [d, tf] : it->second) {
      if (d == doc) s += term_score(tf, it->second.size(), lengths_[doc]);
    }
  }
  return s;
}

RankedList TextIndex::retrieve(std::string_view query, std::size_t k) const {
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& term : unique_terms(query)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    for (const auto& [d, tf] : it->second)
      acc[d] += term_score(tf, it->second.size(), lengths_[d]);
  }
  std::vector<std::pair<std::uint32_t, double>> scored(acc.begin(), acc.end());
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : ids_[a.first] < ids_[b.first];
  });
  RankedList out;
  for (const auto& [d, s] : scored) {
    if (out.size() >= k) break;
    out.push_back({ids_[d], s, 0, Provenance::kText});
  }
  renumber(out);
  return out;
}

std::string trial_document_text(const TrialRecord& r) {
  if (!text::trim(r.raw_text).empty()) return r.raw_text;
  std::string out;
  for (const auto& c : r.condition_raw) out += c + "\n";
  for (const auto& c : r.criteria) out += c.text + "\n";
  return out;
}

// ---------------------------------------------------------------------------

bool passes_demographics(const PatientProfile& p, const TrialRecord& r) {
  return !age_intersect(p.age, r.age).empty() && gender_match(p.gender, r.gender);
}

RankedList demographic_filter(const RankedList& cands, const PatientProfile& p,
                              const TrialCorpus& corpus) {
  RankedList out;
  for (const auto& e : cands)
    if (passes_demographics(p, corpus.get(e.trial_id))) out.push_back(e);
  renumber(out);
  return out;
}

RankedList backfill_to_k(const RankedList& filtered, const RankedList& full_ranking,
                         const PatientProfile& p, const TrialCorpus& corpus, std::size_t k) {
  RankedList out(filtered.begin(), filtered.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(k, filtered.size())));
  std::unordered_set<std::string> present;
  for (const auto& e : out) present.insert(e.trial_id);
  for (const auto& e : full_ranking) {
    if (out.size() >= k) break;
    if (present.count(e.trial_id)) continue;
    if (!passes_demographics(p, corpus.get(e.trial_id))) continue;
    RankedEntry b = e;
    b.provenance = Provenance::kBackfill;
    out.push_back(b);
    present.insert(e.trial_id);
  }
  renumber(out);
  return out;
}

}  // namespace trialmatch
