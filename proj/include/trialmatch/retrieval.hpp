#pragma once

// First-stage candidate generation: condition overlap ranking, a BM25 text
// baseline, the demographic filter and backfilling to a fixed depth.

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trialmatch/core_model.hpp"

namespace trialmatch {

/// Trial records indexed by id. Iteration order is ascending id.
class TrialCorpus {
 public:
  TrialCorpus() = default;
  /// Throws std::invalid_argument on duplicate ids.
  explicit TrialCorpus(std::vector<TrialRecord> records);

  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  /// Throws std::out_of_range for unknown ids.
  const TrialRecord& get(const std::string& id) const;
  const TrialRecord& at(std::size_t ordinal) const { return records_[ordinal]; }
  std::size_t ordinal_of(const std::string& id) const;
  const std::vector<TrialRecord>& records() const { return records_; }

 private:
  std::vector<TrialRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Provenance { kConditionRelevance, kBackfill, kText };
std::string to_string(Provenance p);

struct RankedEntry {
  std::string trial_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
  Provenance provenance = Provenance::kConditionRelevance;
};

using RankedList = std::vector<RankedEntry>;

/// Renumbers ranks 1..n in list order.
void renumber(RankedList& list);

/// Γ = D̃ ∩ Ĉ.
ConceptSet condition_relevance(const PatientProfile& p, const TrialRecord& r);

/// |D̃ ∩ Ĉ| / min(|D̃|, |Ĉ|); 0 when either set is empty.
double overlap_coefficient(const ConceptSet& expanded_diagnosis, const ConceptSet& conditions);
double overlap_coefficient(const PatientProfile& p, const TrialRecord& r);

/// Concept -> postings over the corpus' normalized trial conditions.
class ConditionIndex {
 public:
  explicit ConditionIndex(const TrialCorpus& corpus);

  const TrialCorpus& corpus() const { return *corpus_; }
  /// Trial ordinals (ascending, hence ascending id) whose conditions contain c.
  const std::vector<std::uint32_t>& postings(const ConceptId& c) const;
  std::size_t condition_count(std::size_t ordinal) const { return sizes_[ordinal]; }

 private:
  const TrialCorpus* corpus_;
  std::unordered_map<ConceptId, std::vector<std::uint32_t>> postings_;
  std::vector<std::size_t> sizes_;
};

/// Top-K trials with a non-empty condition intersection, by overlap
/// coefficient descending, ties by id ascending.
RankedList retrieve_by_condition(const PatientProfile& p, const ConditionIndex& idx,
                                 std::size_t k);

/// Every trial in the corpus in the same order (zero-overlap trials last,
/// marked Backfill). Source for backfill_to_k.
RankedList rank_corpus_by_overlap(const PatientProfile& p, const ConditionIndex& idx);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Inverted index over lowercase alphanumeric tokens (no stemming).
class TextIndex {
 public:
  TextIndex(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params = {});
  explicit TextIndex(const TrialCorpus& corpus, Bm25Params params = {});

  std::size_t doc_count() const { return ids_.size(); }
  double avg_doc_length() const { return avgdl_; }
  std::size_t doc_frequency(const std::string& term) const;
  const Bm25Params& params() const { return params_; }

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(std::size_t df) const;
  /// Contribution of one query term to one document.
  double term_score(std::size_t tf, std::size_t df, std::size_t doc_len) const;
  /// Score of the document with the given id, unique query terms summed.
  double score(std::string_view query, const std::string& doc_id) const;

  RankedList retrieve(std::string_view query, std::size_t k) const;

 private:
  void build(const std::vector<std::pair<std::string, std::string>>& docs);

  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::size_t> lengths_;
  double avgdl_ = 0.0;
  std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;
};

/// Text used for the BM25 baseline: the raw record text, or conditions and
/// criteria when the record has none.
std::string trial_document_text(const TrialRecord& r);

/// age_intersect non-empty and gender_match.
bool passes_demographics(const PatientProfile& p, const TrialRecord& r);

/// Subsequence of `cands` passing the demographic predicate, ranks renumbered.
RankedList demographic_filter(const RankedList& cands, const PatientProfile& p,
                              const TrialCorpus& corpus);

/// Truncates to K, or tops the list up with demographic-passing trials from
/// `full_ranking` (marked Backfill) that are not already present.
RankedList backfill_to_k(const RankedList& filtered, const RankedList& full_ranking,
                         const PatientProfile& p, const TrialCorpus& corpus, std::size_t k);

}  // namespace trialmatch
