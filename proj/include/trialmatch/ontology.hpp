#pragma once

// Is-a concept ontology: loading, similarity-based term normalization (exact
// scan or MinHash LSH), n-level neighbourhood expansion and concept depth.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trialmatch/core_model.hpp"

namespace trialmatch {

class OntologyError : public std::runtime_error {
 public:
  enum class Kind {
    kCycleDetected,
    kDanglingParent,
    kDuplicateId,
    kSelfParent,
    kEmptyOntology,
    kUnknownConcept,
    kNoCandidate,
    kParse,
    kEmptyInput,
  };

  OntologyError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Concept {
  ConceptId id;
  std::string preferred_label;
  std::vector<std::string> synonyms;
  std::vector<ConceptId> parents;
};

/// Validated, immutable is-a DAG. Concepts are stored in id order; dense
/// indices are positions in that order.
class OntologyGraph {
 public:
  OntologyGraph() = default;
  /// Throws OntologyError (DuplicateId, SelfParent, DanglingParent,
  /// CycleDetected).
  explicit OntologyGraph(std::vector<Concept> concepts);

  std::size_t size() const { return concepts_.size(); }
  bool empty() const { return concepts_.empty(); }
  bool contains(const ConceptId& id) const { return index_.count(id) != 0; }

  /// Throws OntologyError::kUnknownConcept.
  std::size_t index_of(const ConceptId& id) const;
  const Concept& concept_at(std::size_t idx) const { return concepts_[idx]; }
  const Concept& get(const ConceptId& id) const { return concepts_[index_of(id)]; }

  const std::vector<std::size_t>& parents_of(std::size_t idx) const { return parents_[idx]; }
  const std::vector<std::size_t>& children_of(std::size_t idx) const { return children_[idx]; }
  const std::vector<ConceptId>& roots() const { return roots_; }
  const std::vector<Concept>& concepts() const { return concepts_; }

  /// Shortest is-a path length to any root (roots have depth 0).
  int depth_at(std::size_t idx) const { return depth_[idx]; }

 private:
  std::vector<Concept> concepts_;
  std::unordered_map<ConceptId, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<ConceptId> roots_;
  std::vector<int> depth_;
};

/// JSONL, one {"id","label","synonyms","parents"} object per line. Blank lines
/// are ignored.
OntologyGraph load_ontology(std::istream& in);
OntologyGraph load_ontology(const std::filesystem::path& path);

struct ShingleConfig {
  enum class Mode { kTokens, kChars };
  Mode mode = Mode::kTokens;
  std::size_t k = 1;  // tokens per shingle, or characters per shingle

  static ShingleConfig tokens() { return {}; }
  static ShingleConfig chars(std::size_t k) { return {Mode::kChars, k}; }
};

/// Sorted, unique shingles of the normalized phrase.
std::vector<std::string> shingles(std::string_view phrase, const ShingleConfig& cfg = {});

/// Jaccard coefficient of the shingle sets; 0 when both are empty.
double phrase_similarity(std::string_view a, std::string_view b, const ShingleConfig& cfg = {});
double jaccard(const std::vector<std::string>& sorted_a, const std::vector<std::string>& sorted_b);

struct LshParams {
  std::size_t bands = 32;
  std::size_t rows = 4;
  std::uint64_t seed = 0x5eed;
  ShingleConfig shingle;

  std::size_t num_hashes() const { return bands * rows; }
};

/// MinHash LSH over every label and synonym of an ontology.
class NNIndex {
 public:
  struct Entry {
    std::size_t concept_index;
    std::string term;
    std::vector<std::string> shingles;
  };

  NNIndex(const OntologyGraph& graph, LshParams params = {});

  const LshParams& params() const { return params_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<std::uint64_t> signature(const std::vector<std::string>& shingles) const;
  /// Entry indices sharing at least one band bucket with the query, sorted
  /// and unique.
  std::vector<std::size_t> candidates(std::string_view phrase) const;

 private:
  LshParams params_;
  std::vector<std::uint64_t> mult_;
  std::vector<std::uint64_t> add_;
  std::vector<Entry> entries_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> buckets_;
};

enum class NormalizeMode { kExact, kApprox };

struct Normalization {
  ConceptId concept_id;
  double score = 0.0;
  std::string matched_term;
};

/// argmax over labels and synonyms of phrase_similarity; ties go to the
/// lexicographically smallest concept id. Approx restricts the scan to LSH
/// bucket collisions and throws kNoCandidate when there are none. Throws
/// kEmptyOntology on an empty graph.
Normalization normalize_term(std::string_view phrase, const OntologyGraph& graph,
                             const NNIndex* index, NormalizeMode mode,
                             const ShingleConfig& cfg = {});

/// Approx with a fallback to the exact scan when LSH finds nothing.
Normalization normalize_term_with_fallback(std::string_view phrase, const OntologyGraph& graph,
                                           const NNIndex& index);

/// Concepts within n undirected is-a hops of t, including t itself.
ConceptSet expand_neighborhood(const ConceptId& t, int n, const OntologyGraph& graph);

/// Union of the n-level neighbourhoods of every member.
ConceptSet expand_diagnosis(const ConceptSet& normalized, int n, const OntologyGraph& graph);

int concept_depth(const ConceptId& t, const OntologyGraph& graph);

/// Mean of phrase_similarity(raw, preferred label) over the pairs. Throws
/// kEmptyInput for an empty list.
double mean_normalization_similarity(
    const std::vector<std::pair<std::string, ConceptId>>& pairs, const OntologyGraph& graph,
    const ShingleConfig& cfg = {});

}  // namespace trialmatch
