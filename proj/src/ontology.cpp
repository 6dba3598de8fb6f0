#include "trialmatch/ontology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <random>

#include <json.hpp>

#include "trialmatch/text.hpp"

namespace trialmatch {

using json = nlohmann::json;

OntologyGraph::OntologyGraph(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
  std::sort(concepts_.begin(), concepts_.end(),
            [](const Concept& a, const Concept& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (!index_.emplace(concepts_[i].id, i).second)
      throw OntologyError(OntologyError::Kind::kDuplicateId, "duplicate concept id: " + concepts_[i].id);
  }

  const std::size_t n = concepts_.size();
  parents_.assign(n, {});
  children_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& pid : concepts_[i].parents) {
      if (pid == concepts_[i].id)
        throw OntologyError(OntologyError::Kind::kSelfParent, "concept is its own parent: " + pid);
      auto it = index_.find(pid);
      if (it == index_.end())
        throw OntologyError(OntologyError::Kind::kDanglingParent,
                            "concept " + concepts_[i].id + " lists unknown parent " + pid);
      parents_[i].push_back(it->second);
    }
    std::sort(parents_[i].begin(), parents_[i].end());
    parents_[i].erase(std::unique(parents_[i].begin(), parents_[i].end()), parents_[i].end());
    for (std::size_t p : parents_[i]) children_[p].push_back(i);
  }

  // Kahn's algorithm from the roots downwards; also yields shortest depths
  // because every concept is finalized only after all of its parents.
  std::vector<std::size_t> pending(n);
  std::deque<std::size_t> ready;
  depth_.assign(n, std::numeric_limits<int>::max());
  for (std::size_t i = 0; i < n; ++i) {
    pending[i] = parents_[i].size();
    if (pending[i] == 0) {
      ready.push_back(i);
      depth_[i] = 0;
      roots_.push_back(concepts_[i].id);
    }
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    std::size_t cur = ready.front();
    ready.pop_front();
    ++visited;
    for (std::size_t child : children_[cur]) {
      depth_[child] = std::min(depth_[child], depth_[cur] + 1);
      if (--pending[child] == 0) ready.push_back(child);
    }
  }
  if (visited != n) throw OntologyError(OntologyError::Kind::kCycleDetected, "is-a cycle detected");
}

std::size_t OntologyGraph::index_of(const ConceptId& id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw OntologyError(OntologyError::Kind::kUnknownConcept, "unknown concept: " + id);
  return it->second;
}

OntologyGraph load_ontology(std::istream& in) {
  std::vector<Concept> concepts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      Concept c;
      c.id = j.at("id").get<std::string>();
      c.preferred_label = j.at("label").get<std::string>();
      if (j.contains("synonyms")) c.synonyms = j["synonyms"].get<std::vector<std::string>>();
      if (j.contains("parents")) c.parents = j["parents"].get<std::vector<std::string>>();
      concepts.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw OntologyError(OntologyError::Kind::kParse,
                          "ontology line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return OntologyGraph(std::move(concepts));
}

OntologyGraph load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw OntologyError(OntologyError::Kind::kParse, "cannot open " + path.string());
  return load_ontology(in);
}

std::vector<std::string> shingles(std::string_view phrase, const ShingleConfig& cfg) {
  std::vector<std::string> out;
  const std::size_t k = std::max<std::size_t>(cfg.k, 1);
  if (cfg.mode == ShingleConfig::Mode::kTokens) {
    std::vector<std::string> toks = text::word_tokens(normalize_phrase(phrase));
    if (toks.empty()) return out;
    if (toks.size() <= k) {
      std::string joined;
      for (const auto& t : toks) joined += (joined.empty() ? "" : " ") + t;
      out.push_back(std::move(joined));
    } else {
      for (std::size_t i = 0; i + k <= toks.size(); ++i) {
        std::string s = toks[i];
        for (std::size_t j = 1; j < k; ++j) s += " " + toks[i + j];
        out.push_back(std::move(s));
      }
    }
  } else {
    std::string norm = normalize_phrase(phrase);
    if (norm.empty()) return out;
    if (norm.size() <= k) {
      out.push_back(norm);
    } else {
      for (std::size_t i = 0; i + k <= norm.size(); ++i) out.push_back(norm.substr(i, k));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double phrase_similarity(std::string_view a, std::string_view b, const ShingleConfig& cfg) {
  return jaccard(shingles(a, cfg), shingles(b, cfg));
}

namespace {

constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

std::uint64_t mod_mersenne61(unsigned __int128 x) {
  std::uint64_t lo = static_cast<std::uint64_t>(x & kMersenne61);
  std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
  std::uint64_t r = lo + hi;
  while (r >= kMersenne61) r -= kMersenne61;
  return r;
}

std::uint64_t band_key(const std::vector<std::uint64_t>& sig, std::size_t band, std::size_t rows) {
  std::uint64_t h = text::fnv1a64(std::to_string(band));
  for (std::size_t r = 0; r < rows; ++r) {
    std::uint64_t v = sig[band * rows + r];
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace

NNIndex::NNIndex(const OntologyGraph& graph, LshParams params) : params_(params) {
  if (params_.bands == 0 || params_.rows == 0)
    throw std::invalid_argument("LSH bands and rows must be positive");
  std::mt19937_64 rng(params_.seed);
  std::uniform_int_distribution<std::uint64_t> dist_a(1, kMersenne61 - 1);
  std::uniform_int_distribution<std::uint64_t> dist_b(0, kMersenne61 - 1);
  for (std::size_t i = 0; i < params_.num_hashes(); ++i) {
    mult_.push_back(dist_a(rng));
    add_.push_back(dist_b(rng));
  }
  buckets_.resize(params_.bands);

  for (std::size_t ci = 0; ci < graph.size(); ++ci) {
    const Concept& c = graph.concept_at(ci);
    std::vector<std::string> terms{c.preferred_label};
    terms.insert(terms.end(), c.synonyms.begin(), c.synonyms.end());
    for (auto& term : terms) {
      Entry e{ci, std::move(term), {}};
      e.shingles = shingles(e.term, params_.shingle);
      const std::size_t entry_idx = entries_.size();
      if (!e.shingles.empty()) {
        auto sig = signature(e.shingles);
        for (std::size_t b = 0; b < params_.bands; ++b)
          buckets_[b][band_key(sig, b, params_.rows)].push_back(entry_idx);
      }
      entries_.push_back(std::move(e));
    }
  }
}

std::vector<std::uint64_t> NNIndex::signature(const std::vector<std::string>& sh) const {
  std::vector<std::uint64_t> sig(params_.num_hashes(), std::numeric_limits<std::uint64_t>::max());
  for (const auto& s : sh) {
    const std::uint64_t base = mod_mersenne61(text::fnv1a64(s));
    for (std::size_t i = 0; i < sig.size(); ++i) {
      std::uint64_t v =
          mod_mersenne61(static_cast<unsigned __int128>(mult_[i]) * base + add_[i]);
      sig[i] = std::min(sig[i], v);
    }
  }
  return sig;
}

std::vector<std::size_t> NNIndex::candidates(std::string_view phrase) const {
  std::vector<std::size_t> out;
  auto sh = shingles(phrase, params_.shingle);
  if (sh.empty()) return out;
  auto sig = signature(sh);
  for (std::size_t b = 0; b < params_.bands; ++b) {
    auto it = buckets_[b].find(band_key(sig, b, params_.rows));
    if (it != buckets_[b].end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

struct Best {
  std::size_t concept_index = std::numeric_limits<std::size_t>::max();
  double score = -1.0;
  std::string term;

  void offer(std::size_t ci, double s, const std::string& t) {
    if (s > score || (s == score && ci < concept_index)) {
      concept_index = ci;
      score = s;
      term = t;
    }
  }
};

Normalization finish(const Best& best, const OntologyGraph& graph) {
  return {graph.concept_at(best.concept_index).id, best.score, best.term};
}

}  // namespace

Normalization normalize_term(std::string_view phrase, const OntologyGraph& graph,
                             const NNIndex* index, NormalizeMode mode, const ShingleConfig& cfg) {
  if (graph.empty()) throw OntologyError(OntologyError::Kind::kEmptyOntology, "empty ontology");
  Best best;
  if (mode == NormalizeMode::kApprox) {
    if (index == nullptr) throw std::invalid_argument("approximate normalization needs an index");
    const auto query = shingles(phrase, index->params().shingle);
    for (std::size_t e : index->candidates(phrase)) {
      const auto& entry = index->entries()[e];
      best.offer(entry.concept_index, jaccard(query, entry.shingles), entry.term);
    }
    if (best.score < 0.0)
      throw OntologyError(OntologyError::Kind::kNoCandidate,
                          "no LSH candidate for '" + std::string(phrase) + "'");
    return finish(best, graph);
  }

  const auto query = shingles(phrase, cfg);
  const bool reuse = index != nullptr && index->params().shingle.mode == cfg.mode &&
                     index->params().shingle.k == cfg.k;
  if (reuse) {
    for (const auto& entry : index->entries())
      best.offer(entry.concept_index, jaccard(query, entry.shingles), entry.term);
  } else {
    for (std::size_t ci = 0; ci < graph.size(); ++ci) {
      const Concept& c = graph.concept_at(ci);
      best.offer(ci, jaccard(query, shingles(c.preferred_label, cfg)), c.preferred_label);
      for (const auto& syn : c.synonyms) best.offer(ci, jaccard(query, shingles(syn, cfg)), syn);
    }
  }
  return finish(best, graph);
}

Normalization normalize_term_with_fallback(std::string_view phrase, const OntologyGraph& graph,
                                           const NNIndex& index) {
  try {
    return normalize_term(phrase, graph, &index, NormalizeMode::kApprox);
  } catch (const OntologyError& e) {
    if (e.kind() != OntologyError::Kind::kNoCandidate) throw;
  }
  return normalize_term(phrase, graph, &index, NormalizeMode::kExact, index.params().shingle);
}

ConceptSet expand_neighborhood(const ConceptId& t, int n, const OntologyGraph& graph) {
  if (n < 0) throw std::invalid_argument("expansion level must be non-negative");
  const std::size_t start = graph.index_of(t);
  std::vector<int> dist(graph.size(), -1);
  std::deque<std::size_t> queue{start};
  dist[start] = 0;
  ConceptSet out{t};
  while (!queue.empty()) {
    std::size_t cur = queue.front();
    queue.pop_front();
    if (dist[cur] == n) continue;
    auto visit = [&](std::size_t next) {
      if (dist[next] >= 0) return;
      dist[next] = dist[cur] + 1;
      out.insert(graph.concept_at(next).id);
      queue.push_back(next);
    };
    for (std::size_t p : graph.parents_of(cur)) visit(p);
    for (std::size_t c : graph.children_of(cur)) visit(c);
  }
  return out;
}

ConceptSet expand_diagnosis(const ConceptSet& normalized, int n, const OntologyGraph& graph) {
  ConceptSet out;
  for (const auto& id : normalized) out.insert_all(expand_neighborhood(id, n, graph));
  return out;
}

int concept_depth(const ConceptId& t, const OntologyGraph& graph) {
  return graph.depth_at(graph.index_of(t));
}

double mean_normalization_similarity(const std::vector<std::pair<std::string, ConceptId>>& pairs,
                                     const OntologyGraph& graph, const ShingleConfig& cfg) {
  if (pairs.empty())
    throw OntologyError(OntologyError::Kind::kEmptyInput, "mean over an empty list is undefined");
  double sum = 0.0;
  for (const auto& [raw, id] : pairs) sum += phrase_similarity(raw, graph.get(id).preferred_label, cfg);
  return sum / static_cast<double>(pairs.size());
}

}  // namespace trialmatch
