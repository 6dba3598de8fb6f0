#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond its data types and favour obviousness over
// speed.

#include <algorithm>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "trialmatch/core_model.hpp"
#include "trialmatch/ontology.hpp"

namespace oracle {

using Members = std::bitset<trialmatch::kAgeMax + 1>;

inline Members members(const trialmatch::AgeSet& s) {
  Members m;
  for (int a = trialmatch::kAgeMin; a <= trialmatch::kAgeMax; ++a)
    if (s.contains(a)) m.set(a);
  return m;
}

inline Members members(const std::vector<trialmatch::AgeInterval>& raw) {
  Members m;
  for (const auto& iv : raw)
    for (int a = iv.lo; a <= iv.hi; ++a) m.set(a);
  return m;
}

inline std::vector<trialmatch::AgeInterval> random_intervals(std::mt19937_64& rng, int max_count) {
  std::uniform_int_distribution<int> count(0, max_count);
  std::uniform_int_distribution<int> age(trialmatch::kAgeMin, trialmatch::kAgeMax);
  std::vector<trialmatch::AgeInterval> out;
  int n = count(rng);
  for (int i = 0; i < n; ++i) {
    int a = age(rng), b = age(rng);
    out.push_back({std::min(a, b), std::max(a, b)});
  }
  return out;
}

// --- ontology ---------------------------------------------------------------

/// Random DAG: node k may only take parents among nodes created before it,
/// and ids are shuffled so id order says nothing about topology.
inline std::vector<trialmatch::Concept> random_dag(std::mt19937_64& rng, int nodes, int max_parents) {
  std::vector<int> perm(nodes);
  for (int i = 0; i < nodes; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  auto id_of = [&](int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "N%05d", perm[k]);
    return std::string(buf);
  };
  std::vector<trialmatch::Concept> out;
  for (int k = 0; k < nodes; ++k) {
    trialmatch::Concept c;
    c.id = id_of(k);
    c.preferred_label = "concept " + c.id;
    if (k > 0) {
      std::uniform_int_distribution<int> np(0, max_parents);
      std::uniform_int_distribution<int> pick(0, k - 1);
      std::set<int> ps;
      int want = np(rng);
      for (int i = 0; i < want; ++i) ps.insert(pick(rng));
      for (int p : ps) c.parents.push_back(id_of(p));
    }
    out.push_back(std::move(c));
  }
  return out;
}

/// Undirected is-a BFS limited to n hops, on the raw concept list.
inline std::set<std::string> bfs_neighbourhood(const std::vector<trialmatch::Concept>& cs,
                                               const std::string& start, int n) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& c : cs) {
    adj[c.id];
    for (const auto& p : c.parents) {
      adj[c.id].push_back(p);
      adj[p].push_back(c.id);
    }
  }
  std::map<std::string, int> dist{{start, 0}};
  std::deque<std::string> q{start};
  while (!q.empty()) {
    std::string u = q.front();
    q.pop_front();
    if (dist[u] == n) continue;
    for (const auto& v : adj[u])
      if (!dist.count(v)) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
  }
  std::set<std::string> out;
  for (const auto& [k, d] : dist) out.insert(k);
  return out;
}

/// Length of the shortest upward path to a root, by enumerating every path.
inline int depth_all_paths(const std::vector<trialmatch::Concept>& cs, const std::string& id) {
  std::map<std::string, const trialmatch::Concept*> by_id;
  for (const auto& c : cs) by_id[c.id] = &c;
  int best = 1 << 30;
  std::vector<std::pair<std::string, int>> stack{{id, 0}};
  while (!stack.empty()) {
    auto [u, d] = stack.back();
    stack.pop_back();
    const auto& ps = by_id.at(u)->parents;
    if (ps.empty()) best = std::min(best, d);
    for (const auto& p : ps) stack.push_back({p, d + 1});
  }
  return best;
}

// --- retrieval --------------------------------------------------------------

struct ScanHit {
  std::string id;
  double ov;
};

/// Every trial with a non-empty condition intersection, ov desc then id asc.
inline std::vector<ScanHit> exhaustive_ov(const trialmatch::ConceptSet& diag,
                                          const std::vector<trialmatch::TrialRecord>& trials,
                                          std::size_t k) {
  std::vector<ScanHit> hits;
  for (const auto& t : trials) {
    std::size_t inter = 0;
    for (const auto& c : t.condition_norm)
      if (diag.contains(c)) ++inter;
    if (inter == 0) continue;
    double denom = static_cast<double>(std::min(diag.size(), t.condition_norm.size()));
    hits.push_back({t.id, static_cast<double>(inter) / denom});
  }
  std::sort(hits.begin(), hits.end(), [](const ScanHit& a, const ScanHit& b) {
    if (a.ov != b.ov) return a.ov > b.ov;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

// --- metrics ----------------------------------------------------------------

inline int grade_of(const std::map<std::string, int>& q, const std::string& id) {
  auto it = q.find(id);
  return it == q.end() ? 0 : it->second;
}

inline double naive_ndcg(const std::vector<std::string>& ranking,
                         const std::map<std::string, int>& q, std::size_t k, bool exponential) {
  auto gain = [&](int g) { return exponential ? std::pow(2.0, g) - 1.0 : static_cast<double>(g); };
  double dcg = 0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i)
    dcg += gain(grade_of(q, ranking[i])) / std::log2(static_cast<double>(i) + 2.0);
  std::vector<int> grades;
  for (const auto& [id, g] : q) grades.push_back(g);
  std::sort(grades.rbegin(), grades.rend());
  double idcg = 0;
  for (std::size_t i = 0; i < grades.size() && i < k; ++i)
    idcg += gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
  return idcg > 0 ? dcg / idcg : 0.0;
}

inline double naive_precision(const std::vector<std::string>& ranking,
                              const std::map<std::string, int>& q, std::size_t k, int thr) {
  int hits = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (i < ranking.size() && grade_of(q, ranking[i]) >= thr) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline std::optional<double> naive_recall(const std::vector<std::string>& ranking,
                                          const std::map<std::string, int>& q, std::size_t n,
                                          int thr) {
  int total = 0, hits = 0;
  for (const auto& [id, g] : q)
    if (g >= thr) ++total;
  if (total == 0) return std::nullopt;
  for (std::size_t i = 0; i < ranking.size() && i < n; ++i)
    if (grade_of(q, ranking[i]) >= thr) ++hits;
  return static_cast<double>(hits) / total;
}

inline double naive_rr(const std::vector<std::string>& ranking, const std::map<std::string, int>& q,
                       int thr) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (grade_of(q, ranking[i]) >= thr) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

}  // namespace oracle
