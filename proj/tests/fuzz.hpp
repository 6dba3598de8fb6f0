#pragma once

// Random (run, qrels) instances for metric cross-checks.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "trialmatch/eval.hpp"

namespace fuzz {

struct Instance {
  trialmatch::RunFile run;
  trialmatch::Qrels qrels;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t topics) {
  Instance in;
  std::uniform_int_distribution<int> pool_size(1, 80), grade(0, 2), skew(0, 9);
  for (std::size_t t = 0; t < topics; ++t) {
    std::string topic = "q" + std::to_string(t);
    int pool = pool_size(rng);
    std::vector<std::string> docs;
    for (int d = 0; d < pool; ++d) docs.push_back("NCT" + std::to_string(1000 + d));
    // some topics have no positives at all, some are absent from the qrels
    bool all_zero = skew(rng) == 0;
    if (skew(rng) != 0) {
      for (const auto& d : docs)
        if (rng() % 3 != 0) in.qrels.add(topic, d, all_zero ? 0 : grade(rng));
    }
    if (skew(rng) == 0) continue;  // topic missing from the run
    std::shuffle(docs.begin(), docs.end(), rng);
    std::size_t len = rng() % (docs.size() + 1);
    for (std::size_t i = 0; i < len; ++i)
      in.run.add(topic, {docs[i], i + 1, 1.0 / static_cast<double>(i + 1), "fuzz"});
  }
  // a run topic without qrels
  if (skew(rng) == 0) in.run.add("orphan", {"NCT1", 1, 1.0, "fuzz"});
  return in;
}

/// Macro averages computed with the naive metric functions. Recall skips
/// topics without relevant trials; every other metric averages over all
/// qrels topics.
inline std::map<std::string, double> naive_macro(const Instance& in, int thr, bool exponential) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& [topic, q] : in.qrels.all()) {
    std::vector<trialmatch::RunEntry> entries;
    auto it = in.run.topics().find(topic);
    if (it != in.run.topics().end()) entries = it->second;
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.rank < b.rank; });
    std::vector<std::string> ranking;
    for (const auto& e : entries) ranking.push_back(e.trial_id);
    auto add = [&](const std::string& name, double v) {
      acc[name].first += v;
      acc[name].second += 1;
    };
    add("ndcg@10", oracle::naive_ndcg(ranking, q, 10, exponential));
    add("p@10", oracle::naive_precision(ranking, q, 10, thr));
    add("p@25", oracle::naive_precision(ranking, q, 25, thr));
    add("mrr", oracle::naive_rr(ranking, q, thr));
    for (std::size_t n : {10, 25, 500})
      if (auto r = oracle::naive_recall(ranking, q, n, thr)) add("recall@" + std::to_string(n), *r);
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

}  // namespace fuzz
