#pragma once

// Seeded synthetic benchmark: an ontology with one branch per topic, a trial
// corpus arranged in distance shells around each topic's diagnosis, patient
// notes, graded qrels and the planted ground truth behind them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trialmatch/corpus_store.hpp"
#include "trialmatch/eval.hpp"
#include "trialmatch/labeling.hpp"
#include "trialmatch/ontology.hpp"

namespace trialmatch {

struct BenchmarkParams {
  std::size_t topics = 20;
  std::uint64_t seed = 42;
};

/// Trials per shell (is-a distance from the topic diagnosis) by planted
/// outcome. Eligible trials get qrels grade 2, excluded ones grade 1, and
/// demographic violators grade 0.
struct ShellPlan {
  int distance = 0;
  std::size_t eligible = 0;
  std::size_t excluded = 0;
  std::size_t violators = 0;

  std::size_t size() const { return eligible + excluded + violators; }
};

const std::vector<ShellPlan>& default_shell_plan();

struct TopicTruth {
  std::string topic_id;
  int age = 0;
  GenderSet gender;
  ConceptId diagnosis;
  int diagnosis_depth = 0;
};

struct TrialTruth {
  std::string trial_id;
  std::string topic_id;
  int shell = 0;
  int grade = 0;
  std::optional<std::string> violation;  // "age" or "gender"
  CoarseLabel coarse = CoarseLabel::kExcluded;
  std::vector<EligibilityLabel> fine;  // inclusion criteria first, then exclusion
};

struct Benchmark {
  std::vector<Concept> ontology;
  std::vector<RawTrial> trials;
  std::vector<Topic> topics;
  Qrels qrels;
  std::map<std::string, TopicTruth> topic_truth;
  std::map<std::string, TrialTruth> trial_truth;
};

Benchmark generate_benchmark(const BenchmarkParams& params = {});

/// Writes ontology.jsonl, corpus.jsonl, topics.jsonl, qrels.txt, truth.json
/// and a ready-to-run config.toml into `dir`.
void write_benchmark(const Benchmark& b, const std::filesystem::path& dir);

}  // namespace trialmatch
