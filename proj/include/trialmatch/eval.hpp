#pragma once

// TREC-style evaluation: qrels and run files, ranking metrics, and the
// agreement statistics used in the analyses.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trialmatch/retrieval.hpp"

namespace trialmatch {

class EvalError : public std::runtime_error {
 public:
  enum class Kind { kLengthMismatch, kZeroVariance, kUndefinedKappa, kParse, kDuplicate, kBadGrade };
  EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// trial id -> grade (0 not relevant, 1 excluded, 2 eligible) for one topic.
using TopicQrels = std::map<std::string, int>;

class Qrels {
 public:
  /// Throws kDuplicate for a repeated pair and kBadGrade outside {0,1,2}.
  void add(const std::string& topic, const std::string& trial, int grade);
  int grade(const std::string& topic, const std::string& trial) const;
  const TopicQrels& topic(const std::string& topic) const;
  bool has_topic(const std::string& topic) const { return by_topic_.count(topic) != 0; }
  std::vector<std::string> topics() const;
  std::size_t relevant_count(const std::string& topic, int threshold) const;
  const std::map<std::string, TopicQrels>& all() const { return by_topic_; }

 private:
  std::map<std::string, TopicQrels> by_topic_;
};

/// Whitespace-separated "topic 0 trial grade" lines.
Qrels read_qrels(std::istream& in);
Qrels read_qrels(const std::filesystem::path& path);
void write_qrels(std::ostream& out, const Qrels& q);

struct RunEntry {
  std::string trial_id;
  std::size_t rank = 0;
  double score = 0.0;
  std::string tag;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

/// Per-topic rankings, entries ordered by rank.
class RunFile {
 public:
  void set_topic(const std::string& topic, const RankedList& ranking, const std::string& tag);
  void add(const std::string& topic, RunEntry e);
  const std::map<std::string, std::vector<RunEntry>>& topics() const { return by_topic_; }
  std::vector<std::string> ranking(const std::string& topic) const;

  friend bool operator==(const RunFile&, const RunFile&) = default;

 private:
  std::map<std::string, std::vector<RunEntry>> by_topic_;
};

/// "topic Q0 trial rank score tag" lines; scores in shortest round-trip form.
void write_run(std::ostream& out, const RunFile& run);
RunFile read_run(std::istream& in);
RunFile read_run(const std::filesystem::path& path);

enum class Gain { kLinear, kExponential };

/// Missing qrels entries count as grade 0; positions beyond the ranking
/// count as non-relevant. 0 when the topic has no positive grade.
double ndcg_at_k(const std::vector<std::string>& ranking, const TopicQrels& q, std::size_t k,
                 Gain gain = Gain::kLinear);
double precision_at_k(const std::vector<std::string>& ranking, const TopicQrels& q, std::size_t k,
                      int threshold = 2);
/// nullopt when the topic has no relevant trial at the threshold.
std::optional<double> recall_at_n(const std::vector<std::string>& ranking, const TopicQrels& q,
                                  std::size_t n, int threshold = 2);
double reciprocal_rank(const std::vector<std::string>& ranking, const TopicQrels& q,
                       int threshold = 2);

struct EvalConfig {
  std::vector<std::size_t> ndcg_at{10};
  std::vector<std::size_t> precision_at{10, 25};
  std::vector<std::size_t> recall_at{10, 25, 500};
  int threshold = 2;
  Gain gain = Gain::kLinear;
};

struct MetricReport {
  std::map<std::string, std::map<std::string, double>> per_topic;  // metric name -> value
  std::map<std::string, double> macro;
  std::vector<std::string> warnings;
};

/// Scores every qrels topic (absent run topics score zero); run topics
/// without qrels are skipped with a warning. Undefined recall values are left
/// out of the per-topic map and the macro mean.
MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const EvalConfig& cfg = {});

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive truths
};

/// Positive class = true (Eligible). Throws kLengthMismatch.
ClassificationMetrics classification_metrics(const std::vector<bool>& pred,
                                             const std::vector<bool>& truth);

/// (p_o - p_e) / (1 - p_e). Throws kLengthMismatch, kUndefinedKappa when
/// p_e = 1.
double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Sample correlation. Throws kLengthMismatch, kZeroVariance (also for
/// fewer than two points).
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace trialmatch
