#include "trialmatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "trialmatch/text.hpp"

namespace trialmatch {

void Qrels::add(const std::string& topic, const std::string& trial, int grade) {
  if (grade < 0 || grade > 2) {
    throw EvalError(EvalError::Kind::kBadGrade,
                    "grade " + std::to_string(grade) + " for " + topic + "/" + trial);
  }
  if (!by_topic_[topic].emplace(trial, grade).second) {
    throw EvalError(EvalError::Kind::kDuplicate, "duplicate qrels pair " + topic + "/" + trial);
  }
}

int Qrels::grade(const std::string& topic, const std::string& trial) const {
  auto t = by_topic_.find(topic);
  if (t == by_topic_.end()) return 0;
  auto it = t->second.find(trial);
  return it == t->second.end() ? 0 : it->second;
}

const TopicQrels& Qrels::topic(const std::string& topic) const {
  static const TopicQrels empty;
  auto it = by_topic_.find(topic);
  return it == by_topic_.end() ? empty : it->second;
}

std::vector<std::string> Qrels::topics() const {
  std::vector<std::string> out;
  for (const auto& [t, _] : by_topic_) out.push_back(t);
  return out;
}

std::size_t Qrels::relevant_count(const std::string& t, int threshold) const {
  std::size_t n = 0;
  for (const auto& [_, g] : topic(t)) n += g >= threshold ? 1 : 0;
  return n;
}

Qrels read_qrels(std::istream& in) {
  Qrels q;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string topic, iter, trial;
    int grade = 0;
    if (!(ls >> topic >> iter >> trial >> grade)) {
      throw EvalError(EvalError::Kind::kParse, "qrels line " + std::to_string(lineno));
    }
    q.add(topic, trial, grade);
  }
  return q;
}

Qrels read_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvalError(EvalError::Kind::kParse, "cannot open " + path.string());
  return read_qrels(in);
}

void write_qrels(std::ostream& out, const Qrels& q) {
  for (const auto& [topic, judged] : q.all())
    for (const auto& [trial, grade] : judged) out << topic << " 0 " << trial << " " << grade << "\n";
}

// ---------------------------------------------------------------------------

void RunFile::set_topic(const std::string& topic, const RankedList& ranking,
                        const std::string& tag) {
  auto& entries = by_topic_[topic];
  entries.clear();
  for (std::size_t i = 0; i < ranking.size(); ++i)
    entries.push_back({ranking[i].trial_id, i + 1, ranking[i].score, tag});
}

void RunFile::add(const std::string& topic, RunEntry e) { by_topic_[topic].push_back(std::move(e)); }

std::vector<std::string> RunFile::ranking(const std::string& topic) const {
  std::vector<std::string> out;
  auto it = by_topic_.find(topic);
  if (it == by_topic_.end()) return out;
  for (const auto& e : it->second) out.push_back(e.trial_id);
  return out;
}

void write_run(std::ostream& out, const RunFile& run) {
  for (const auto& [topic, entries] : run.topics()) {
    for (const auto& e : entries) {
      out << topic << " Q0 " << e.trial_id << " " << e.rank << " " << text::format_double(e.score)
          << " " << e.tag << "\n";
    }
  }
}

RunFile read_run(std::istream& in) {
  RunFile run;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::vector<RunEntry>> staged;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string topic, q0, trial, score_tok, tag;
    std::size_t rank = 0;
    if (!(ls >> topic >> q0 >> trial >> rank >> score_tok >> tag)) {
      throw EvalError(EvalError::Kind::kParse, "run line " + std::to_string(lineno));
    }
    char* end = nullptr;
    double score = std::strtod(score_tok.c_str(), &end);
    if (*end) throw EvalError(EvalError::Kind::kParse, "bad score on run line " + std::to_string(lineno));
    staged[topic].push_back({trial, rank, score, tag});
  }
  for (auto& [topic, entries] : staged) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    for (auto& e : entries) run.add(topic, std::move(e));
  }
  return run;
}

RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvalError(EvalError::Kind::kParse, "cannot open " + path.string());
  return read_run(in);
}

// ---------------------------------------------------------------------------

namespace {

int grade_of(const TopicQrels& q, const std::string& trial) {
  auto it = q.find(trial);
  return it == q.end() ? 0 : it->second;
}

double gain_of(int grade, Gain g) {
  return g == Gain::kLinear ? static_cast<double>(grade) : std::exp2(grade) - 1.0;
}

}  // namespace

double ndcg_at_k(const std::vector<std::string>& ranking, const TopicQrels& q, std::size_t k,
                 Gain gain) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
    dcg += gain_of(grade_of(q, ranking[i]), gain) / std::log2(static_cast<double>(i) + 2.0);
  std::vector<int> grades;
  for (const auto& [_, g] : q)
    if (g > 0) grades.push_back(g);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, grades.size()); ++i)
    idcg += gain_of(grades[i], gain) / std::log2(static_cast<double>(i) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

double precision_at_k(const std::vector<std::string>& ranking, const TopicQrels& q, std::size_t k,
                      int threshold) {
  if (k == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
    hits += grade_of(q, ranking[i]) >= threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

std::optional<double> recall_at_n(const std::vector<std::string>& ranking, const TopicQrels& q,
                                  std::size_t n, int threshold) {
  std::size_t relevant = 0;
  for (const auto& [_, g] : q) relevant += g >= threshold ? 1 : 0;
  if (relevant == 0) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(n, ranking.size()); ++i)
    hits += grade_of(q, ranking[i]) >= threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

double reciprocal_rank(const std::vector<std::string>& ranking, const TopicQrels& q,
                       int threshold) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (grade_of(q, ranking[i]) >= threshold) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const EvalConfig& cfg) {
  MetricReport rep;
  for (const auto& [topic, _] : run.topics()) {
    if (!qrels.has_topic(topic)) rep.warnings.push_back("run topic " + topic + " has no qrels; skipped");
  }
  std::map<std::string, std::pair<double, std::size_t>> sums;
  auto put = [&](const std::string& topic, const std::string& name, double v) {
    rep.per_topic[topic][name] = v;
    auto& s = sums[name];
    s.first += v;
    s.second += 1;
  };
  for (const auto& topic : qrels.topics()) {
    const TopicQrels& q = qrels.topic(topic);
    std::vector<std::string> ranking = run.ranking(topic);
    for (auto k : cfg.ndcg_at) put(topic, "ndcg@" + std::to_string(k), ndcg_at_k(ranking, q, k, cfg.gain));
    for (auto k : cfg.precision_at)
      put(topic, "p@" + std::to_string(k), precision_at_k(ranking, q, k, cfg.threshold));
    put(topic, "mrr", reciprocal_rank(ranking, q, cfg.threshold));
    for (auto n : cfg.recall_at) {
      if (auto r = recall_at_n(ranking, q, n, cfg.threshold)) put(topic, "recall@" + std::to_string(n), *r);
    }
  }
  for (const auto& [name, s] : sums) rep.macro[name] = s.second ? s.first / static_cast<double>(s.second) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

ClassificationMetrics classification_metrics(const std::vector<bool>& pred,
                                             const std::vector<bool>& truth) {
  if (pred.size() != truth.size()) {
    throw EvalError(EvalError::Kind::kLengthMismatch, "prediction and truth lengths differ");
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (truth[i]) ++fn;
    else ++tn;
  }
  ClassificationMetrics m;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.accuracy = pred.empty() ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(pred.size());
  return m;
}

double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) throw EvalError(EvalError::Kind::kLengthMismatch, "kappa inputs differ in length");
  if (a.empty()) throw EvalError(EvalError::Kind::kUndefinedKappa, "kappa of empty inputs");
  std::map<std::string, std::size_t> ca, cb;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    agree += a[i] == b[i] ? 1 : 0;
  }
  const double n = static_cast<double>(a.size());
  double po = static_cast<double>(agree) / n;
  double pe = 0.0;
  for (const auto& [label, x] : ca) {
    auto it = cb.find(label);
    if (it != cb.end()) pe += (static_cast<double>(x) / n) * (static_cast<double>(it->second) / n);
  }
  if (pe >= 1.0) throw EvalError(EvalError::Kind::kUndefinedKappa, "expected agreement is 1");
  return (po - pe) / (1.0 - pe);
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw EvalError(EvalError::Kind::kLengthMismatch, "pearson inputs differ in length");
  if (x.size() < 2) throw EvalError(EvalError::Kind::kZeroVariance, "pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw EvalError(EvalError::Kind::kZeroVariance, "zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace trialmatch
